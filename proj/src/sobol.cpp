#include <boost/math/distributions/normal.hpp>
#include <boost/random/sobol.hpp>

#include <bit>
#include <cmath>

#include "fnbo/optim.hpp"
#include "fnbo/random.hpp"

namespace fnbo {

namespace {

std::uint32_t reverse_bits(std::uint32_t x) {
  x = ((x >> 1) & 0x55555555u) | ((x & 0x55555555u) << 1);
  x = ((x >> 2) & 0x33333333u) | ((x & 0x33333333u) << 2);
  x = ((x >> 4) & 0x0f0f0f0fu) | ((x & 0x0f0f0f0fu) << 4);
  x = ((x >> 8) & 0x00ff00ffu) | ((x & 0x00ff00ffu) << 8);
  return (x >> 16) | (x << 16);
}

// Hash-based nested uniform scrambling (Laine-Karras style permutation applied
// to bit-reversed values, so every bit is flipped depending on the higher bits).
std::uint32_t owen_scramble(std::uint32_t x, std::uint32_t seed) {
  x = reverse_bits(x);
  x += seed;
  x ^= x * 0x6c50b47cu;
  x ^= x * 0xb82f1e52u;
  x ^= x * 0xc7afe638u;
  x ^= x * 0x8d22f6e6u;
  return reverse_bits(x);
}

}  // namespace

Matrix sobol_points(std::size_t dim, std::size_t count, std::uint64_t seed) {
  Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  if (count == 0 || dim == 0) return out;
  std::vector<std::uint32_t> dim_seeds(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    dim_seeds[j] = static_cast<std::uint32_t>(derive_seed(seed, {0x50b0u, j}) >> 32);
  }
  // boost's engine starts at the second Sobol point; row 0 is the origin.
  boost::random::sobol_engine<std::uint32_t, 32> engine(dim);
  constexpr double kScale = 1.0 / 4294967296.0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const std::uint32_t raw = i == 0 ? 0u : engine();
      const std::uint32_t v = owen_scramble(raw, dim_seeds[j]);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (static_cast<double>(v) + 0.5) * kScale;
    }
  }
  return out;
}

Matrix scale_to_box(const Matrix& unit, const std::vector<Interval>& bounds) {
  Matrix out = unit;
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    const auto& iv = bounds[static_cast<std::size_t>(j)];
    out.col(j) = (unit.col(j).array() * iv.width() + iv.lower).matrix();
  }
  return out;
}

Vector project_to_box(const Vector& x, const std::vector<Interval>& bounds) {
  Vector out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = bounds[static_cast<std::size_t>(i)].clamp(x[i]);
  return out;
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace fnbo
