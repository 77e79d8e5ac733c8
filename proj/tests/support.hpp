#pragma once

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fnbo/gp.hpp"
#include "fnbo/netposterior.hpp"
#include "fnbo/network.hpp"
#include "fnbo/random.hpp"

namespace fnbo::testing {

// Small seeded generator for property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double a = 0.0, double b = 1.0) { return boost::random::uniform_real_distribution<double>(a, b)(rng); }
  int integer(int a, int b) { return boost::random::uniform_int_distribution<int>(a, b)(rng); }
  double normal() { return boost::random::normal_distribution<double>()(rng); }
  bool coin(double p = 0.5) { return uniform() < p; }

  Vector vec(Eigen::Index n, double a = 0.0, double b = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(a, b);
    return v;
  }
  Matrix mat(Eigen::Index r, Eigen::Index c, double a = 0.0, double b = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(a, b);
    return m;
  }

  Rng rng;
};

// Random valid network: every node has at least one input and every
// non-final node feeds some later node.
inline NetworkSpec random_network(Gen& g, int max_nodes = 5, int max_dim = 4) {
  NetworkSpec s;
  s.num_nodes = static_cast<std::size_t>(g.integer(1, max_nodes));
  const auto d = static_cast<std::size_t>(g.integer(1, max_dim));
  for (std::size_t i = 0; i < d; ++i) {
    const double a = g.uniform(-3.0, 1.0);
    s.domain.push_back(Interval{a, a + g.uniform(0.5, 4.0)});
  }
  s.parents.resize(s.num_nodes);
  s.ext_inputs.resize(s.num_nodes);
  for (std::size_t k = 0; k < s.num_nodes; ++k) {
    for (std::size_t j = 0; j < k; ++j)
      if (g.coin(0.4)) s.parents[k].push_back(j);
    for (std::size_t i = 0; i < d; ++i)
      if (g.coin(0.4)) s.ext_inputs[k].push_back(i);
    if (s.parents[k].empty() && s.ext_inputs[k].empty()) s.ext_inputs[k].push_back(static_cast<std::size_t>(g.integer(0, static_cast<int>(d) - 1)));
  }
  std::vector<bool> consumed(s.num_nodes, false);
  for (std::size_t k = 0; k < s.num_nodes; ++k)
    for (std::size_t j : s.parents[k]) consumed[j] = true;
  for (std::size_t j = 0; j + 1 < s.num_nodes; ++j)
    if (!consumed[j]) s.parents.back().push_back(j);
  std::sort(s.parents.back().begin(), s.parents.back().end());
  s.parent_ranges.resize(s.num_nodes);
  for (std::size_t k = 0; k < s.num_nodes; ++k)
    for (std::size_t i = 0; i < s.parents[k].size(); ++i) s.parent_ranges[k].push_back(Interval{-50.0, 50.0});
  for (std::size_t k = 0; k < s.num_nodes; ++k) s.costs.push_back(g.uniform(0.5, 5.0));
  return s;
}

// Textbook kernels written out independently of the library.
inline double matern52(double r) { return (1.0 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r); }
inline double squared_exponential(double r) { return std::exp(-0.5 * r * r); }

inline Matrix oracle_kernel(const KernelConfig& cfg, const Matrix& a, const Matrix& b) {
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double r2 = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double t = (a(i, c) - b(j, c)) / cfg.lengthscales[c];
        r2 += t * t;
      }
      const double r = std::sqrt(r2);
      k(i, j) = cfg.outputscale * (cfg.family == KernelFamily::Matern52 ? matern52(r) : squared_exponential(r));
    }
  }
  return k;
}

inline std::vector<Interval> unit_box(std::size_t d) { return std::vector<Interval>(d, Interval{0.0, 1.0}); }

inline double sample_sd(const Vector& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

// Node-k training inputs (rows) assembled from full-network observations.
inline Matrix node_data(const NetworkSpec& s, std::size_t k, const Matrix& x, const Matrix& y) {
  Matrix z(x.rows(), static_cast<Eigen::Index>(s.node_input_dim(k)));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Vector parents(static_cast<Eigen::Index>(s.parents[k].size()));
    for (std::size_t j = 0; j < s.parents[k].size(); ++j) parents[static_cast<Eigen::Index>(j)] = y(i, static_cast<Eigen::Index>(s.parents[k][j]));
    z.row(i) = assemble_node_input(s, k, parents, x.row(i).transpose()).concat().transpose();
  }
  return z;
}

// Posterior with every node built at fixed hyperparameters (Matern-5/2,
// common unit-box lengthscale).
inline NetworkPosterior fixed_posterior(const NetworkSpec& s, const Matrix& x, const Matrix& y, double ls,
                                        double os = 1.0, std::size_t samples = 64, std::uint64_t seed = 0) {
  NetworkPosterior post;
  post.spec = s;
  for (std::size_t k = 0; k < s.num_nodes; ++k) {
    KernelConfig cfg;
    cfg.lengthscales = Vector::Constant(static_cast<Eigen::Index>(s.node_input_dim(k)), ls);
    cfg.outputscale = os;
    post.nodes.push_back(std::make_shared<GPState>(
        GPState::build(node_data(s, k, x, y), y.col(static_cast<Eigen::Index>(k)), s.node_bounds(k), cfg)));
  }
  post.refresh_base(samples, seed);
  return post;
}

// Posterior with fitted hyperparameters.
inline NetworkPosterior fitted_posterior(const NetworkSpec& s, const Matrix& x, const Matrix& y,
                                         std::size_t samples = 64, std::uint64_t seed = 0) {
  NetworkPosterior post;
  post.spec = s;
  for (std::size_t k = 0; k < s.num_nodes; ++k) {
    FitOptions opt;
    opt.seed = seed + k;
    post.nodes.push_back(std::make_shared<GPState>(
        fit(node_data(s, k, x, y), y.col(static_cast<Eigen::Index>(k)), s.node_bounds(k), opt)));
  }
  post.refresh_base(samples, seed);
  return post;
}

// Full-network observations of `funcs` at `n` uniform points.
inline std::pair<Matrix, Matrix> observe(const NetworkSpec& s, std::span<const NodeFunction> funcs, Gen& g,
                                         Eigen::Index n) {
  Matrix x(n, static_cast<Eigen::Index>(s.input_dim()));
  Matrix y(n, static_cast<Eigen::Index>(s.num_nodes));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < s.input_dim(); ++j) x(i, static_cast<Eigen::Index>(j)) = g.uniform(s.domain[j].lower, s.domain[j].upper);
    y.row(i) = evaluate_network(s, funcs, x.row(i).transpose()).transpose();
  }
  return {x, y};
}

// Two-node chain y2 = f2(y1) with y1 = f1(x) on x in [0, 1].
inline NetworkSpec chain_spec(double y1_lo = -2.0, double y1_hi = 2.0) {
  NetworkSpec s;
  s.num_nodes = 2;
  s.parents = {{}, {0}};
  s.ext_inputs = {{0}, {}};
  s.domain = {Interval{0.0, 1.0}};
  s.parent_ranges = {{}, {Interval{y1_lo, y1_hi}}};
  s.costs = {1.0, 1.0};
  return s;
}

inline NetworkSpec single_node_spec(std::size_t d = 1) {
  NetworkSpec s;
  s.num_nodes = 1;
  s.parents = {{}};
  s.ext_inputs.resize(1);
  for (std::size_t i = 0; i < d; ++i) s.ext_inputs[0].push_back(i);
  s.domain = unit_box(d);
  s.parent_ranges = {{}};
  s.costs = {1.0};
  return s;
}

}  // namespace fnbo::testing
