#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fnbo/network.hpp"

namespace fnbo {

enum class KernelFamily { Matern52, SquaredExponential };

/// Kernel hyperparameters. Lengthscales live in unit-box input coordinates and
/// the outputscale in standardized target units.
struct KernelConfig {
  KernelFamily family = KernelFamily::Matern52;
  Vector lengthscales;
  double outputscale = 1.0;
  double jitter = 1e-6;

  void check() const;
};

/// k(a_i, b_j) for all rows of `a` and `b` (inputs already normalized).
Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& a, const Matrix& b);

/// Affine maps between the raw node-input box and the unit box, and between
/// raw targets and standardized targets.
struct InputTransform {
  Vector lower;
  Vector width;

  static InputTransform from_bounds(const std::vector<Interval>& bounds);
  static InputTransform identity(std::size_t dim);
  Matrix to_unit(const Matrix& raw) const;
  Vector to_unit(const Vector& raw) const;
};

struct TargetTransform {
  double mean = 0.0;
  double scale = 1.0;

  static TargetTransform standardize(const Vector& targets);
};

struct Posterior {
  Vector mean;
  Matrix cov;
};

/// Quantities shared by every fantasy at one candidate input z: the whitened
/// cross-covariance w = L^{-1} k(X, z), and Sigma(z,z) + jitter.
struct FantasyGeometry {
  Vector z_unit;
  Vector w;
  double denom = 1.0;     // standardized units
  double mean_z = 0.0;    // raw units
  double sd_z = 0.0;      // raw posterior standard deviation at z
  bool duplicate = false; // z coincides with a training input
};

/// Posterior of one node's GP. Immutable once built.
class GPState {
 public:
  /// Builds caches for fixed hyperparameters; escalates jitter (x10 steps, up to
  /// 1e-4) if the Cholesky factorization fails.
  static GPState build(const Matrix& inputs, const Vector& targets, const std::vector<Interval>& bounds,
                       const KernelConfig& cfg, std::optional<TargetTransform> targets_tf = std::nullopt);
  static GPState build(const Matrix& inputs, const Vector& targets, const InputTransform& in_tf,
                       const KernelConfig& cfg, const TargetTransform& out_tf);

  /// GP with no data, constant prior mean.
  static GPState prior(const InputTransform& in_tf, const KernelConfig& cfg, double prior_mean = 0.0,
                       double target_scale = 1.0);

  const KernelConfig& config() const { return cfg_; }
  const InputTransform& input_transform() const { return in_tf_; }
  const TargetTransform& target_transform() const { return out_tf_; }
  double prior_mean() const { return out_tf_.mean; }
  /// Prior variance in raw target units.
  double outputscale_raw() const { return cfg_.outputscale * out_tf_.scale * out_tf_.scale; }
  double jitter() const { return jitter_; }

  std::size_t size() const { return static_cast<std::size_t>(x_unit_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(in_tf_.lower.size()); }
  Matrix train_inputs() const;
  const Matrix& train_inputs_unit() const { return x_unit_; }
  const Vector& train_targets() const { return targets_; }
  const Matrix& chol() const { return chol_; }
  const Vector& alpha() const { return alpha_; }

  Posterior posterior(const Matrix& queries) const;
  /// Mean and (optionally) marginal variance, raw units; rows of `queries` are raw inputs.
  void marginals(const Matrix& queries, Vector& mean, Vector* var) const;
  Vector mean(const Matrix& queries) const;

  /// Posterior after one extra noiseless observation; the original is unchanged.
  GPState fantasize(const Vector& z, double y) const;

  FantasyGeometry fantasy_geometry(const Vector& z) const;
  /// Base marginals at `queries` plus the standardized posterior cross-covariance
  /// with the candidate in `geom`.
  void marginals_with_cross(const Matrix& queries, const FantasyGeometry& geom, Vector& mean, Vector& var,
                            Vector& cross) const;

 private:
  void factorize();
  void solve_alpha(const Matrix& k);

  KernelConfig cfg_;
  InputTransform in_tf_;
  TargetTransform out_tf_;
  Matrix x_unit_;
  Vector targets_;
  Vector y_std_;
  Matrix chol_;
  Vector alpha_;
  double jitter_ = 1e-6;
};

/// Log marginal likelihood of standardized targets at unit-box inputs.
/// `grad`, when given, receives d/d(log lengthscale_1..d, log outputscale).
double log_marginal_likelihood(const Matrix& x_unit, const Vector& y_std, const KernelConfig& cfg,
                               Vector* grad = nullptr);

struct FitOptions {
  KernelFamily family = KernelFamily::Matern52;
  int restarts = 5;
  int max_evals = 60;
  double jitter = 1e-6;
  double lengthscale_min = 5e-2, lengthscale_max = 20.0;
  double outputscale_min = 5e-2, outputscale_max = 20.0;
  std::optional<KernelConfig> warm_start;
  std::uint64_t seed = 0;
};

/// Maximizes the log marginal likelihood over ARD lengthscales and outputscale.
GPState fit(const Matrix& inputs, const Vector& targets, const std::vector<Interval>& bounds,
            const FitOptions& options = {});

/// A fixed function drawn (approximately) from a GP: random Fourier features
/// for the prior plus an exact pathwise (Matheron) data correction.
class PathSample {
 public:
  double operator()(const Vector& x) const;
  Vector evaluate(const Matrix& points) const;

  friend PathSample sample_path(const GPState& state, std::uint64_t seed, int num_features);
  friend PathSample sample_prior_path(KernelFamily family, const Vector& lengthscales, double outputscale,
                                      std::uint64_t seed, int num_features);

 private:
  KernelConfig cfg_;
  InputTransform in_tf_;
  TargetTransform out_tf_;
  Matrix omega_;   // features x dim
  Vector phase_;
  Vector weights_; // already multiplied by sqrt(2 s / F)
  Matrix x_unit_;
  Vector correction_;
};

PathSample sample_path(const GPState& state, std::uint64_t seed, int num_features = 1024);

/// Prior draw on raw inputs (no normalization), used for synthetic ground truths.
PathSample sample_prior_path(KernelFamily family, const Vector& lengthscales, double outputscale,
                             std::uint64_t seed, int num_features = 4096);

}  // namespace fnbo
