#include "fnbo/gp.hpp"

#include <Eigen/Cholesky>

#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fnbo/optim.hpp"
#include "fnbo/random.hpp"

namespace fnbo {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917;
constexpr double kMaxJitter = 1e-4;
constexpr double kDuplicateTol = 1e-12;

// Squared scaled distances, computed by differences rather than the
// |a|^2 + |b|^2 - 2ab expansion so that coincident points give exactly 0.
// Differencing before scaling keeps nearby pairs exact.
Matrix scaled_sqdist(const Matrix& a, const Matrix& b, const Vector& ls) {
  Matrix d2 = Matrix::Zero(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const Eigen::ArrayXd ca = a.col(j).array();
    for (Eigen::Index c = 0; c < b.rows(); ++c) d2.col(c).array() += ((ca - b(c, j)) / ls[j]).square();
  }
  return d2;
}

Matrix kernel_from_sqdist(const KernelConfig& cfg, const Matrix& d2) {
  // Scalar std::exp: the packet exp loses a few ulps, which ill-conditioned
  // training covariances amplify.
  const auto exp = [](double v) { return std::exp(v); };
  if (cfg.family == KernelFamily::SquaredExponential) {
    return (cfg.outputscale * (-0.5 * d2.array()).unaryExpr(exp)).matrix();
  }
  const Eigen::ArrayXXd r = d2.array().sqrt();
  return (cfg.outputscale * (1.0 + kSqrt5 * r + (5.0 / 3.0) * d2.array()) * (-kSqrt5 * r).unaryExpr(exp)).matrix();
}

bool has_duplicate_rows(const Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      if ((x.row(i) - x.row(j)).squaredNorm() <= kDuplicateTol * kDuplicateTol) return true;
    }
  }
  return false;
}

}  // namespace

void KernelConfig::check() const {
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0)) throw Error(ErrorCode::InvalidConfig, "lengthscales must be positive");
  }
  if (!(outputscale > 0.0)) throw Error(ErrorCode::InvalidConfig, "outputscale must be positive");
  if (!(jitter >= 1e-12)) throw Error(ErrorCode::InvalidConfig, "jitter must be at least 1e-12");
}

Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& a, const Matrix& b) {
  return kernel_from_sqdist(cfg, scaled_sqdist(a, b, cfg.lengthscales));
}

InputTransform InputTransform::from_bounds(const std::vector<Interval>& bounds) {
  InputTransform tf;
  tf.lower.resize(static_cast<Eigen::Index>(bounds.size()));
  tf.width.resize(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    tf.lower[static_cast<Eigen::Index>(i)] = bounds[i].lower;
    tf.width[static_cast<Eigen::Index>(i)] = bounds[i].width();
  }
  return tf;
}

InputTransform InputTransform::identity(std::size_t dim) {
  return {Vector::Zero(static_cast<Eigen::Index>(dim)), Vector::Ones(static_cast<Eigen::Index>(dim))};
}

Matrix InputTransform::to_unit(const Matrix& raw) const {
  if (raw.cols() != lower.size()) throw Error(ErrorCode::DimensionMismatch, "query dimension does not match GP");
  return ((raw.rowwise() - lower.transpose()).array().rowwise() / width.transpose().array()).matrix();
}

Vector InputTransform::to_unit(const Vector& raw) const {
  if (raw.size() != lower.size()) throw Error(ErrorCode::DimensionMismatch, "input dimension does not match GP");
  return ((raw - lower).array() / width.array()).matrix();
}

TargetTransform TargetTransform::standardize(const Vector& targets) {
  TargetTransform tf;
  const auto n = targets.size();
  if (n == 0) return tf;
  tf.mean = targets.mean();
  if (n > 1) {
    const double var = (targets.array() - tf.mean).square().sum() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(tf.mean))) tf.scale = sd;
  }
  return tf;
}

GPState GPState::build(const Matrix& inputs, const Vector& targets, const std::vector<Interval>& bounds,
                       const KernelConfig& cfg, std::optional<TargetTransform> targets_tf) {
  return build(inputs, targets, InputTransform::from_bounds(bounds), cfg,
               targets_tf ? *targets_tf : TargetTransform::standardize(targets));
}

GPState GPState::build(const Matrix& inputs, const Vector& targets, const InputTransform& in_tf,
                       const KernelConfig& cfg, const TargetTransform& out_tf) {
  cfg.check();
  if (inputs.rows() != targets.size()) throw Error(ErrorCode::DimensionMismatch, "inputs and targets differ in count");
  if (cfg.lengthscales.size() != in_tf.lower.size() || inputs.cols() != in_tf.lower.size()) {
    throw Error(ErrorCode::DimensionMismatch, "lengthscales, bounds and inputs must share a dimension");
  }
  GPState s;
  s.cfg_ = cfg;
  s.in_tf_ = in_tf;
  s.out_tf_ = out_tf;
  s.x_unit_ = in_tf.to_unit(inputs);
  s.targets_ = targets;
  s.y_std_ = (targets.array() - out_tf.mean) / out_tf.scale;
  s.factorize();
  return s;
}

GPState GPState::prior(const InputTransform& in_tf, const KernelConfig& cfg, double prior_mean,
                       double target_scale) {
  const auto d = in_tf.lower.size();
  return build(Matrix(0, d), Vector(0), in_tf, cfg, TargetTransform{prior_mean, target_scale});
}

void GPState::factorize() {
  const Eigen::Index n = x_unit_.rows();
  jitter_ = cfg_.jitter;
  if (n == 0) {
    chol_.resize(0, 0);
    alpha_.resize(0);
    return;
  }
  const Matrix k = kernel_matrix(cfg_, x_unit_, x_unit_);
  for (double jit = cfg_.jitter;; jit *= 10.0) {
    Eigen::LLT<Matrix> llt(k + jit * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
      chol_ = llt.matrixL();
      jitter_ = jit;
      break;
    }
    if (jit * 10.0 > kMaxJitter * (1.0 + 1e-9)) {
      throw Error(ErrorCode::SingularCovariance, "training covariance not positive definite up to jitter 1e-4");
    }
  }
  solve_alpha(k);
}

// Cholesky solve plus one step of iterative refinement against the
// unjittered kernel matrix k.
void GPState::solve_alpha(const Matrix& k) {
  alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_std_);
  chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
  Vector resid = y_std_ - k * alpha_ - jitter_ * alpha_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(resid);
  chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(resid);
  alpha_ += resid;
}

Matrix GPState::train_inputs() const {
  return ((x_unit_.array().rowwise() * in_tf_.width.transpose().array()).rowwise() +
          in_tf_.lower.transpose().array())
      .matrix();
}

void GPState::marginals(const Matrix& queries, Vector& mean, Vector* var) const {
  const Matrix q = in_tf_.to_unit(queries);
  const double scale = out_tf_.scale;
  if (size() == 0) {
    mean = Vector::Constant(q.rows(), out_tf_.mean);
    if (var) *var = Vector::Constant(q.rows(), outputscale_raw());
    return;
  }
  const Matrix ks = kernel_matrix(cfg_, q, x_unit_);
  mean = ((ks * alpha_).array() * scale + out_tf_.mean).matrix();
  if (var) {
    const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks.transpose());
    *var = ((cfg_.outputscale - v.colwise().squaredNorm().transpose().array()).max(0.0) * scale * scale).matrix();
  }
}

Vector GPState::mean(const Matrix& queries) const {
  Vector m;
  marginals(queries, m, nullptr);
  return m;
}

Posterior GPState::posterior(const Matrix& queries) const {
  const Matrix q = in_tf_.to_unit(queries);
  const double s2 = out_tf_.scale * out_tf_.scale;
  Posterior p;
  Matrix prior_cov = kernel_matrix(cfg_, q, q);
  if (size() == 0) {
    p.mean = Vector::Constant(q.rows(), out_tf_.mean);
    p.cov = prior_cov * s2;
    return p;
  }
  const Matrix ks = kernel_matrix(cfg_, q, x_unit_);
  p.mean = ((ks * alpha_).array() * out_tf_.scale + out_tf_.mean).matrix();
  const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks.transpose());
  p.cov = (prior_cov - v.transpose() * v) * s2;
  p.cov = (0.5 * (p.cov + p.cov.transpose())).eval();
  return p;
}

FantasyGeometry GPState::fantasy_geometry(const Vector& z) const {
  FantasyGeometry g;
  g.z_unit = in_tf_.to_unit(z);
  const Matrix zrow = g.z_unit.transpose();
  double prior_var = cfg_.outputscale;
  if (size() == 0) {
    g.w.resize(0);
    g.mean_z = out_tf_.mean;
  } else {
    const Vector kz = kernel_matrix(cfg_, x_unit_, zrow).col(0);
    g.w = chol_.triangularView<Eigen::Lower>().solve(kz);
    g.mean_z = out_tf_.mean + out_tf_.scale * kz.dot(alpha_);
    prior_var -= g.w.squaredNorm();
    for (Eigen::Index i = 0; i < x_unit_.rows(); ++i) {
      if ((x_unit_.row(i) - zrow).squaredNorm() <= kDuplicateTol * kDuplicateTol) g.duplicate = true;
    }
  }
  const double post_var = std::max(prior_var, 0.0);
  g.denom = post_var + jitter_;
  g.sd_z = out_tf_.scale * std::sqrt(post_var);
  return g;
}

void GPState::marginals_with_cross(const Matrix& queries, const FantasyGeometry& geom, Vector& mean, Vector& var,
                                   Vector& cross) const {
  const Matrix q = in_tf_.to_unit(queries);
  const double scale = out_tf_.scale;
  const Matrix zrow = geom.z_unit.transpose();
  const Vector kqz = kernel_matrix(cfg_, q, zrow).col(0);
  if (size() == 0) {
    mean = Vector::Constant(q.rows(), out_tf_.mean);
    var = Vector::Constant(q.rows(), outputscale_raw());
    cross = kqz;
    return;
  }
  const Matrix ks = kernel_matrix(cfg_, q, x_unit_);
  mean = ((ks * alpha_).array() * scale + out_tf_.mean).matrix();
  const Matrix v = chol_.triangularView<Eigen::Lower>().solve(ks.transpose());
  var = ((cfg_.outputscale - v.colwise().squaredNorm().transpose().array()).max(0.0) * scale * scale).matrix();
  cross = kqz - v.transpose() * geom.w;
}

GPState GPState::fantasize(const Vector& z, double y) const {
  const FantasyGeometry g = fantasy_geometry(z);
  if (g.duplicate) {
    // The posterior already interpolates the stored target at z.
    if (std::abs(y - g.mean_z) <= 1e-6 * std::max(1.0, out_tf_.scale)) return *this;
    throw Error(ErrorCode::SingularCovariance, "fantasy input duplicates a training input with a different value");
  }
  const Eigen::Index n = x_unit_.rows();
  GPState s;
  s.cfg_ = cfg_;
  s.in_tf_ = in_tf_;
  s.out_tf_ = out_tf_;
  s.jitter_ = jitter_;
  s.x_unit_.resize(n + 1, x_unit_.cols());
  s.x_unit_ << x_unit_, g.z_unit.transpose();
  s.targets_.resize(n + 1);
  s.targets_ << targets_, y;
  s.y_std_.resize(n + 1);
  s.y_std_ << y_std_, (y - out_tf_.mean) / out_tf_.scale;
  // Rank-1 extension of the Cholesky factor.
  s.chol_ = Matrix::Zero(n + 1, n + 1);
  s.chol_.topLeftCorner(n, n) = chol_;
  if (n > 0) s.chol_.block(n, 0, 1, n) = g.w.transpose();
  s.chol_(n, n) = std::sqrt(g.denom);
  s.solve_alpha(kernel_matrix(cfg_, s.x_unit_, s.x_unit_));
  return s;
}

double log_marginal_likelihood(const Matrix& x_unit, const Vector& y_std, const KernelConfig& cfg, Vector* grad) {
  const Eigen::Index n = x_unit.rows();
  const Eigen::Index d = x_unit.cols();
  const double log2pi = std::log(2.0 * M_PI);
  const Matrix d2 = scaled_sqdist(x_unit, x_unit, cfg.lengthscales);
  const Matrix k = kernel_from_sqdist(cfg, d2);
  Eigen::LLT<Matrix> llt(k + cfg.jitter * Matrix::Identity(n, n));
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Matrix l = llt.matrixL();
  if (!(l.diagonal().array() > 0).all()) return -std::numeric_limits<double>::infinity();
  const Vector alpha = llt.solve(y_std);
  const double lml = -0.5 * y_std.dot(alpha) - l.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * log2pi;
  if (grad) {
    grad->resize(d + 1);
    const Matrix w = alpha * alpha.transpose() - llt.solve(Matrix::Identity(n, n));
    // dK/dlog(ls_j) = g(r) * (delta_j / ls_j)^2, with g depending on the family.
    Matrix g;
    if (cfg.family == KernelFamily::SquaredExponential) {
      g = k;
    } else {
      const Eigen::ArrayXXd r = d2.array().sqrt();
      g = ((5.0 / 3.0) * cfg.outputscale * (1.0 + kSqrt5 * r) * (-kSqrt5 * r).exp()).matrix();
    }
    const Matrix wg = w.cwiseProduct(g);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double inv = 1.0 / cfg.lengthscales[j];
      const Eigen::ArrayXd c = x_unit.col(j).array() * inv;
      double acc = 0.0;
      for (Eigen::Index col = 0; col < n; ++col) {
        acc += (wg.col(col).array() * (c - c[col]).square()).sum();
      }
      (*grad)[j] = 0.5 * acc;
    }
    (*grad)[d] = 0.5 * w.cwiseProduct(k).sum();
  }
  return lml;
}

GPState fit(const Matrix& inputs, const Vector& targets, const std::vector<Interval>& bounds,
            const FitOptions& options) {
  const auto n = inputs.rows();
  const auto d = static_cast<Eigen::Index>(bounds.size());
  if (n < 1) throw Error(ErrorCode::DimensionMismatch, "fit needs at least one observation");
  if (inputs.cols() != d || targets.size() != n) throw Error(ErrorCode::DimensionMismatch, "fit input shapes");
  const InputTransform in_tf = InputTransform::from_bounds(bounds);
  const Matrix x_unit = in_tf.to_unit(inputs);
  if (has_duplicate_rows(x_unit)) throw Error(ErrorCode::DuplicateInputs, "training inputs must be distinct");
  const TargetTransform out_tf = TargetTransform::standardize(targets);
  const Vector y_std = (targets.array() - out_tf.mean) / out_tf.scale;

  std::vector<Interval> box(static_cast<std::size_t>(d + 1));
  for (Eigen::Index j = 0; j < d; ++j) {
    box[static_cast<std::size_t>(j)] = {std::log(options.lengthscale_min), std::log(options.lengthscale_max)};
  }
  box[static_cast<std::size_t>(d)] = {std::log(options.outputscale_min), std::log(options.outputscale_max)};

  auto unpack = [&](const Vector& theta, double jitter) {
    KernelConfig cfg;
    cfg.family = options.family;
    cfg.lengthscales = theta.head(d).array().exp();
    cfg.outputscale = std::exp(theta[d]);
    cfg.jitter = jitter;
    return cfg;
  };

  BoxProblem problem;
  problem.bounds = box;
  problem.restarts = std::max(options.restarts, 5);
  problem.max_evals = options.max_evals;
  double jitter = options.jitter;
  problem.grad_objective = [&](const Vector& theta, Vector* grad) {
    return log_marginal_likelihood(x_unit, y_std, unpack(theta, jitter), grad);
  };
  Vector default_start(d + 1);
  default_start.head(d).setConstant(std::log(std::clamp(0.3 * std::sqrt(static_cast<double>(d)),
                                                        options.lengthscale_min, options.lengthscale_max)));
  default_start[d] = 0.0;
  problem.extra_starts.push_back(default_start);
  if (options.warm_start && options.warm_start->lengthscales.size() == d) {
    Vector warm(d + 1);
    warm.head(d) = options.warm_start->lengthscales.array().log();
    warm[d] = std::log(options.warm_start->outputscale);
    problem.extra_starts.push_back(project_to_box(warm, box));
  }

  MaximizeResult best = multistart_maximize(problem, derive_seed(options.seed, {0x6c6dULL}));
  while (!std::isfinite(best.value) && jitter * 10.0 <= kMaxJitter * (1.0 + 1e-9)) {
    jitter *= 10.0;
    best = multistart_maximize(problem, derive_seed(options.seed, {0x6c6dULL}));
  }
  if (!std::isfinite(best.value)) throw Error(ErrorCode::SingularCovariance, "no hyperparameters give a PD covariance");
  return GPState::build(inputs, targets, in_tf, unpack(best.x, jitter), out_tf);
}

double PathSample::operator()(const Vector& x) const {
  Matrix row = x.transpose();
  return evaluate(row)[0];
}

Vector PathSample::evaluate(const Matrix& points) const {
  const Matrix q = in_tf_.to_unit(points);
  Matrix arg = q * omega_.transpose();
  arg.rowwise() += phase_.transpose();
  Vector f = arg.array().cos().matrix() * weights_;
  if (x_unit_.rows() > 0) f += kernel_matrix(cfg_, q, x_unit_) * correction_;
  return (f.array() * out_tf_.scale + out_tf_.mean).matrix();
}

namespace {

struct Features {
  Matrix omega;
  Vector phase;
  Vector weights;
};

Features draw_rff(KernelFamily family, const Vector& lengthscales, double outputscale, std::uint64_t seed,
                  int num_features) {
  const Eigen::Index d = lengthscales.size();
  const Eigen::Index f = std::max(num_features, 1);
  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  boost::random::chi_squared_distribution<double> chi2(5.0);  // 2 * nu for Matern-5/2
  boost::random::uniform_real_distribution<double> uniform(0.0, 2.0 * M_PI);
  Features out;
  out.omega.resize(f, d);
  out.phase.resize(f);
  out.weights.resize(f);
  for (Eigen::Index i = 0; i < f; ++i) {
    double mult = 1.0;
    if (family == KernelFamily::Matern52) mult = std::sqrt(5.0 / chi2(rng));
    for (Eigen::Index j = 0; j < d; ++j) out.omega(i, j) = normal(rng) * mult / lengthscales[j];
  }
  for (Eigen::Index i = 0; i < f; ++i) out.phase[i] = uniform(rng);
  const double amp = std::sqrt(2.0 * outputscale / static_cast<double>(f));
  for (Eigen::Index i = 0; i < f; ++i) out.weights[i] = normal(rng) * amp;
  return out;
}

}  // namespace

PathSample sample_path(const GPState& state, std::uint64_t seed, int num_features) {
  PathSample p;
  p.cfg_ = state.config();
  p.in_tf_ = state.input_transform();
  p.out_tf_ = state.target_transform();
  Features feat = draw_rff(p.cfg_.family, p.cfg_.lengthscales, p.cfg_.outputscale, seed, num_features);
  p.omega_ = std::move(feat.omega);
  p.phase_ = std::move(feat.phase);
  p.weights_ = std::move(feat.weights);
  p.x_unit_ = state.train_inputs_unit();
  const Eigen::Index n = p.x_unit_.rows();
  if (n > 0) {
    Matrix arg = p.x_unit_ * p.omega_.transpose();
    arg.rowwise() += p.phase_.transpose();
    const Vector prior_at_data = arg.array().cos().matrix() * p.weights_;
    // Noise draw matching the jitter used in the factorization.
    Rng rng(derive_seed(seed, {0x6e6fULL}));
    boost::random::normal_distribution<double> normal(0.0, std::sqrt(state.jitter()));
    Vector eps(n);
    for (Eigen::Index i = 0; i < n; ++i) eps[i] = normal(rng);
    const Vector y_std = (state.train_targets().array() - p.out_tf_.mean) / p.out_tf_.scale;
    Vector resid = y_std - prior_at_data - eps;
    const Matrix& l = state.chol();
    l.triangularView<Eigen::Lower>().solveInPlace(resid);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(resid);
    p.correction_ = std::move(resid);
  }
  return p;
}

PathSample sample_prior_path(KernelFamily family, const Vector& lengthscales, double outputscale,
                             std::uint64_t seed, int num_features) {
  PathSample p;
  p.cfg_.family = family;
  p.cfg_.lengthscales = lengthscales;
  p.cfg_.outputscale = outputscale;
  p.in_tf_ = InputTransform::identity(static_cast<std::size_t>(lengthscales.size()));
  Features feat = draw_rff(family, lengthscales, outputscale, seed, num_features);
  p.omega_ = std::move(feat.omega);
  p.phase_ = std::move(feat.phase);
  p.weights_ = std::move(feat.weights);
  p.x_unit_.resize(0, lengthscales.size());
  return p;
}

}  // namespace fnbo
