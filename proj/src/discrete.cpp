#include "fnbo/discrete.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <limits>

#include "fnbo/random.hpp"

namespace fnbo {

void DiscreteSetConfig::check() const {
  if (M < 1) throw Error(ErrorCode::InvalidConfig, "discrete.M must be at least 1");
  if (N_T < 0 || N_L < 0) throw Error(ErrorCode::InvalidConfig, "discrete set sizes must be nonnegative");
  if (pool_size < 1 || N_T > pool_size) throw Error(ErrorCode::InvalidConfig, "discrete.N_T must not exceed pool_size");
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidConfig, "discrete.r must be positive");
}

double subset_objective(const Matrix& values, const std::vector<std::size_t>& subset) {
  if (subset.empty() || values.rows() == 0) return -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (Eigen::Index m = 0; m < values.rows(); ++m) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j : subset) best = std::max(best, values(m, static_cast<Eigen::Index>(j)));
    total += best;
  }
  return total / static_cast<double>(values.rows());
}

GreedySelection greedy_select(const Matrix& values, std::size_t count) {
  const Eigen::Index rows = values.rows();
  const auto pool = static_cast<std::size_t>(values.cols());
  count = std::min(count, pool);
  GreedySelection out;
  std::vector<bool> taken(pool, false);
  Vector current = Vector::Constant(rows, -std::numeric_limits<double>::infinity());
  for (std::size_t step = 0; step < count; ++step) {
    std::size_t best_j = pool;
    double best_total = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pool; ++j) {
      if (taken[j]) continue;
      const auto c = static_cast<Eigen::Index>(j);
      double total = 0.0;
      for (Eigen::Index m = 0; m < rows; ++m) total += std::max(current[m], values(m, c));
      if (best_j == pool || total > best_total) {
        best_total = total;
        best_j = j;
      }
    }
    taken[best_j] = true;
    current = current.cwiseMax(values.col(static_cast<Eigen::Index>(best_j)));
    out.indices.push_back(best_j);
    out.objective.push_back(best_total / static_cast<double>(std::max<Eigen::Index>(rows, 1)));
  }
  return out;
}

Matrix thompson_pool(const NetworkSpec& spec, int pool_size, const Vector& x_star, const Matrix& past_inputs,
                     std::uint64_t seed) {
  const Matrix sobol = scale_to_box(sobol_points(spec.input_dim(), static_cast<std::size_t>(pool_size), seed),
                                    spec.domain);
  const Eigen::Index extra = (x_star.size() > 0 ? 1 : 0) + past_inputs.rows();
  Matrix pool(sobol.rows() + extra, static_cast<Eigen::Index>(spec.input_dim()));
  pool.topRows(sobol.rows()) = sobol;
  Eigen::Index r = sobol.rows();
  if (x_star.size() > 0) pool.row(r++) = x_star.transpose();
  if (past_inputs.rows() > 0) pool.bottomRows(past_inputs.rows()) = past_inputs;
  return pool;
}

Matrix batch_thompson(const NetworkPosterior& post, const DiscreteSetConfig& cfg, const Vector& x_star,
                      const Matrix& past_inputs, std::uint64_t seed) {
  const Matrix pool = thompson_pool(post.spec, cfg.pool_size, x_star, past_inputs, derive_seed(seed, {0}));
  Matrix values(cfg.M, pool.rows());
  for (int m = 0; m < cfg.M; ++m) {
    const NetworkRealization f = sample_realization(post, derive_seed(seed, {1, static_cast<std::uint64_t>(m)}));
    values.row(m) = f.final_output(pool).transpose();
  }
  const GreedySelection sel = greedy_select(values, static_cast<std::size_t>(cfg.N_T));
  Matrix out(static_cast<Eigen::Index>(sel.indices.size()), pool.cols());
  for (std::size_t i = 0; i < sel.indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = pool.row(static_cast<Eigen::Index>(sel.indices[i]));
  }
  return out;
}

Matrix local_points(const Vector& x_star, const std::vector<Interval>& domain, const DiscreteSetConfig& cfg,
                    std::uint64_t seed) {
  const Eigen::Index d = x_star.size();
  Matrix out(std::max(cfg.N_L, 0), d);
  if (cfg.N_L <= 0) return out;
  double max_width = 0.0;
  for (const auto& iv : domain) max_width = std::max(max_width, iv.width());
  const double radius = cfg.r * max_width;
  std::vector<boost::random::uniform_real_distribution<double>> sides;
  for (Eigen::Index i = 0; i < d; ++i) {
    const Interval& iv = domain[static_cast<std::size_t>(i)];
    const double lo = std::max(iv.lower, x_star[i] - radius);
    const double hi = std::min(iv.upper, x_star[i] + radius);
    sides.emplace_back(lo, std::max(lo, hi));
  }
  Rng rng(seed);
  Vector p(d);
  for (Eigen::Index n = 0; n < out.rows();) {
    for (Eigen::Index i = 0; i < d; ++i) p[i] = sides[static_cast<std::size_t>(i)](rng);
    if ((p - x_star).norm() <= radius) out.row(n++) = p.transpose();
  }
  return out;
}

Matrix dedupe_rows(const Matrix& rows, double tol) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    bool dup = false;
    for (Eigen::Index j : keep) {
      if ((rows.row(i) - rows.row(j)).lpNorm<Eigen::Infinity>() <= tol) {
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), rows.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(keep[i]);
  return out;
}

Matrix build_set(const NetworkPosterior& post, const DiscreteSetConfig& cfg, const Vector& x_star,
                 const Matrix& past_inputs, std::uint64_t seed) {
  cfg.check();
  if (!cfg.include_maximizer && !cfg.include_thompson && !cfg.include_local) {
    throw Error(ErrorCode::EmptySet, "every discrete-set source is disabled");
  }
  std::vector<Matrix> parts;
  if (cfg.include_thompson) parts.push_back(batch_thompson(post, cfg, x_star, past_inputs, derive_seed(seed, {0})));
  if (cfg.include_local) parts.push_back(local_points(x_star, post.spec.domain, cfg, derive_seed(seed, {1})));
  if (cfg.include_maximizer) parts.push_back(x_star.transpose());
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.rows();
  Matrix all(total, static_cast<Eigen::Index>(post.spec.input_dim()));
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    all.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  Matrix out = dedupe_rows(all);
  if (out.rows() == 0) throw Error(ErrorCode::EmptySet, "discrete set is empty");
  return out;
}

Matrix realization_maximizers(const NetworkPosterior& post, int count, const OptimizerSettings& settings,
                              std::uint64_t seed) {
  Matrix out(count, static_cast<Eigen::Index>(post.spec.input_dim()));
  for (int m = 0; m < count; ++m) {
    const NetworkRealization f = sample_realization(post, derive_seed(seed, {static_cast<std::uint64_t>(m)}));
    BoxProblem problem;
    problem.bounds = post.spec.domain;
    problem.objective = [&](const Vector& x) { return f.final_output(Matrix(x.transpose()))[0]; };
    problem.batch_objective = [&](const Matrix& x) { return f.final_output(x); };
    problem.restarts = settings.restarts;
    problem.max_evals = settings.max_evals;
    problem.raw_samples = settings.raw_samples;
    out.row(m) = multistart_maximize(problem, derive_seed(seed, {static_cast<std::uint64_t>(m), 1})).x.transpose();
  }
  return out;
}

}  // namespace fnbo
