#include "fnbo/netposterior.hpp"

#include <cmath>

#include "fnbo/random.hpp"

namespace fnbo {

Matrix normal_base_samples(std::size_t samples, std::size_t dim, std::uint64_t seed) {
  Matrix u = sobol_points(dim, samples, seed);
  return u.unaryExpr([](double p) { return normal_quantile(p); });
}

void NetworkPosterior::refresh_base(std::size_t samples, std::uint64_t seed) {
  base = normal_base_samples(samples, spec.num_nodes, seed);
}

void NetworkPosterior::check() const {
  if (nodes.size() != spec.num_nodes) throw Error(ErrorCode::DimensionMismatch, "one GP per node required");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (!nodes[k] || nodes[k]->dim() != spec.node_input_dim(k)) {
      throw Error(ErrorCode::DimensionMismatch, "node " + std::to_string(k + 1) + " GP has the wrong input dimension");
    }
  }
  if (base.rows() == 0 || static_cast<std::size_t>(base.cols()) != spec.num_nodes) {
    throw Error(ErrorCode::DimensionMismatch, "base samples not initialized");
  }
}

Matrix node_inputs(const NetworkSpec& spec, std::size_t k, const Matrix& values, const Matrix& x,
                   const SampleLayout& layout) {
  const auto& parents = spec.parents[k];
  const auto& ext = spec.ext_inputs[k];
  const Eigen::Index rows = layout.rows();
  const auto np = static_cast<Eigen::Index>(parents.size());
  Matrix z(rows, np + static_cast<Eigen::Index>(ext.size()));
  for (Eigen::Index i = 0; i < np; ++i) z.col(i) = values.col(static_cast<Eigen::Index>(parents[static_cast<std::size_t>(i)]));
  for (std::size_t j = 0; j < ext.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(ext[j]);
    for (Eigen::Index r = 0; r < rows; ++r) z(r, np + static_cast<Eigen::Index>(j)) = x(layout.query(r), col);
  }
  return z;
}

void propagate_node(const NetworkPosterior& post, std::size_t k, const Matrix& x, const SampleLayout& layout,
                    const Matrix& base, Matrix& values, bool mean_only) {
  const GPState& gp = *post.nodes[k];
  const auto col = static_cast<Eigen::Index>(k);
  Vector mean, var;
  if (post.spec.parents[k].empty()) {
    const SampleLayout once{layout.queries, 1, 1};
    gp.marginals(node_inputs(post.spec, k, values, x, once), mean, mean_only ? nullptr : &var);
    for (Eigen::Index r = 0; r < layout.rows(); ++r) {
      const Eigen::Index q = layout.query(r);
      values(r, col) = mean_only ? mean[q] : mean[q] + std::sqrt(var[q]) * base(layout.sample(r), col);
    }
    return;
  }
  gp.marginals(node_inputs(post.spec, k, values, x, layout), mean, mean_only ? nullptr : &var);
  if (mean_only) {
    values.col(col) = mean;
  } else {
    for (Eigen::Index r = 0; r < layout.rows(); ++r) {
      values(r, col) = mean[r] + std::sqrt(var[r]) * base(layout.sample(r), col);
    }
  }
}

Matrix nu_samples(const NetworkPosterior& post, const Matrix& x) {
  post.check();
  const SampleLayout layout{x.rows(), post.base.rows(), 1};
  Matrix values(layout.rows(), static_cast<Eigen::Index>(post.spec.num_nodes));
  const std::size_t last = post.spec.final_node();
  for (std::size_t k = 0; k <= last; ++k) propagate_node(post, k, x, layout, post.base, values, k == last);
  Matrix out(layout.queries, layout.samples);
  for (Eigen::Index r = 0; r < layout.rows(); ++r) out(layout.query(r), layout.sample(r)) = values(r, static_cast<Eigen::Index>(last));
  return out;
}

Vector nu(const NetworkPosterior& post, const Matrix& x) { return nu_samples(post, x).rowwise().mean(); }

double nu(const NetworkPosterior& post, const Vector& x) {
  if (!post.spec.in_domain(x)) throw Error(ErrorCode::DomainViolation, "nu queried outside the domain");
  const Matrix row = x.transpose();
  return nu(post, row)[0];
}

NetworkRealization::NetworkRealization(NetworkSpec spec, std::vector<PathSample> paths)
    : spec_(std::move(spec)), paths_(std::move(paths)) {}

Matrix NetworkRealization::evaluate(const Matrix& x) const {
  const SampleLayout layout{x.rows(), 1, 1};
  Matrix values(x.rows(), static_cast<Eigen::Index>(spec_.num_nodes));
  for (std::size_t k = 0; k < spec_.num_nodes; ++k) {
    values.col(static_cast<Eigen::Index>(k)) = paths_[k].evaluate(node_inputs(spec_, k, values, x, layout));
  }
  return values;
}

Vector NetworkRealization::evaluate(const Vector& x) const {
  const Matrix row = x.transpose();
  return evaluate(row).row(0).transpose();
}

Vector NetworkRealization::final_output(const Matrix& x) const {
  return evaluate(x).col(static_cast<Eigen::Index>(spec_.final_node()));
}

NetworkRealization sample_realization(const NetworkPosterior& post, std::uint64_t seed, int num_features) {
  std::vector<PathSample> paths;
  paths.reserve(post.spec.num_nodes);
  for (std::size_t k = 0; k < post.spec.num_nodes; ++k) {
    paths.push_back(sample_path(*post.nodes[k], derive_seed(seed, {k}), num_features));
  }
  return NetworkRealization(post.spec, std::move(paths));
}

MeanMaximum maximize_mean(const NetworkPosterior& post, const OptimizerSettings& settings, std::uint64_t seed,
                          const std::vector<Vector>& warm_starts) {
  post.check();
  BoxProblem problem;
  problem.bounds = post.spec.domain;
  problem.objective = [&](const Vector& x) { return nu(post, Matrix(x.transpose()))[0]; };
  problem.batch_objective = [&](const Matrix& x) { return nu(post, x); };
  problem.restarts = settings.restarts;
  problem.max_evals = settings.max_evals;
  problem.raw_samples = settings.raw_samples;
  problem.extra_starts = warm_starts;
  const MaximizeResult r = multistart_maximize(problem, seed);
  return {r.x, r.value};
}

}  // namespace fnbo
