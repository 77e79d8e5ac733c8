#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fnbo/gp.hpp"
#include "fnbo/network.hpp"
#include "fnbo/optim.hpp"

namespace fnbo {

/// K conditionally independent node GPs inducing a posterior on y_K.
struct NetworkPosterior {
  NetworkSpec spec;
  std::vector<std::shared_ptr<const GPState>> nodes;
  /// Normal base samples, one row per MC sample and one column per node. Held
  /// fixed while an acquisition is optimized; refreshed between BO iterations.
  Matrix base;

  std::size_t num_samples() const { return static_cast<std::size_t>(base.rows()); }
  void refresh_base(std::size_t samples, std::uint64_t seed);
  void check() const;
};

/// Quasi-random standard normal matrix (rows = samples), from scrambled Sobol
/// points pushed through the normal quantile.
Matrix normal_base_samples(std::size_t samples, std::size_t dim, std::uint64_t seed);

/// Row layout of a propagation table: `tiles` copies of `queries` x `samples`
/// rows, sample index fastest.
struct SampleLayout {
  Eigen::Index queries = 0;
  Eigen::Index samples = 0;
  Eigen::Index tiles = 1;

  Eigen::Index rows() const { return tiles * queries * samples; }
  Eigen::Index query(Eigen::Index r) const { return (r / samples) % queries; }
  Eigen::Index sample(Eigen::Index r) const { return r % samples; }
};

/// GP inputs for node k at every row of the table `values` (rows x K).
Matrix node_inputs(const NetworkSpec& spec, std::size_t k, const Matrix& values, const Matrix& x,
                   const SampleLayout& layout);

/// Fills column k of `values`: mu + sigma * u with u from `base`, or just mu
/// when `mean_only`. Root nodes are evaluated once per query.
void propagate_node(const NetworkPosterior& post, std::size_t k, const Matrix& x, const SampleLayout& layout,
                    const Matrix& base, Matrix& values, bool mean_only);

/// Per-sample conditional means of y_K at each query (queries x samples). The
/// last node contributes its conditional mean rather than a sampled value.
Matrix nu_samples(const NetworkPosterior& post, const Matrix& x);

/// Sample-average estimate of E[y_K(x)] for each row of `x`.
Vector nu(const NetworkPosterior& post, const Matrix& x);
double nu(const NetworkPosterior& post, const Vector& x);

/// One posterior draw of every node function, composable through the DAG.
class NetworkRealization {
 public:
  NetworkRealization(NetworkSpec spec, std::vector<PathSample> paths);

  const PathSample& node(std::size_t k) const { return paths_[k]; }
  /// All node outputs (queries x K) at the network inputs in the rows of `x`.
  Matrix evaluate(const Matrix& x) const;
  Vector evaluate(const Vector& x) const;
  Vector final_output(const Matrix& x) const;

 private:
  NetworkSpec spec_;
  std::vector<PathSample> paths_;
};

NetworkRealization sample_realization(const NetworkPosterior& post, std::uint64_t seed, int num_features = 1024);

struct OptimizerSettings {
  int restarts = 10;
  int max_evals = 200;
  int raw_samples = 0;
};

struct MeanMaximum {
  Vector x;
  double value = 0.0;
};

/// Multi-start maximization of nu over the domain from Sobol starts plus
/// `warm_starts` (typically the previous maximizer).
MeanMaximum maximize_mean(const NetworkPosterior& post, const OptimizerSettings& settings, std::uint64_t seed,
                          const std::vector<Vector>& warm_starts = {});

}  // namespace fnbo
