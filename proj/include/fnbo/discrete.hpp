#pragma once

#include <cstdint>
#include <vector>

#include "fnbo/netposterior.hpp"

namespace fnbo {

struct DiscreteSetConfig {
  int M = 10;          // network realizations
  int N_T = 10;        // batch-Thompson points
  int N_L = 10;        // local points
  double r = 0.1;      // local radius as a fraction of the widest domain side
  int pool_size = 512; // shared candidate pool for the greedy selection
  bool include_maximizer = true;
  bool include_thompson = true;
  bool include_local = true;

  void check() const;
};

/// Value of a subset: average over realizations (rows) of the best pool column.
double subset_objective(const Matrix& values, const std::vector<std::size_t>& subset);

struct GreedySelection {
  std::vector<std::size_t> indices;
  std::vector<double> objective;  // subset objective after each step
};

/// Greedy maximization of subset_objective over the columns of `values`
/// (realizations x pool). Ties go to the lowest column index.
GreedySelection greedy_select(const Matrix& values, std::size_t count);

/// Pool used for batch Thompson selection: scrambled Sobol points on the
/// domain, then x*, then the given past full-network inputs.
Matrix thompson_pool(const NetworkSpec& spec, int pool_size, const Vector& x_star, const Matrix& past_inputs,
                     std::uint64_t seed);

/// N_T points that do well across M posterior network realizations.
Matrix batch_thompson(const NetworkPosterior& post, const DiscreteSetConfig& cfg, const Vector& x_star,
                      const Matrix& past_inputs, std::uint64_t seed);

/// N_L points uniform on the intersection of the domain with the Euclidean
/// ball of radius r * max width around x*.
Matrix local_points(const Vector& x_star, const std::vector<Interval>& domain, const DiscreteSetConfig& cfg,
                    std::uint64_t seed);

/// Drops rows within `tol` (max-norm) of an earlier row.
Matrix dedupe_rows(const Matrix& rows, double tol = 1e-9);

/// S_T, S_L and x* stacked according to the flags, deduplicated.
Matrix build_set(const NetworkPosterior& post, const DiscreteSetConfig& cfg, const Vector& x_star,
                 const Matrix& past_inputs, std::uint64_t seed);

/// Maximizers of `count` independent network realizations, each optimized over
/// the whole domain.
Matrix realization_maximizers(const NetworkPosterior& post, int count, const OptimizerSettings& settings,
                              std::uint64_t seed);

}  // namespace fnbo
