#pragma once

#include <cstdint>
#include <vector>

#include "fnbo/discrete.hpp"
#include "fnbo/netposterior.hpp"

namespace fnbo {

/// A node index with a proposed node input and its cost-normalized value.
struct Candidate {
  std::size_t node = 0;
  NodeInput input;
  double acq_value = 0.0;
  double acq_stderr = 0.0;
  double cost = 0.0;
  Vector source_x;  // network input the candidate was derived from, if any

  Vector z() const { return input.concat(); }
};

/// Standard normal base for fantasy observations, shared by all candidates
/// within one iteration.
struct FantasyBatch {
  Vector base;

  /// Antithetic pairs of quasi-random normals (plus a zero when count is odd).
  static FantasyBatch antithetic(int count, std::uint64_t seed);
  int count() const { return static_cast<int>(base.size()); }
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Closed-form expected improvement of N(mu, sigma^2) over `incumbent`.
double analytic_ei(double mu, double sigma, double incumbent);

/// Per-sample improvements (queries x samples) of y_K over `incumbent`, with
/// every node, including the last, sampled from `base` (samples x K).
Matrix eifn_samples(const NetworkPosterior& post, const Matrix& x, double incumbent, const Matrix& base);
Vector eifn_values(const NetworkPosterior& post, const Matrix& x, double incumbent, const Matrix& base);
McEstimate eifn(const NetworkPosterior& post, const Vector& x, double incumbent, const Matrix& base);

struct Proposal {
  Vector x;
  double value = 0.0;
};

/// Maximizer of EIFN over the domain; pass nu* as the incumbent for the
/// modified criterion and the best observed y_K for the original.
Proposal propose_network_candidate(const NetworkPosterior& post, double incumbent, const Matrix& base,
                                   const OptimizerSettings& settings, std::uint64_t seed);

/// Node inputs built from one sampled network realization at `x_hat`, with
/// parent outputs clamped to their ranges. With `mean_mode` the realization
/// is replaced by plug-in posterior means.
std::vector<Candidate> generate_node_candidates(const NetworkPosterior& post, const Vector& x_hat,
                                                std::uint64_t seed, bool mean_mode = false);

/// Cost-normalized knowledge gradient of observing node k at z, with the inner
/// maximization restricted to the rows of `A`. The estimate's standard error is
/// taken across fantasies.
McEstimate pkgfn_value(const NetworkPosterior& post, std::size_t k, const Vector& z, const Matrix& A,
                       const FantasyBatch& fantasy, double nu_star);

/// Index of the highest-valued candidate; ties go to the cheaper, then lower node.
std::size_t select_node(const std::vector<Candidate>& candidates);

/// Uniform point in the domain.
Vector random_point(const NetworkSpec& spec, std::uint64_t seed);

/// Maximizer of one sampled network realization.
Vector thompson_network_point(const NetworkPosterior& post, const OptimizerSettings& settings, std::uint64_t seed);

/// Maximizer of analytic EI under a single GP on full-network evaluations.
Proposal ei_point(const GPState& gp, double best_observed, const std::vector<Interval>& domain,
                  const OptimizerSettings& settings, std::uint64_t seed);

/// Original p-KGFN step: continuous optimization of pkgfn_value over the input
/// box of each listed node, then select_node.
Candidate pkgfn_continuous_step(const NetworkPosterior& post, const std::vector<std::size_t>& nodes, const Matrix& A,
                                const FantasyBatch& fantasy, double nu_star, const OptimizerSettings& settings,
                                std::uint64_t seed, const std::vector<Candidate>& warm_starts = {});

}  // namespace fnbo
