#include "fnbo/acquisition.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fnbo/random.hpp"

namespace fnbo {

FantasyBatch FantasyBatch::antithetic(int count, std::uint64_t seed) {
  FantasyBatch fb;
  fb.base = Vector::Zero(std::max(count, 0));
  const int half = count / 2;
  if (half > 0) {
    const Matrix u = normal_base_samples(static_cast<std::size_t>(half), 1, seed);
    for (int i = 0; i < half; ++i) {
      fb.base[i] = u(i, 0);
      fb.base[half + i] = -u(i, 0);
    }
  }
  return fb;
}

double analytic_ei(double mu, double sigma, double incumbent) {
  const double diff = mu - incumbent;
  if (!(sigma > 0.0)) return std::max(diff, 0.0);
  const double g = diff / sigma;
  return sigma * normal_pdf(g) + diff * normal_cdf(g);
}

Matrix eifn_samples(const NetworkPosterior& post, const Matrix& x, double incumbent, const Matrix& base) {
  if (base.rows() == 0 || static_cast<std::size_t>(base.cols()) != post.spec.num_nodes) {
    throw Error(ErrorCode::DimensionMismatch, "EIFN base must have one column per node");
  }
  const SampleLayout layout{x.rows(), base.rows(), 1};
  Matrix values(layout.rows(), static_cast<Eigen::Index>(post.spec.num_nodes));
  for (std::size_t k = 0; k < post.spec.num_nodes; ++k) propagate_node(post, k, x, layout, base, values, false);
  const auto last = static_cast<Eigen::Index>(post.spec.final_node());
  Matrix out(layout.queries, layout.samples);
  for (Eigen::Index r = 0; r < layout.rows(); ++r) {
    out(layout.query(r), layout.sample(r)) = std::max(values(r, last) - incumbent, 0.0);
  }
  return out;
}

Vector eifn_values(const NetworkPosterior& post, const Matrix& x, double incumbent, const Matrix& base) {
  return eifn_samples(post, x, incumbent, base).rowwise().mean();
}

McEstimate eifn(const NetworkPosterior& post, const Vector& x, double incumbent, const Matrix& base) {
  if (!post.spec.in_domain(x)) throw Error(ErrorCode::DomainViolation, "EIFN queried outside the domain");
  const Vector s = eifn_samples(post, Matrix(x.transpose()), incumbent, base).row(0).transpose();
  const double n = static_cast<double>(s.size());
  const double mean = s.mean();
  const double var = n > 1 ? (s.array() - mean).square().sum() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

Proposal propose_network_candidate(const NetworkPosterior& post, double incumbent, const Matrix& base,
                                   const OptimizerSettings& settings, std::uint64_t seed) {
  BoxProblem problem;
  problem.bounds = post.spec.domain;
  problem.objective = [&](const Vector& x) { return eifn_values(post, Matrix(x.transpose()), incumbent, base)[0]; };
  problem.batch_objective = [&](const Matrix& x) { return eifn_values(post, x, incumbent, base); };
  problem.restarts = settings.restarts;
  problem.max_evals = settings.max_evals;
  problem.raw_samples = settings.raw_samples;
  const MaximizeResult r = multistart_maximize(problem, seed);
  return {r.x, r.value};
}

std::vector<Candidate> generate_node_candidates(const NetworkPosterior& post, const Vector& x_hat,
                                                std::uint64_t seed, bool mean_mode) {
  const NetworkSpec& spec = post.spec;
  Vector y(static_cast<Eigen::Index>(spec.num_nodes));
  if (mean_mode) {
    for (std::size_t k = 0; k < spec.num_nodes; ++k) {
      Vector parents(static_cast<Eigen::Index>(spec.parents[k].size()));
      for (std::size_t i = 0; i < spec.parents[k].size(); ++i) {
        parents[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(spec.parents[k][i])];
      }
      const Vector z = assemble_node_input(spec, k, parents, x_hat).concat();
      y[static_cast<Eigen::Index>(k)] = post.nodes[k]->mean(Matrix(z.transpose()))[0];
    }
  } else {
    y = sample_realization(post, seed).evaluate(x_hat);
  }
  std::vector<Candidate> out;
  out.reserve(spec.num_nodes);
  for (std::size_t k = 0; k < spec.num_nodes; ++k) {
    Vector parents(static_cast<Eigen::Index>(spec.parents[k].size()));
    for (std::size_t i = 0; i < spec.parents[k].size(); ++i) {
      parents[static_cast<Eigen::Index>(i)] =
          spec.parent_ranges[k][i].clamp(y[static_cast<Eigen::Index>(spec.parents[k][i])]);
    }
    Candidate c;
    c.node = k;
    c.input = assemble_node_input(spec, k, parents, x_hat);
    c.cost = spec.cost(k, c.z());
    c.source_x = x_hat;
    out.push_back(std::move(c));
  }
  return out;
}

McEstimate pkgfn_value(const NetworkPosterior& post, std::size_t k, const Vector& z, const Matrix& A,
                       const FantasyBatch& fantasy, double nu_star) {
  if (A.rows() == 0) throw Error(ErrorCode::EmptyDiscreteSet, "discrete set is empty");
  if (fantasy.count() == 0) throw Error(ErrorCode::InvalidConfig, "at least one fantasy is required");
  post.check();
  const NetworkSpec& spec = post.spec;
  if (static_cast<std::size_t>(z.size()) != spec.node_input_dim(k)) {
    throw Error(ErrorCode::DimensionMismatch, "candidate input has the wrong dimension");
  }
  const std::size_t last = spec.final_node();
  const std::vector<bool> desc = spec.descendants(k);
  const GPState& gp = *post.nodes[k];
  const FantasyGeometry geom = gp.fantasy_geometry(z);

  // Stage 1: nodes unaffected by the fantasy, once per (point, sample).
  const SampleLayout once{A.rows(), post.base.rows(), 1};
  Matrix head(once.rows(), static_cast<Eigen::Index>(spec.num_nodes));
  for (std::size_t j = 0; j < spec.num_nodes; ++j) {
    if (j == k || desc[j]) continue;
    propagate_node(post, j, A, once, post.base, head, j == last);
  }
  Vector mean, var, cross;
  gp.marginals_with_cross(node_inputs(spec, k, head, A, once), geom, mean, var, cross);

  // Stage 2: node k under each fantasy, then its descendants, tiled by fantasy.
  const Eigen::Index F = fantasy.count();
  const SampleLayout tiled{A.rows(), post.base.rows(), F};
  const Eigen::Index R0 = once.rows();
  Matrix values(tiled.rows(), static_cast<Eigen::Index>(spec.num_nodes));
  for (Eigen::Index f = 0; f < F; ++f) values.middleRows(f * R0, R0) = head;
  const double scale = gp.target_transform().scale;
  const double shift_per_u = geom.sd_z / geom.denom;
  const auto kc = static_cast<Eigen::Index>(k);
  for (Eigen::Index f = 0; f < F; ++f) {
    const double u = fantasy.base[f];
    for (Eigen::Index r = 0; r < R0; ++r) {
      const double m = mean[r] + cross[r] * shift_per_u * u;
      double v = m;
      if (k != last) {
        const double s2 = std::max(var[r] - scale * scale * cross[r] * cross[r] / geom.denom, 0.0);
        v += std::sqrt(s2) * post.base(once.sample(r), kc);
      }
      values(f * R0 + r, kc) = v;
    }
  }
  for (std::size_t j = k + 1; j < spec.num_nodes; ++j) {
    if (desc[j]) propagate_node(post, j, A, tiled, post.base, values, j == last);
  }

  // nu_{n+1} at every point of A for every fantasy; best point per fantasy.
  const auto lc = static_cast<Eigen::Index>(last);
  Vector best = Vector::Constant(F, -std::numeric_limits<double>::infinity());
  const double inv_s = 1.0 / static_cast<double>(once.samples);
  for (Eigen::Index f = 0; f < F; ++f) {
    for (Eigen::Index a = 0; a < A.rows(); ++a) {
      const Eigen::Index start = f * R0 + a * once.samples;
      const double nu_a = values.col(lc).segment(start, once.samples).sum() * inv_s;
      best[f] = std::max(best[f], nu_a);
    }
  }
  const double cost = spec.cost(k, z);
  const double avg = best.mean();
  const double sd = F > 1 ? std::sqrt((best.array() - avg).square().sum() / static_cast<double>(F - 1)) : 0.0;
  return {(avg - nu_star) / cost, sd / std::sqrt(static_cast<double>(F)) / cost};
}

std::size_t select_node(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptySet, "no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    const Candidate& b = candidates[best];
    if (c.acq_value > b.acq_value || (c.acq_value == b.acq_value && c.cost < b.cost) ||
        (c.acq_value == b.acq_value && c.cost == b.cost && c.node < b.node)) {
      best = i;
    }
  }
  return best;
}

Vector random_point(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Vector x(static_cast<Eigen::Index>(spec.input_dim()));
  for (std::size_t i = 0; i < spec.input_dim(); ++i) {
    x[static_cast<Eigen::Index>(i)] =
        boost::random::uniform_real_distribution<double>(spec.domain[i].lower, spec.domain[i].upper)(rng);
  }
  return x;
}

Vector thompson_network_point(const NetworkPosterior& post, const OptimizerSettings& settings, std::uint64_t seed) {
  return realization_maximizers(post, 1, settings, seed).row(0).transpose();
}

Proposal ei_point(const GPState& gp, double best_observed, const std::vector<Interval>& domain,
                  const OptimizerSettings& settings, std::uint64_t seed) {
  auto batch = [&](const Matrix& x) {
    Vector mean, var;
    gp.marginals(x, mean, &var);
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = analytic_ei(mean[i], std::sqrt(var[i]), best_observed);
    return out;
  };
  BoxProblem problem;
  problem.bounds = domain;
  problem.objective = [&](const Vector& x) { return batch(Matrix(x.transpose()))[0]; };
  problem.batch_objective = batch;
  problem.restarts = settings.restarts;
  problem.max_evals = settings.max_evals;
  problem.raw_samples = settings.raw_samples;
  const MaximizeResult r = multistart_maximize(problem, seed);
  return {r.x, r.value};
}

Candidate pkgfn_continuous_step(const NetworkPosterior& post, const std::vector<std::size_t>& nodes, const Matrix& A,
                                const FantasyBatch& fantasy, double nu_star, const OptimizerSettings& settings,
                                std::uint64_t seed, const std::vector<Candidate>& warm_starts) {
  const NetworkSpec& spec = post.spec;
  std::vector<Candidate> best;
  for (std::size_t k : nodes) {
    BoxProblem problem;
    problem.bounds = spec.node_bounds(k);
    problem.objective = [&, k](const Vector& z) { return pkgfn_value(post, k, z, A, fantasy, nu_star).value; };
    problem.restarts = settings.restarts;
    problem.max_evals = settings.max_evals;
    problem.raw_samples = settings.raw_samples;
    for (const Candidate& w : warm_starts) {
      if (w.node == k) problem.extra_starts.push_back(w.z());
    }
    const MaximizeResult r = multistart_maximize(problem, derive_seed(seed, {k}));
    const auto np = static_cast<Eigen::Index>(spec.parents[k].size());
    Candidate c;
    c.node = k;
    c.input.parent_values = r.x.head(np);
    c.input.ext_values = r.x.tail(r.x.size() - np);
    const McEstimate est = pkgfn_value(post, k, r.x, A, fantasy, nu_star);
    c.acq_value = est.value;
    c.acq_stderr = est.std_error;
    c.cost = spec.cost(k, r.x);
    best.push_back(std::move(c));
  }
  return best[select_node(best)];
}

}  // namespace fnbo
