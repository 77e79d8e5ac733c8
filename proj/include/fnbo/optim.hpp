#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fnbo/network.hpp"

namespace fnbo {

/// Objective returning its value and, optionally, writing the gradient.
/// When `grad` is null only the value is needed.
using GradObjective = std::function<double(const Vector& x, Vector* grad)>;
using Objective = std::function<double(const Vector& x)>;
/// Evaluates many points at once (rows of the matrix); used to screen starts.
using BatchObjective = std::function<Vector(const Matrix& points)>;

struct BoxProblem {
  std::vector<Interval> bounds;
  Objective objective;              // used when no gradient is available
  GradObjective grad_objective;     // preferred when set
  BatchObjective batch_objective;   // optional, for raw-sample screening
  int restarts = 10;
  int max_evals = 200;
  /// When larger than `restarts`, this many Sobol points are scored and the best
  /// `restarts` of them become start points.
  int raw_samples = 0;
  /// Extra start points (e.g. a previous optimum) tried in addition to the Sobol starts.
  std::vector<Vector> extra_starts;

  std::size_t dim() const { return bounds.size(); }
};

struct MaximizeResult {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  /// Best-so-far value after each evaluation, one vector per restart.
  std::vector<std::vector<double>> histories;
};

/// Scrambled Sobol points in [0,1]^dim, one point per row. Uses nested uniform
/// (Owen) scrambling keyed by `seed`; the first 2^m rows form a (t,m,s)-net.
Matrix sobol_points(std::size_t dim, std::size_t count, std::uint64_t seed);

/// Maps unit-box rows onto the given box.
Matrix scale_to_box(const Matrix& unit, const std::vector<Interval>& bounds);

Vector project_to_box(const Vector& x, const std::vector<Interval>& bounds);

/// Multi-start local maximization. Restarts use projected L-BFGS when a gradient
/// is supplied and a Hooke-Jeeves pattern search otherwise.
MaximizeResult multistart_maximize(const BoxProblem& problem, std::uint64_t seed, bool record_history = false);

/// Single local runs, exposed for tests.
MaximizeResult maximize_pattern_search(const Objective& f, const std::vector<Interval>& bounds, const Vector& start,
                                       int max_evals);
MaximizeResult maximize_lbfgs(const GradObjective& f, const std::vector<Interval>& bounds, const Vector& start,
                              int max_evals);

}  // namespace fnbo
