#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fnbo/network.hpp"

namespace fnbo {

/// A benchmark network with its true node functions.
struct ProblemSpec {
  std::string name;
  NetworkSpec spec;
  std::vector<NodeFunction> truth;
  std::vector<double> default_costs;
  double default_budget = 0.0;

  /// All node outputs at network input x.
  Vector evaluate(const Vector& x) const;
  /// Final node output at x.
  double objective(const Vector& x) const;
  /// Node k's true output at node input z.
  double evaluate_node(std::size_t k, const Vector& z) const;
};

/// Ackley function with its global minimum 0 at the origin.
double ackley(const Vector& x);

/// Negated Matyas function of (y1, x').
double neg_matyas(double a, double b);

/// Six-dimensional Ackley feeding a negated Matyas node.
ProblemSpec ackmat();

constexpr std::uint64_t kManuDefaultSeed = 20240601;

/// Four-node manufacturing network whose node functions are fixed draws from
/// Matern-5/2 GP priors.
ProblemSpec manu(std::uint64_t seed = kManuDefaultSeed);

/// Custom network from a JSON document: the network fields plus a `nodes`
/// array of function descriptors.
ProblemSpec custom_from_json(const nlohmann::json& doc);
ProblemSpec load_custom(const std::string& path);

/// `ackmat`, `manu`, or a path to a custom JSON file.
ProblemSpec problem_by_name(const std::string& name_or_path);

}  // namespace fnbo
