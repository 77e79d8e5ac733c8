#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnbo/error.hpp"

namespace fnbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Interval {
  double lower = 0.0;
  double upper = 1.0;

  double width() const { return upper - lower; }
  bool contains(double v, double tol = 1e-12) const { return v >= lower - tol && v <= upper + tol; }
  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
};

/// Directed acyclic function network. Node and dimension indices are 0-based
/// in memory; the JSON form uses 1-based indices.
struct NetworkSpec {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::size_t>> parents;     // ascending, every entry < node index
  std::vector<std::vector<std::size_t>> ext_inputs;  // ascending dimension indices
  std::vector<Interval> domain;                      // one interval per external input dimension
  std::vector<std::vector<Interval>> parent_ranges;  // parent_ranges[k][i] bounds parents[k][i]
  std::vector<double> costs;

  std::size_t input_dim() const { return domain.size(); }
  std::size_t final_node() const { return num_nodes - 1; }
  std::size_t node_input_dim(std::size_t k) const { return parents[k].size() + ext_inputs[k].size(); }

  /// Evaluation cost of node k at input z. Costs are constant per node.
  double cost(std::size_t k, const Vector& /*z*/) const { return costs[k]; }
  double full_cost() const;

  /// Box for node k's input: parent output ranges followed by the domain slices.
  std::vector<Interval> node_bounds(std::size_t k) const;

  /// Nodes that consume node k's output, directly or transitively.
  std::vector<bool> descendants(std::size_t k) const;

  bool in_domain(const Vector& x, double tol = 1e-12) const;
};

/// z_k split into its two parts; `concat()` gives the GP input vector.
struct NodeInput {
  Vector parent_values;
  Vector ext_values;

  Vector concat() const;
};

using NodeFunction = std::function<double(const Vector&)>;

/// Throws Error with the code of the first violated invariant.
void validate(const NetworkSpec& spec);

/// Recursive evaluation y_k = f_k(y_parents, x_ext) in index order.
Vector evaluate_network(const NetworkSpec& spec, std::span<const NodeFunction> funcs, const Vector& x);

NodeInput assemble_node_input(const NetworkSpec& spec, std::size_t k, const Vector& parent_values,
                              const Vector& x);

NetworkSpec network_from_json(const nlohmann::json& doc);
nlohmann::json network_to_json(const NetworkSpec& spec);

}  // namespace fnbo
