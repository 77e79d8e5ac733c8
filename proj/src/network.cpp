#include "fnbo/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fnbo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::BadOrdering: return "BadOrdering";
    case ErrorCode::DanglingFinalNode: return "DanglingFinalNode";
    case ErrorCode::BadInterval: return "BadInterval";
    case ErrorCode::NonpositiveCost: return "NonpositiveCost";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::DuplicateInputs: return "DuplicateInputs";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyDiscreteSet: return "EmptyDiscreteSet";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownFunctionKind: return "UnknownFunctionKind";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

double NetworkSpec::full_cost() const {
  double total = 0.0;
  for (double c : costs) total += c;
  return total;
}

std::vector<Interval> NetworkSpec::node_bounds(std::size_t k) const {
  std::vector<Interval> bounds = parent_ranges[k];
  for (std::size_t i : ext_inputs[k]) bounds.push_back(domain[i]);
  return bounds;
}

std::vector<bool> NetworkSpec::descendants(std::size_t k) const {
  std::vector<bool> out(num_nodes, false);
  for (std::size_t j = k + 1; j < num_nodes; ++j) {
    for (std::size_t p : parents[j]) {
      if (p == k || out[p]) {
        out[j] = true;
        break;
      }
    }
  }
  return out;
}

bool NetworkSpec::in_domain(const Vector& x, double tol) const {
  if (static_cast<std::size_t>(x.size()) != domain.size()) return false;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (!domain[i].contains(x[static_cast<Eigen::Index>(i)], tol)) return false;
  }
  return true;
}

Vector NodeInput::concat() const {
  Vector z(parent_values.size() + ext_values.size());
  z << parent_values, ext_values;
  return z;
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

std::string node_name(std::size_t k) { return "node " + std::to_string(k + 1); }

bool has_cycle(const NetworkSpec& spec) {
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> state(spec.num_nodes, 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t k) {
    state[k] = 1;
    for (std::size_t p : spec.parents[k]) {
      if (state[p] == 1) return true;
      if (state[p] == 0 && visit(p)) return true;
    }
    state[k] = 2;
    return false;
  };
  for (std::size_t k = 0; k < spec.num_nodes; ++k) {
    if (state[k] == 0 && visit(k)) return true;
  }
  return false;
}

}  // namespace

void validate(const NetworkSpec& spec) {
  const std::size_t K = spec.num_nodes;
  const std::size_t d = spec.domain.size();
  if (K == 0) fail(ErrorCode::DimensionMismatch, "network has no nodes");
  if (spec.parents.size() != K || spec.ext_inputs.size() != K || spec.parent_ranges.size() != K ||
      spec.costs.size() != K) {
    fail(ErrorCode::DimensionMismatch, "per-node lists must all have K entries");
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t p : spec.parents[k]) {
      if (p >= K) fail(ErrorCode::BadIndex, node_name(k) + " has parent index out of range");
    }
    for (std::size_t i : spec.ext_inputs[k]) {
      if (i >= d) fail(ErrorCode::BadIndex, node_name(k) + " uses an external input outside 1..d");
    }
    if (spec.parent_ranges[k].size() != spec.parents[k].size()) {
      fail(ErrorCode::DimensionMismatch, node_name(k) + " needs one parent range per parent");
    }
    if (spec.node_input_dim(k) == 0) fail(ErrorCode::DimensionMismatch, node_name(k) + " has no inputs");
  }

  if (has_cycle(spec)) fail(ErrorCode::CycleDetected, "parent relation contains a cycle");

  for (std::size_t k = 0; k < K; ++k) {
    const auto& ps = spec.parents[k];
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i] >= k) fail(ErrorCode::BadOrdering, node_name(k) + " has parent " + node_name(ps[i]));
      if (i > 0 && ps[i] <= ps[i - 1]) fail(ErrorCode::BadOrdering, node_name(k) + " parents not ascending");
    }
    const auto& es = spec.ext_inputs[k];
    for (std::size_t i = 1; i < es.size(); ++i) {
      if (es[i] <= es[i - 1]) fail(ErrorCode::BadOrdering, node_name(k) + " external inputs not ascending");
    }
  }

  std::vector<bool> consumed(K, false);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t p : spec.parents[k]) consumed[p] = true;
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    if (!consumed[k]) fail(ErrorCode::DanglingFinalNode, node_name(k) + " output is never consumed");
  }

  auto check_interval = [](const Interval& iv, const std::string& what) {
    if (!std::isfinite(iv.lower) || !std::isfinite(iv.upper) || !(iv.lower < iv.upper)) {
      fail(ErrorCode::BadInterval, what);
    }
  };
  for (std::size_t i = 0; i < d; ++i) check_interval(spec.domain[i], "domain dimension " + std::to_string(i + 1));
  for (std::size_t k = 0; k < K; ++k) {
    for (const auto& iv : spec.parent_ranges[k]) check_interval(iv, "parent range of " + node_name(k));
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!(spec.costs[k] > 0.0) || !std::isfinite(spec.costs[k])) {
      fail(ErrorCode::NonpositiveCost, node_name(k) + " cost must be positive");
    }
  }
}

NodeInput assemble_node_input(const NetworkSpec& spec, std::size_t k, const Vector& parent_values,
                              const Vector& x) {
  if (k >= spec.num_nodes) throw Error(ErrorCode::BadIndex, "node index out of range");
  if (static_cast<std::size_t>(parent_values.size()) != spec.parents[k].size()) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(spec.parents[k].size()) +
                                                  " parent values for " + node_name(k));
  }
  if (static_cast<std::size_t>(x.size()) != spec.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "network input must have dimension " +
                                                  std::to_string(spec.input_dim()));
  }
  NodeInput in;
  in.parent_values = parent_values;
  in.ext_values.resize(static_cast<Eigen::Index>(spec.ext_inputs[k].size()));
  for (std::size_t i = 0; i < spec.ext_inputs[k].size(); ++i) {
    in.ext_values[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(spec.ext_inputs[k][i])];
  }
  return in;
}

Vector evaluate_network(const NetworkSpec& spec, std::span<const NodeFunction> funcs, const Vector& x) {
  if (funcs.size() != spec.num_nodes) throw Error(ErrorCode::DimensionMismatch, "need one function per node");
  if (!spec.in_domain(x)) throw Error(ErrorCode::DomainViolation, "network input outside domain");
  Vector y(static_cast<Eigen::Index>(spec.num_nodes));
  for (std::size_t k = 0; k < spec.num_nodes; ++k) {
    Vector pv(static_cast<Eigen::Index>(spec.parents[k].size()));
    for (std::size_t i = 0; i < spec.parents[k].size(); ++i) {
      pv[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(spec.parents[k][i])];
    }
    y[static_cast<Eigen::Index>(k)] = funcs[k](assemble_node_input(spec, k, pv, x).concat());
  }
  return y;
}

namespace {

Interval interval_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::ParseError, "interval must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<std::size_t> indices_from_json(const nlohmann::json& j) {
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    const long long idx = v.get<long long>();
    if (idx < 1) throw Error(ErrorCode::BadIndex, "indices are 1-based");
    out.push_back(static_cast<std::size_t>(idx - 1));
  }
  return out;
}

}  // namespace

NetworkSpec network_from_json(const nlohmann::json& doc) {
  NetworkSpec spec;
  try {
    const long long K = doc.at("K").get<long long>();
    if (K < 1) throw Error(ErrorCode::DimensionMismatch, "K must be positive");
    spec.num_nodes = static_cast<std::size_t>(K);
    for (const auto& p : doc.at("parents")) spec.parents.push_back(indices_from_json(p));
    for (const auto& e : doc.at("ext_inputs")) spec.ext_inputs.push_back(indices_from_json(e));
    for (const auto& iv : doc.at("domain")) spec.domain.push_back(interval_from_json(iv));
    for (const auto& node : doc.at("parent_ranges")) {
      std::vector<Interval> ranges;
      for (const auto& iv : node) ranges.push_back(interval_from_json(iv));
      spec.parent_ranges.push_back(std::move(ranges));
    }
    for (const auto& c : doc.at("costs")) spec.costs.push_back(c.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  validate(spec);
  return spec;
}

nlohmann::json network_to_json(const NetworkSpec& spec) {
  nlohmann::json doc;
  doc["K"] = spec.num_nodes;
  auto one_based = [](const std::vector<std::size_t>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i : v) arr.push_back(i + 1);
    return arr;
  };
  doc["parents"] = nlohmann::json::array();
  doc["ext_inputs"] = nlohmann::json::array();
  doc["parent_ranges"] = nlohmann::json::array();
  for (std::size_t k = 0; k < spec.num_nodes; ++k) {
    doc["parents"].push_back(one_based(spec.parents[k]));
    doc["ext_inputs"].push_back(one_based(spec.ext_inputs[k]));
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& iv : spec.parent_ranges[k]) ranges.push_back({iv.lower, iv.upper});
    doc["parent_ranges"].push_back(ranges);
  }
  doc["domain"] = nlohmann::json::array();
  for (const auto& iv : spec.domain) doc["domain"].push_back({iv.lower, iv.upper});
  doc["costs"] = spec.costs;
  return doc;
}

}  // namespace fnbo
