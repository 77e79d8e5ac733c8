#include "fnbo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>

#include "fnbo/gp.hpp"
#include "fnbo/random.hpp"

namespace fnbo {

Vector ProblemSpec::evaluate(const Vector& x) const { return evaluate_network(spec, truth, x); }

double ProblemSpec::objective(const Vector& x) const { return evaluate(x)[static_cast<Eigen::Index>(spec.final_node())]; }

double ProblemSpec::evaluate_node(std::size_t k, const Vector& z) const {
  if (static_cast<std::size_t>(z.size()) != spec.node_input_dim(k)) {
    throw Error(ErrorCode::DimensionMismatch, "node input has the wrong dimension");
  }
  return truth[k](z);
}

double ackley(const Vector& x) {
  const double n = static_cast<double>(x.size());
  const double sq = x.squaredNorm() / n;
  const double cs = (2.0 * std::numbers::pi * x.array()).cos().sum() / n;
  // Grouped so the origin evaluates to exactly 0.
  return (20.0 - 20.0 * std::exp(-0.2 * std::sqrt(sq))) + (std::numbers::e - std::exp(cs));
}

double neg_matyas(double a, double b) { return -0.26 * (a * a + b * b) + 0.48 * a * b; }

ProblemSpec ackmat() {
  ProblemSpec p;
  p.name = "ackmat";
  NetworkSpec& s = p.spec;
  s.num_nodes = 2;
  s.parents = {{}, {0}};
  s.ext_inputs = {{0, 1, 2, 3, 4, 5}, {6}};
  s.domain.assign(6, Interval{-2.0, 2.0});
  s.domain.push_back(Interval{-10.0, 10.0});
  s.parent_ranges = {{}, {Interval{0.0, 20.0}}};
  s.costs = {1.0, 49.0};
  validate(s);
  p.truth = {[](const Vector& z) { return ackley(z); }, [](const Vector& z) { return neg_matyas(z[0], z[1]); }};
  p.default_costs = s.costs;
  p.default_budget = 700.0;
  return p;
}

ProblemSpec manu(std::uint64_t seed) {
  ProblemSpec p;
  p.name = "manu";
  NetworkSpec& s = p.spec;
  s.num_nodes = 4;
  s.parents = {{}, {0}, {}, {1, 2}};
  s.ext_inputs = {{0}, {}, {1}, {}};
  s.domain = {Interval{-1.0, 1.0}, Interval{-1.0, 1.0}};
  s.parent_ranges = {{}, {Interval{-2.0, 2.0}}, {}, {Interval{-1.0, 1.0}, Interval{-1.0, 1.0}}};
  s.costs = {5.0, 10.0, 10.0, 45.0};
  validate(s);

  const double lengthscales[] = {0.631, 1.0, 1.0, 3.0};
  const double outputscales[] = {0.631, 0.631, 0.631, 10.0};
  const Interval clamps[] = {{-2.0, 2.0}, {-1.0, 1.0}, {-1.0, 1.0}};
  for (std::size_t k = 0; k < 4; ++k) {
    const Vector ls = Vector::Constant(static_cast<Eigen::Index>(s.node_input_dim(k)), lengthscales[k]);
    auto path = std::make_shared<PathSample>(
        sample_prior_path(KernelFamily::Matern52, ls, outputscales[k], derive_seed(seed, {k})));
    if (k < 3) {
      const Interval c = clamps[k];
      p.truth.push_back([path, c](const Vector& z) { return c.clamp((*path)(z)); });
    } else {
      p.truth.push_back([path](const Vector& z) { return (*path)(z); });
    }
  }
  p.default_costs = s.costs;
  p.default_budget = 700.0;
  return p;
}

namespace {

using nlohmann::json;

NodeFunction polynomial_node(const json& node, std::size_t dim) {
  std::vector<std::pair<double, std::vector<int>>> terms;
  for (const json& t : node.at("terms")) {
    std::vector<int> powers = t.value("powers", std::vector<int>(dim, 0));
    if (powers.size() != dim) throw Error(ErrorCode::DimensionMismatch, "polynomial term has the wrong arity");
    terms.emplace_back(t.at("coef").get<double>(), std::move(powers));
  }
  return [terms](const Vector& z) {
    double total = 0.0;
    for (const auto& [coef, powers] : terms) {
      double v = coef;
      for (std::size_t i = 0; i < powers.size(); ++i) v *= std::pow(z[static_cast<Eigen::Index>(i)], powers[i]);
      total += v;
    }
    return total;
  };
}

// Multilinear interpolation on a rectilinear grid; values row-major with the
// last axis varying fastest. Queries outside the grid are clamped to it.
NodeFunction tabulated_node(const json& node, std::size_t dim) {
  auto axes = node.at("axes").get<std::vector<std::vector<double>>>();
  auto values = node.at("values").get<std::vector<double>>();
  if (axes.size() != dim) throw Error(ErrorCode::DimensionMismatch, "tabulated node needs one axis per input");
  std::size_t total = 1;
  for (const auto& a : axes) {
    if (a.size() < 2) throw Error(ErrorCode::ParseError, "tabulated axis needs at least two knots");
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (!(a[i] > a[i - 1])) throw Error(ErrorCode::ParseError, "tabulated axis must be increasing");
    }
    total *= a.size();
  }
  if (values.size() != total) throw Error(ErrorCode::DimensionMismatch, "tabulated values do not match the grid");
  return [axes, values](const Vector& z) {
    const std::size_t d = axes.size();
    std::vector<std::size_t> lo(d);
    std::vector<double> t(d);
    for (std::size_t i = 0; i < d; ++i) {
      const auto& a = axes[i];
      const double v = std::clamp(z[static_cast<Eigen::Index>(i)], a.front(), a.back());
      std::size_t j = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), v) - a.begin());
      j = std::clamp<std::size_t>(j, 1, a.size() - 1) - 1;
      lo[i] = j;
      t[i] = (v - a[j]) / (a[j + 1] - a[j]);
    }
    double out = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const bool up = (corner >> i) & 1U;
        w *= up ? t[i] : 1.0 - t[i];
        flat = flat * axes[i].size() + lo[i] + (up ? 1 : 0);
      }
      if (w != 0.0) out += w * values[flat];
    }
    return out;
  };
}

NodeFunction builtin_node(const json& node, std::size_t dim) {
  const std::string name = node.at("name").get<std::string>();
  if (name == "ackley") return [](const Vector& z) { return ackley(z); };
  if (name == "neg_matyas") {
    if (dim != 2) throw Error(ErrorCode::DimensionMismatch, "neg_matyas takes two inputs");
    return [](const Vector& z) { return neg_matyas(z[0], z[1]); };
  }
  if (name == "identity") {
    if (dim != 1) throw Error(ErrorCode::DimensionMismatch, "identity takes one input");
    return [](const Vector& z) { return z[0]; };
  }
  if (name == "sum") return [](const Vector& z) { return z.sum(); };
  throw Error(ErrorCode::UnknownFunctionKind, "unknown builtin '" + name + "'");
}

}  // namespace

ProblemSpec custom_from_json(const nlohmann::json& doc) {
  ProblemSpec p;
  p.spec = network_from_json(doc);
  try {
    p.name = doc.value("name", std::string("custom"));
    p.default_budget = doc.value("budget", 100.0);
    const json& nodes = doc.at("nodes");
    if (!nodes.is_array() || nodes.size() != p.spec.num_nodes) {
      throw Error(ErrorCode::DimensionMismatch, "need one node descriptor per node");
    }
    for (std::size_t k = 0; k < p.spec.num_nodes; ++k) {
      const json& node = nodes[k];
      const std::string kind = node.at("kind").get<std::string>();
      const std::size_t dim = p.spec.node_input_dim(k);
      if (kind == "polynomial") {
        p.truth.push_back(polynomial_node(node, dim));
      } else if (kind == "tabulated") {
        p.truth.push_back(tabulated_node(node, dim));
      } else if (kind == "builtin") {
        p.truth.push_back(builtin_node(node, dim));
      } else {
        throw Error(ErrorCode::UnknownFunctionKind, "unknown node kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  p.default_costs = p.spec.costs;
  return p;
}

ProblemSpec load_custom(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return custom_from_json(doc);
}

ProblemSpec problem_by_name(const std::string& name_or_path) {
  if (name_or_path == "ackmat") return ackmat();
  if (name_or_path == "manu") return manu();
  return load_custom(name_or_path);
}

}  // namespace fnbo
