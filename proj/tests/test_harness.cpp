#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fnbo/harness.hpp"
#include "support.hpp"

using namespace fnbo;
using fnbo::testing::Gen;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("fnbo_harness_" + std::to_string(counter_++))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Cheap settings for loop tests.
ExperimentConfig quick(const std::string& algo, double budget) {
  ExperimentConfig c;
  c.algo = algo;
  c.budget = budget;
  c.timing = false;
  c.discrete.M = 3;
  c.discrete.N_T = 3;
  c.discrete.N_L = 3;
  c.discrete.pool_size = 32;
  c.mc.nu_samples = 16;
  c.mc.eifn_samples = 32;
  c.mc.fantasies = 4;
  c.optimizer.restarts = 2;
  c.optimizer.max_evals = 40;
  c.gp.restarts = 1;
  c.gp.max_evals = 30;
  return c;
}

// y2 = sin(3 y1) + x2 with y1 = x1^2 - 0.5 on [0, 1]^2.
ProblemSpec small_chain(std::vector<double> costs) {
  ProblemSpec p;
  p.name = "chain";
  p.spec.num_nodes = 2;
  p.spec.parents = {{}, {0}};
  p.spec.ext_inputs = {{0}, {1}};
  p.spec.domain = {Interval{0.0, 1.0}, Interval{0.0, 1.0}};
  p.spec.parent_ranges = {{}, {Interval{-0.5, 0.5}}};
  p.spec.costs = std::move(costs);
  validate(p.spec);
  p.truth = {[](const Vector& z) { return z[0] * z[0] - 0.5; },
             [](const Vector& z) { return std::sin(3.0 * z[0]) + z[1]; }};
  p.default_costs = p.spec.costs;
  p.default_budget = 20.0;
  return p;
}

std::vector<std::size_t> routed_counts(const TrialResult& r, std::size_t K) {
  std::vector<std::size_t> n(K, 0);
  for (const auto& rec : r.records) {
    if (rec.node) {
      ++n[*rec.node];
    } else {
      for (auto& v : n) ++v;
    }
  }
  return n;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("initial design sizes") {
    CHECK(initial_design(ackmat(), 1).x.rows() == 15);
    const ProblemSpec one = custom_from_json(nlohmann::json::parse(R"({
      "K": 1, "parents": [[]], "ext_inputs": [[1]], "domain": [[-1, 1]], "parent_ranges": [[]], "costs": [1],
      "nodes": [{"kind": "builtin", "name": "identity"}]})"));
    const Observations o = initial_design(one, 2);
    CHECK(o.x.rows() == 3);
    CHECK(o.y.cols() == 1);
  }

  TEST_CASE("initial design is deterministic and propagated") {
    const ProblemSpec p = ackmat();
    const Observations a = initial_design(p, 5), b = initial_design(p, 5), c = initial_design(p, 6);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.x != c.x);
    for (Eigen::Index i = 0; i < a.x.rows(); ++i) {
      const Vector x = a.x.row(i).transpose();
      CHECK((x.head(6).array().abs() <= 2.0).all());
      CHECK(std::abs(x[6]) <= 10.0);
      CHECK(a.y.row(i).transpose() == p.evaluate(x));
    }
  }

  TEST_CASE("zero budget records nothing") {
    const ProblemSpec p = small_chain({1.0, 1.0});
    const TrialResult r = run_trial(quick("fast-pkgfn", 0.0), p, 0);
    CHECK(r.error.empty());
    CHECK(r.records.empty());
    CHECK(r.final_x == r.initial_x_star);
    CHECK(r.final_ground_truth == r.initial_ground_truth);
  }

  TEST_CASE("Fast p-KGFN on AckMat with unit costs") {
    ExperimentConfig cfg = quick("fast-pkgfn", 50.0);
    cfg.costs = std::vector<double>{1.0, 1.0};
    const TrialResult r = run_trial(cfg, resolve_problem(cfg), 0);
    REQUIRE(r.error.empty());
    CHECK(!r.records.empty());
    for (const auto& rec : r.records) {
      REQUIRE(rec.node.has_value());
      CHECK(*rec.node <= 1);
      CHECK(rec.cum_cost <= 50.0);
    }
    CHECK(r.records.back().cum_cost == 50.0);
  }

  TEST_CASE("EIFN on AckMat spends in full-network steps") {
    const ExperimentConfig cfg = quick("eifn", 700.0);
    const TrialResult r = run_trial(cfg, resolve_problem(cfg), 0);
    REQUIRE(r.error.empty());
    CHECK(r.records.size() == 14);
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      CHECK(!r.records[i].node.has_value());
      CHECK(r.records[i].cum_cost == 50.0 * static_cast<double>(i + 1));
    }
  }

  TEST_CASE("ground truth comes from the truth network") {
    const ProblemSpec p = small_chain({1.0, 2.0});
    const TrialResult r = run_trial(quick("fast-pkgfn", 10.0), p, 3);
    REQUIRE(r.error.empty());
    for (const auto& rec : r.records) CHECK(rec.ground_truth == p.objective(rec.x_star));
  }

  TEST_CASE("budget safety and data routing") {
    Gen g(77);
    const char* algos[] = {"fast-pkgfn", "pkgfn", "eifn", "ei", "tsfn", "random"};
    for (int trial = 0; trial < 12; ++trial) {
      const std::vector<double> costs = {g.uniform(0.5, 3.0), g.uniform(0.5, 3.0)};
      const ProblemSpec p = small_chain(costs);
      ExperimentConfig cfg = quick(algos[trial % 6], g.uniform(0.0, 12.0));
      cfg.seed = static_cast<std::uint64_t>(trial);
      const TrialResult r = run_trial(cfg, p, trial);
      REQUIRE(r.error.empty());
      double prev = 0.0;
      for (const auto& rec : r.records) {
        const double spent = rec.node ? costs[*rec.node] : costs[0] + costs[1];
        CHECK(rec.cum_cost == doctest::Approx(prev + spent).epsilon(1e-12));
        CHECK(rec.cum_cost <= cfg.budget);
        prev = rec.cum_cost;
      }
      // The loop stops only when no affordable action remains.
      const double cheapest = is_full_evaluation(parse_algo(cfg.algo)) ? costs[0] + costs[1] : std::min(costs[0], costs[1]);
      CHECK(prev + cheapest > cfg.budget);
      const auto routed = routed_counts(r, 2);
      for (std::size_t k = 0; k < 2; ++k) CHECK(r.node_data_sizes[k] == r.initial_node_sizes[k] + routed[k]);
    }
  }

  TEST_CASE("identical configs give identical traces") {
    const ProblemSpec p = small_chain({1.0, 1.0});
    for (const char* algo : {"fast-pkgfn", "pkgfn", "eifn", "random"}) {
      ExperimentConfig cfg = quick(algo, 6.0);
      cfg.seed = 13;
      const std::string a = format_trace(run_trial(cfg, p, 1).records);
      const std::string b = format_trace(run_trial(cfg, p, 1).records);
      CHECK(a == b);
    }
  }

  TEST_CASE("experiment files are reproducible") {
    TempDir d1, d2;
    ExperimentConfig cfg = quick("random", 300.0);
    cfg.trials = 2;
    cfg.output = d1.path().string();
    run_experiment(cfg);
    cfg.output = d2.path().string();
    run_experiment(cfg);
    for (int t = 0; t < 2; ++t) {
      const std::string name = trace_filename("random", t);
      CHECK(slurp(d1.path() / name) == slurp(d2.path() / name));
      CHECK(!slurp(d1.path() / name).empty());
    }
  }

  TEST_CASE("trace round trip") {
    const ProblemSpec p = small_chain({1.0, 1.0});
    const TrialResult r = run_trial(quick("fast-pkgfn", 5.0), p, 0);
    const std::string csv = format_trace(r.records);
    CHECK(csv.rfind(trace_header() + "\n", 0) == 0);
    const std::vector<TraceRecord> back = parse_trace(csv);
    REQUIRE(back.size() == r.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].iter == r.records[i].iter);
      CHECK(back[i].cum_cost == r.records[i].cum_cost);
      CHECK(back[i].node == r.records[i].node);
      CHECK(back[i].input == r.records[i].input);
      CHECK(back[i].observed == r.records[i].observed);
      CHECK(back[i].nu_star == r.records[i].nu_star);
      CHECK(back[i].x_star == r.records[i].x_star);
      CHECK(back[i].ground_truth == r.records[i].ground_truth);
    }
    CHECK(format_trace(back) == csv);
  }

  TEST_CASE("format_double round trips") {
    Gen g(5);
    for (int i = 0; i < 1000; ++i) {
      const double v = g.normal() * std::pow(10.0, g.integer(-30, 30));
      CHECK(std::stod(format_double(v)) == v);
    }
  }

  TEST_CASE("malformed traces") {
    CHECK_THROWS_AS(parse_trace("bad,header\n"), Error);
    CHECK_THROWS_AS(parse_trace(trace_header() + "\n1,2,3\n"), Error);
  }

  TEST_CASE("config parsing") {
    const ExperimentConfig c = ExperimentConfig::from_json(nlohmann::json::parse(R"({
      "problem": "manu", "algo": "eifn", "budget": 100, "trials": 3, "seed": 9,
      "discrete": {"M": 4, "include_local": false}, "mc": {"fantasies": 8}, "optimizer": {"restarts": 3}
    })"));
    CHECK(c.problem == "manu");
    CHECK(c.algo == "eifn");
    CHECK(c.budget == 100.0);
    CHECK(c.trials == 3);
    CHECK(c.seed == 9);
    CHECK(c.discrete.M == 4);
    CHECK(!c.discrete.include_local);
    CHECK(c.mc.fantasies == 8);
    CHECK(c.optimizer.restarts == 3);
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
  }

  TEST_CASE("config errors") {
    auto code = [](const std::string& text) {
      try {
        ExperimentConfig::from_json(nlohmann::json::parse(text));
      } catch (const Error& e) {
        return e.code();
      }
      FAIL("expected an error");
      return ErrorCode::InvalidConfig;
    };
    CHECK(code(R"({"budjet": 3})") == ErrorCode::InvalidConfig);
    CHECK(code(R"({"discrete": {"m": 3}})") == ErrorCode::InvalidConfig);
    CHECK(code(R"({"algo": "bogus"})") == ErrorCode::InvalidConfig);
    CHECK(code(R"({"budget": "lots"})") == ErrorCode::ParseError);
    TempDir d;
    std::ofstream(d.path() / "bad.json") << "{ not json";
    CHECK_THROWS_AS(ExperimentConfig::load((d.path() / "bad.json").string()), Error);
    ExperimentConfig neg;
    neg.trials = 0;
    CHECK_THROWS_AS(neg.check(ackmat()), Error);
    ExperimentConfig none;
    none.discrete.include_maximizer = none.discrete.include_thompson = none.discrete.include_local = false;
    CHECK_THROWS_AS(none.check(ackmat()), Error);
  }

  TEST_CASE("step curve") {
    std::vector<TraceRecord> recs(2);
    recs[0].cum_cost = 2.0;
    recs[0].ground_truth = -1.0;
    recs[1].cum_cost = 5.0;
    recs[1].ground_truth = -0.5;
    const std::vector<double> c = step_curve(recs, -3.0, {0.0, 1.9, 2.0, 4.9, 5.0, 10.0});
    CHECK(c == std::vector<double>{-3.0, -3.0, -1.0, -1.0, -0.5, -0.5});
  }

  TEST_CASE("summary of a single trial") {
    TempDir in, out;
    ExperimentConfig cfg = quick("random", 200.0);
    cfg.output = in.path().string();
    const std::vector<TrialResult> res = run_experiment(cfg);
    const std::vector<CurveSummary> s = summarize(in.path().string(), out.path().string(), 11);
    REQUIRE(s.size() == 1);
    CHECK(s[0].trials == 1);
    const std::vector<double> expect = step_curve(res[0].records, res[0].initial_ground_truth, s[0].grid);
    CHECK(s[0].mean == expect);
    for (double se : s[0].std_error) CHECK(se == 0.0);
    CHECK(fs::exists(out.path() / "random_summary.csv"));
    CHECK(fs::exists(out.path() / "summary.json"));
  }

  TEST_CASE("summary of two identical traces") {
    TempDir in, out;
    ExperimentConfig cfg = quick("random", 200.0);
    cfg.output = in.path().string();
    run_experiment(cfg);
    fs::copy_file(in.path() / trace_filename("random", 0), in.path() / trace_filename("random", 1));
    nlohmann::json side = nlohmann::json::parse(slurp(in.path() / "random_trial_000.json"));
    side["trial"] = 1;
    std::ofstream(in.path() / "random_trial_001.json") << side.dump();
    const std::vector<CurveSummary> s = summarize(in.path().string(), out.path().string(), 21);
    REQUIRE(s.size() == 1);
    CHECK(s[0].trials == 2);
    for (double se : s[0].std_error) CHECK(se == 0.0);
    CHECK(s[0].final_stderr == 0.0);
  }

  TEST_CASE("Random on AckMat never beats the global maximum") {
    ExperimentConfig cfg = quick("random", 700.0);
    cfg.trials = 10;
    const ProblemSpec p = resolve_problem(cfg);
    double total = 0.0;
    for (int t = 0; t < cfg.trials; ++t) total += run_trial(cfg, p, t).final_ground_truth;
    CHECK(total / cfg.trials <= 0.0);
  }
}
