#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fnbo/acquisition.hpp"
#include "fnbo/discrete.hpp"
#include "fnbo/problems.hpp"

namespace fnbo {

enum class Algo { FastPkgfn, Pkgfn, Eifn, Ei, Tsfn, Random };

Algo parse_algo(const std::string& name);
std::string algo_name(Algo a);
/// True for policies that evaluate every node at one network input.
bool is_full_evaluation(Algo a);

struct McSettings {
  int nu_samples = 64;
  int eifn_samples = 128;
  int fantasies = 16;
};

struct GpSettings {
  int restarts = 5;
  int max_evals = 60;
  /// Hyperparameters of a node are re-optimized on every refit_every-th new
  /// observation; other updates recondition with the previous hyperparameters.
  int refit_every = 1;
};

struct ExperimentConfig {
  std::string problem = "ackmat";
  std::string algo = "fast-pkgfn";
  double budget = 700.0;
  int trials = 1;
  std::uint64_t seed = 0;
  DiscreteSetConfig discrete;
  McSettings mc;
  OptimizerSettings optimizer;
  std::string output = "results";
  std::optional<std::vector<double>> costs;
  GpSettings gp;
  /// When false, acquisition times are written as 0 so traces are reproducible
  /// byte for byte.
  bool timing = true;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void check(const ProblemSpec& problem) const;
};

/// Problem named in the config, with any cost override applied.
ProblemSpec resolve_problem(const ExperimentConfig& cfg);

struct TraceRecord {
  int trial = 0;
  int iter = 0;
  double cum_cost = 0.0;
  std::optional<std::size_t> node;  // empty for a full-network evaluation
  Vector input;
  double observed = 0.0;
  double nu_star = 0.0;
  Vector x_star;
  double ground_truth = 0.0;
  double acq_seconds = 0.0;
};

/// Full-network observations: inputs (rows) and all node outputs (rows).
struct Observations {
  Matrix x;
  Matrix y;
};

Observations initial_design(const ProblemSpec& problem, std::uint64_t seed);

struct TrialResult {
  std::vector<TraceRecord> records;
  Vector initial_x_star;
  double initial_nu_star = 0.0;
  double initial_ground_truth = 0.0;
  Vector final_x;
  double final_ground_truth = 0.0;
  std::vector<std::size_t> node_data_sizes;  // training-set size per node at the end
  std::vector<std::size_t> initial_node_sizes;
  std::string error;  // non-empty if the trial aborted
};

TrialResult run_trial(const ExperimentConfig& cfg, const ProblemSpec& problem, int trial);

std::string trace_header();
std::string format_record(const TraceRecord& r);
std::string format_trace(const std::vector<TraceRecord>& records);
/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Runs all trials (threads capped by FNBO_THREADS) and writes one trace CSV
/// plus one JSON sidecar per trial into cfg.output. Returns the results in
/// trial order.
std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg);

std::string trace_filename(const std::string& algo, int trial);

struct CurveSummary {
  std::string algo;
  int trials = 0;
  double budget = 0.0;
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> std_error;
  double mean_acq_seconds = 0.0;
  double stderr_acq_seconds = 0.0;
  double final_mean = 0.0;
  double final_stderr = 0.0;
  std::vector<std::pair<double, double>> trial_points;  // (total acquisition seconds, final value)
};

/// Step interpolation of one trace onto `grid`, starting from `initial`.
std::vector<double> step_curve(const std::vector<TraceRecord>& records, double initial,
                               const std::vector<double>& grid);

/// Reads every trial in `in_dir`, writes `<algo>_summary.csv` per algorithm and
/// `summary.json` to `out_dir`.
std::vector<CurveSummary> summarize(const std::string& in_dir, const std::string& out_dir, int grid_points = 101);

std::vector<TraceRecord> parse_trace(const std::string& csv);

}  // namespace fnbo
