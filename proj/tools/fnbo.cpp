#include <CLI11.hpp>

#include <iostream>

#include "fnbo/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimization of function networks with partial evaluations"};
  app.require_subcommand(1);

  std::string config_path, algo, out_dir;
  int trials = 0;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run BO trials and write trace CSVs");
  run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  auto* algo_opt = run->add_option("--algo", algo, "policy")->check(
      CLI::IsMember({"fast-pkgfn", "pkgfn", "eifn", "ei", "tsfn", "random"}));
  auto* trials_opt = run->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "base seed");
  auto* out_opt = run->add_option("--out", out_dir, "output directory");

  std::string sum_in, sum_out;
  auto* sum = app.add_subcommand("summarize", "aggregate traces into progress curves and runtime tables");
  sum->add_option("--in", sum_in, "directory with trace files")->required()->check(CLI::ExistingDirectory);
  sum->add_option("--out", sum_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      fnbo::ExperimentConfig cfg = fnbo::ExperimentConfig::load(config_path);
      if (*algo_opt) cfg.algo = algo;
      if (*trials_opt) cfg.trials = trials;
      if (*seed_opt) cfg.seed = seed;
      if (*out_opt) cfg.output = out_dir;
      const auto results = fnbo::run_experiment(cfg);
      int failed = 0;
      for (std::size_t t = 0; t < results.size(); ++t) {
        const auto& r = results[t];
        std::cout << cfg.algo << " trial " << t << ": " << r.records.size() << " iterations, final ground truth "
                  << fnbo::format_double(r.final_ground_truth) << "\n";
        if (!r.error.empty()) ++failed;
      }
      return failed == 0 ? 0 : 2;
    }
    if (*sum) {
      for (const auto& s : fnbo::summarize(sum_in, sum_out)) {
        std::cout << s.algo << ": " << s.trials << " trials, final " << fnbo::format_double(s.final_mean) << " +- "
                  << fnbo::format_double(2.0 * s.final_stderr) << ", acquisition "
                  << fnbo::format_double(s.mean_acq_seconds) << " s/iter\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
