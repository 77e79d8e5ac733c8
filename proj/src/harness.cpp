#include "fnbo/harness.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "fnbo/random.hpp"

namespace fnbo {

namespace fs = std::filesystem;
using nlohmann::json;

Algo parse_algo(const std::string& name) {
  if (name == "fast-pkgfn") return Algo::FastPkgfn;
  if (name == "pkgfn") return Algo::Pkgfn;
  if (name == "eifn") return Algo::Eifn;
  if (name == "ei") return Algo::Ei;
  if (name == "tsfn") return Algo::Tsfn;
  if (name == "random") return Algo::Random;
  throw Error(ErrorCode::InvalidConfig, "unknown algorithm '" + name + "'");
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::FastPkgfn: return "fast-pkgfn";
    case Algo::Pkgfn: return "pkgfn";
    case Algo::Eifn: return "eifn";
    case Algo::Ei: return "ei";
    case Algo::Tsfn: return "tsfn";
    case Algo::Random: return "random";
  }
  return "unknown";
}

bool is_full_evaluation(Algo a) { return a != Algo::FastPkgfn && a != Algo::Pkgfn; }

// ---------------------------------------------------------------------------
// Configuration

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw Error(ErrorCode::InvalidConfig, "unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  ExperimentConfig c;
  try {
    reject_unknown(doc,
                   {"problem", "algo", "budget", "trials", "seed", "discrete", "mc", "optimizer", "output", "costs",
                    "gp", "timing"},
                   "config");
    read(doc, "problem", c.problem);
    read(doc, "algo", c.algo);
    read(doc, "budget", c.budget);
    read(doc, "trials", c.trials);
    read(doc, "seed", c.seed);
    read(doc, "output", c.output);
    read(doc, "timing", c.timing);
    if (doc.contains("costs")) c.costs = doc.at("costs").get<std::vector<double>>();
    if (doc.contains("discrete")) {
      const json& d = doc.at("discrete");
      reject_unknown(d, {"M", "N_T", "N_L", "r", "pool_size", "include_maximizer", "include_thompson", "include_local"},
                     "discrete");
      read(d, "M", c.discrete.M);
      read(d, "N_T", c.discrete.N_T);
      read(d, "N_L", c.discrete.N_L);
      read(d, "r", c.discrete.r);
      read(d, "pool_size", c.discrete.pool_size);
      read(d, "include_maximizer", c.discrete.include_maximizer);
      read(d, "include_thompson", c.discrete.include_thompson);
      read(d, "include_local", c.discrete.include_local);
    }
    if (doc.contains("mc")) {
      const json& m = doc.at("mc");
      reject_unknown(m, {"nu_samples", "eifn_samples", "fantasies"}, "mc");
      read(m, "nu_samples", c.mc.nu_samples);
      read(m, "eifn_samples", c.mc.eifn_samples);
      read(m, "fantasies", c.mc.fantasies);
    }
    if (doc.contains("optimizer")) {
      const json& o = doc.at("optimizer");
      reject_unknown(o, {"restarts", "max_evals", "raw_samples"}, "optimizer");
      read(o, "restarts", c.optimizer.restarts);
      read(o, "max_evals", c.optimizer.max_evals);
      read(o, "raw_samples", c.optimizer.raw_samples);
    }
    if (doc.contains("gp")) {
      const json& g = doc.at("gp");
      reject_unknown(g, {"restarts", "max_evals", "refit_every"}, "gp");
      read(g, "restarts", c.gp.restarts);
      read(g, "max_evals", c.gp.max_evals);
      read(g, "refit_every", c.gp.refit_every);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  parse_algo(c.algo);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return from_json(doc);
}

json ExperimentConfig::to_json() const {
  json j = {{"problem", problem},
            {"algo", algo},
            {"budget", budget},
            {"trials", trials},
            {"seed", seed},
            {"output", output},
            {"timing", timing},
            {"discrete",
             {{"M", discrete.M},
              {"N_T", discrete.N_T},
              {"N_L", discrete.N_L},
              {"r", discrete.r},
              {"pool_size", discrete.pool_size},
              {"include_maximizer", discrete.include_maximizer},
              {"include_thompson", discrete.include_thompson},
              {"include_local", discrete.include_local}}},
            {"mc", {{"nu_samples", mc.nu_samples}, {"eifn_samples", mc.eifn_samples}, {"fantasies", mc.fantasies}}},
            {"optimizer",
             {{"restarts", optimizer.restarts},
              {"max_evals", optimizer.max_evals},
              {"raw_samples", optimizer.raw_samples}}},
            {"gp", {{"restarts", gp.restarts}, {"max_evals", gp.max_evals}, {"refit_every", gp.refit_every}}}};
  if (costs) j["costs"] = *costs;
  return j;
}

void ExperimentConfig::check(const ProblemSpec& problem) const {
  parse_algo(algo);
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw Error(ErrorCode::InvalidConfig, "budget must be nonnegative");
  if (trials < 1) throw Error(ErrorCode::InvalidConfig, "trials must be at least 1");
  if (mc.nu_samples < 1 || mc.eifn_samples < 1 || mc.fantasies < 1) {
    throw Error(ErrorCode::InvalidConfig, "sample counts must be positive");
  }
  if (optimizer.restarts < 1 || optimizer.max_evals < 1) {
    throw Error(ErrorCode::InvalidConfig, "optimizer settings must be positive");
  }
  if (gp.restarts < 0 || gp.max_evals < 1 || gp.refit_every < 1) {
    throw Error(ErrorCode::InvalidConfig, "gp settings out of range");
  }
  const Algo a = parse_algo(algo);
  if (a == Algo::FastPkgfn || a == Algo::Pkgfn) discrete.check();
  if (a == Algo::FastPkgfn && !discrete.include_maximizer && !discrete.include_thompson && !discrete.include_local) {
    throw Error(ErrorCode::EmptySet, "every discrete-set source is disabled");
  }
  if (costs && costs->size() != problem.spec.num_nodes) {
    throw Error(ErrorCode::DimensionMismatch, "costs override needs one entry per node");
  }
}

ProblemSpec resolve_problem(const ExperimentConfig& cfg) {
  ProblemSpec p = problem_by_name(cfg.problem);
  if (cfg.costs) {
    if (cfg.costs->size() != p.spec.num_nodes) {
      throw Error(ErrorCode::DimensionMismatch, "costs override needs one entry per node");
    }
    p.spec.costs = *cfg.costs;
    validate(p.spec);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Trial loop

Observations initial_design(const ProblemSpec& problem, std::uint64_t seed) {
  const std::size_t d = problem.spec.input_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(2 * d + 1);
  Rng rng(seed);
  Observations obs;
  obs.x.resize(n, static_cast<Eigen::Index>(d));
  obs.y.resize(n, static_cast<Eigen::Index>(problem.spec.num_nodes));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const Interval& iv = problem.spec.domain[j];
      obs.x(i, static_cast<Eigen::Index>(j)) = boost::random::uniform_real_distribution<double>(iv.lower, iv.upper)(rng);
    }
    obs.y.row(i) = problem.evaluate(obs.x.row(i).transpose()).transpose();
  }
  return obs;
}

namespace {

enum SeedTag : std::uint64_t {
  kDesign = 1,
  kFit,
  kBase,
  kMean,
  kEifnBase,
  kEifnOpt,
  kRealization,
  kDiscrete,
  kFantasy,
  kPkgfn,
  kBaseline,
};

void append_row(Matrix& m, const Vector& row) {
  m.conservativeResize(m.rows() + 1, row.size());
  m.row(m.rows() - 1) = row.transpose();
}

void append_value(Vector& v, double value) {
  v.conservativeResize(v.size() + 1);
  v[v.size() - 1] = value;
}

// Per-node training data and GPs for one trial.
class NodeModels {
 public:
  NodeModels(const NetworkSpec& spec, const GpSettings& settings)
      : spec_(spec), settings_(settings), z_(spec.num_nodes), y_(spec.num_nodes), gps_(spec.num_nodes),
        hyper_(spec.num_nodes), added_(spec.num_nodes, 0) {
    for (std::size_t k = 0; k < spec.num_nodes; ++k) {
      z_[k].resize(0, static_cast<Eigen::Index>(spec.node_input_dim(k)));
      y_[k].resize(0);
    }
  }

  // Returns false when z duplicates an existing input (then nothing is stored).
  bool add(std::size_t k, const Vector& z, double y) {
    for (Eigen::Index i = 0; i < z_[k].rows(); ++i) {
      if ((z_[k].row(i).transpose() - z).lpNorm<Eigen::Infinity>() <= 1e-12) return false;
    }
    append_row(z_[k], z);
    append_value(y_[k], y);
    ++added_[k];
    return true;
  }

  void add_full(const Vector& x, const Vector& outputs) {
    for (std::size_t k = 0; k < spec_.num_nodes; ++k) {
      Vector parents(static_cast<Eigen::Index>(spec_.parents[k].size()));
      for (std::size_t i = 0; i < spec_.parents[k].size(); ++i) {
        parents[static_cast<Eigen::Index>(i)] = outputs[static_cast<Eigen::Index>(spec_.parents[k][i])];
      }
      add(k, assemble_node_input(spec_, k, parents, x).concat(), outputs[static_cast<Eigen::Index>(k)]);
    }
  }

  void fit_node(std::size_t k, std::uint64_t seed, bool force) {
    const std::vector<Interval> bounds = spec_.node_bounds(k);
    if (force || !hyper_[k] || added_[k] % settings_.refit_every == 0) {
      FitOptions opts;
      opts.restarts = settings_.restarts;
      opts.max_evals = settings_.max_evals;
      opts.warm_start = hyper_[k];
      opts.seed = seed;
      gps_[k] = std::make_shared<const GPState>(fit(z_[k], y_[k], bounds, opts));
      hyper_[k] = gps_[k]->config();
    } else {
      gps_[k] = std::make_shared<const GPState>(GPState::build(z_[k], y_[k], bounds, *hyper_[k]));
    }
  }

  NetworkPosterior posterior() const {
    NetworkPosterior post;
    post.spec = spec_;
    post.nodes.assign(gps_.begin(), gps_.end());
    return post;
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s;
    for (const auto& y : y_) s.push_back(static_cast<std::size_t>(y.size()));
    return s;
  }

 private:
  const NetworkSpec& spec_;
  GpSettings settings_;
  std::vector<Matrix> z_;
  std::vector<Vector> y_;
  std::vector<std::shared_ptr<const GPState>> gps_;
  std::vector<std::optional<KernelConfig>> hyper_;
  std::vector<int> added_;
};

}  // namespace

TrialResult run_trial(const ExperimentConfig& cfg, const ProblemSpec& problem, int trial) {
  cfg.check(problem);
  const Algo algo = parse_algo(cfg.algo);
  const NetworkSpec& spec = problem.spec;
  const std::uint64_t trial_seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(trial)});
  const auto last = static_cast<Eigen::Index>(spec.final_node());

  TrialResult result;
  const Observations design = initial_design(problem, derive_seed(trial_seed, {kDesign}));
  NodeModels models(spec, cfg.gp);
  Matrix full_x = design.x;
  Vector full_y = design.y.col(last);
  for (Eigen::Index i = 0; i < design.x.rows(); ++i) models.add_full(design.x.row(i).transpose(), design.y.row(i).transpose());
  for (std::size_t k = 0; k < spec.num_nodes; ++k) models.fit_node(k, derive_seed(trial_seed, {kFit, 0, k}), true);
  result.initial_node_sizes = models.sizes();

  std::optional<KernelConfig> ei_hyper;
  // Warm starts: the previous maximizer and the best full-network input seen.
  auto recommend = [&](NetworkPosterior& post, int iter, std::vector<Vector> starts) {
    Eigen::Index best = 0;
    full_y.maxCoeff(&best);
    starts.push_back(full_x.row(best).transpose());
    post.refresh_base(static_cast<std::size_t>(cfg.mc.nu_samples),
                      derive_seed(trial_seed, {kBase, static_cast<std::uint64_t>(iter)}));
    return maximize_mean(post, cfg.optimizer, derive_seed(trial_seed, {kMean, static_cast<std::uint64_t>(iter)}),
                         starts);
  };

  NetworkPosterior post = models.posterior();
  MeanMaximum rec = recommend(post, 0, {});
  result.initial_x_star = rec.x;
  result.initial_nu_star = rec.value;
  result.initial_ground_truth = problem.objective(rec.x);

  double cum = 0.0;
  int iter = 0;
  try {
    while (true) {
      std::vector<std::size_t> affordable;
      if (is_full_evaluation(algo)) {
        if (cum + spec.full_cost() > cfg.budget) break;
      } else {
        for (std::size_t k = 0; k < spec.num_nodes; ++k) {
          if (cum + spec.costs[k] <= cfg.budget) affordable.push_back(k);
        }
        if (affordable.empty()) break;
      }
      ++iter;
      const auto it = static_cast<std::uint64_t>(iter);
      auto seed_for = [&](SeedTag tag) { return derive_seed(trial_seed, {tag, it}); };

      const auto t0 = std::chrono::steady_clock::now();
      std::optional<Candidate> partial;
      Vector full_point;
      switch (algo) {
        case Algo::FastPkgfn: {
          const Matrix eifn_base =
              normal_base_samples(static_cast<std::size_t>(cfg.mc.eifn_samples), spec.num_nodes, seed_for(kEifnBase));
          const Proposal prop = propose_network_candidate(post, rec.value, eifn_base, cfg.optimizer, seed_for(kEifnOpt));
          std::vector<Candidate> cands = generate_node_candidates(post, prop.x, seed_for(kRealization));
          const Matrix A = build_set(post, cfg.discrete, rec.x, full_x, seed_for(kDiscrete));
          const FantasyBatch fantasy = FantasyBatch::antithetic(cfg.mc.fantasies, seed_for(kFantasy));
          std::vector<Candidate> scored;
          for (std::size_t k : affordable) {
            Candidate c = cands[k];
            const McEstimate est = pkgfn_value(post, k, c.z(), A, fantasy, rec.value);
            c.acq_value = est.value;
            c.acq_stderr = est.std_error;
            scored.push_back(std::move(c));
          }
          partial = scored[select_node(scored)];
          break;
        }
        case Algo::Pkgfn: {
          std::vector<Matrix> parts;
          if (cfg.discrete.include_thompson) {
            parts.push_back(realization_maximizers(post, cfg.discrete.M, cfg.optimizer, seed_for(kDiscrete)));
          }
          if (cfg.discrete.include_local) {
            parts.push_back(local_points(rec.x, spec.domain, cfg.discrete, derive_seed(seed_for(kDiscrete), {1})));
          }
          if (cfg.discrete.include_maximizer) parts.push_back(rec.x.transpose());
          Eigen::Index rows = 0;
          for (const auto& p : parts) rows += p.rows();
          Matrix A(rows, static_cast<Eigen::Index>(spec.input_dim()));
          rows = 0;
          for (const auto& p : parts) {
            A.middleRows(rows, p.rows()) = p;
            rows += p.rows();
          }
          A = dedupe_rows(A);
          const FantasyBatch fantasy = FantasyBatch::antithetic(cfg.mc.fantasies, seed_for(kFantasy));
          partial = pkgfn_continuous_step(post, affordable, A, fantasy, rec.value, cfg.optimizer, seed_for(kPkgfn));
          break;
        }
        case Algo::Eifn: {
          const Matrix eifn_base =
              normal_base_samples(static_cast<std::size_t>(cfg.mc.eifn_samples), spec.num_nodes, seed_for(kEifnBase));
          full_point = propose_network_candidate(post, full_y.maxCoeff(), eifn_base, cfg.optimizer, seed_for(kEifnOpt)).x;
          break;
        }
        case Algo::Ei: {
          FitOptions opts;
          opts.restarts = cfg.gp.restarts;
          opts.max_evals = cfg.gp.max_evals;
          opts.warm_start = ei_hyper;
          opts.seed = seed_for(kFit);
          const GPState gp = fit(full_x, full_y, spec.domain, opts);
          ei_hyper = gp.config();
          full_point = ei_point(gp, full_y.maxCoeff(), spec.domain, cfg.optimizer, seed_for(kBaseline)).x;
          break;
        }
        case Algo::Tsfn:
          full_point = thompson_network_point(post, cfg.optimizer, seed_for(kBaseline));
          break;
        case Algo::Random:
          full_point = random_point(spec, seed_for(kBaseline));
          break;
      }
      const double seconds =
          cfg.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;

      TraceRecord r;
      r.trial = trial;
      r.iter = iter;
      r.acq_seconds = seconds;
      if (partial) {
        const std::size_t k = partial->node;
        const Vector z = partial->z();
        const double y = problem.evaluate_node(k, z);
        models.add(k, z, y);
        models.fit_node(k, derive_seed(trial_seed, {kFit, it, k}), false);
        cum += spec.cost(k, z);
        r.node = k;
        r.input = z;
        r.observed = y;
      } else {
        const Vector outputs = problem.evaluate(full_point);
        models.add_full(full_point, outputs);
        for (std::size_t k = 0; k < spec.num_nodes; ++k) models.fit_node(k, derive_seed(trial_seed, {kFit, it, k}), false);
        append_row(full_x, full_point);
        append_value(full_y, outputs[last]);
        cum += spec.full_cost();
        r.input = full_point;
        r.observed = outputs[last];
      }
      post = models.posterior();
      rec = recommend(post, iter, {rec.x});
      r.cum_cost = cum;
      r.nu_star = rec.value;
      r.x_star = rec.x;
      r.ground_truth = problem.objective(rec.x);
      result.records.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    result.error = "iteration " + std::to_string(iter) + ": " + e.what();
  }
  result.final_x = rec.x;
  result.final_ground_truth = problem.objective(rec.x);
  result.node_data_sizes = models.sizes();
  return result;
}

// ---------------------------------------------------------------------------
// Trace files

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string format_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "bad number '" + s + "' in trace");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

Vector parse_vector(const std::string& s) {
  if (s.empty()) return Vector();
  const auto parts = split(s, ';');
  Vector v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_double(parts[i]);
  return v;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string trace_header() { return "trial,iter,cum_cost,node,input,observed,nu_star,x_star,ground_truth,acq_seconds"; }

std::string format_record(const TraceRecord& r) {
  std::string line = std::to_string(r.trial) + ',' + std::to_string(r.iter) + ',' + format_double(r.cum_cost) + ',';
  line += r.node ? std::to_string(*r.node + 1) : std::string("full");
  line += ',' + format_vector(r.input) + ',' + format_double(r.observed) + ',' + format_double(r.nu_star) + ',' +
          format_vector(r.x_star) + ',' + format_double(r.ground_truth) + ',' + format_double(r.acq_seconds);
  return line;
}

std::string format_trace(const std::vector<TraceRecord>& records) {
  std::string out = trace_header() + '\n';
  for (const auto& r : records) out += format_record(r) + '\n';
  return out;
}

std::vector<TraceRecord> parse_trace(const std::string& csv) {
  std::vector<TraceRecord> out;
  std::istringstream in(csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line != trace_header()) throw Error(ErrorCode::ParseError, "unexpected trace header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 10) throw Error(ErrorCode::ParseError, "trace row needs 10 fields");
    TraceRecord r;
    r.trial = std::stoi(f[0]);
    r.iter = std::stoi(f[1]);
    r.cum_cost = parse_double(f[2]);
    if (f[3] != "full") r.node = static_cast<std::size_t>(std::stoul(f[3]) - 1);
    r.input = parse_vector(f[4]);
    r.observed = parse_double(f[5]);
    r.nu_star = parse_double(f[6]);
    r.x_star = parse_vector(f[7]);
    r.ground_truth = parse_double(f[8]);
    r.acq_seconds = parse_double(f[9]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string trace_filename(const std::string& algo, int trial) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_trial_%03d.csv", trial);
  return algo + buf;
}

namespace {

std::string sidecar_filename(const std::string& algo, int trial) {
  std::string name = trace_filename(algo, trial);
  return name.substr(0, name.size() - 4) + ".json";
}

int worker_count(int jobs) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FNBO_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  return std::clamp(n, 1, std::max(jobs, 1));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<TrialResult> run_experiment(const ExperimentConfig& cfg) {
  const ProblemSpec problem = resolve_problem(cfg);
  cfg.check(problem);
  fs::create_directories(cfg.output);
  std::vector<TrialResult> results(static_cast<std::size_t>(cfg.trials));
  std::atomic<int> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (int t = next++; t < cfg.trials; t = next++) {
      TrialResult res = run_trial(cfg, problem, t);
      write_file(fs::path(cfg.output) / trace_filename(cfg.algo, t), format_trace(res.records));
      json side = {{"algo", cfg.algo},
                   {"problem", problem.name},
                   {"trial", t},
                   {"budget", cfg.budget},
                   {"seed", cfg.seed},
                   {"initial", {{"x_star", vector_json(res.initial_x_star)},
                                {"nu_star", res.initial_nu_star},
                                {"ground_truth", res.initial_ground_truth}}},
                   {"final", {{"x", vector_json(res.final_x)}, {"ground_truth", res.final_ground_truth}}},
                   {"node_data_sizes", res.node_data_sizes},
                   {"error", res.error}};
      write_file(fs::path(cfg.output) / sidecar_filename(cfg.algo, t), side.dump(2) + "\n");
      if (!res.error.empty()) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "trial " << t << " aborted at " << res.error << "\n";
      }
      results[static_cast<std::size_t>(t)] = std::move(res);
    }
  };
  const int n = worker_count(cfg.trials);
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

// ---------------------------------------------------------------------------
// Summaries

std::vector<double> step_curve(const std::vector<TraceRecord>& records, double initial,
                               const std::vector<double>& grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  std::size_t i = 0;
  double current = initial;
  for (double g : grid) {
    while (i < records.size() && records[i].cum_cost <= g) current = records[i++].ground_truth;
    out.push_back(current);
  }
  return out;
}

namespace {

std::pair<double, double> mean_and_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<CurveSummary> summarize(const std::string& in_dir, const std::string& out_dir, int grid_points) {
  struct Trial {
    std::vector<TraceRecord> records;
    double initial = 0.0;
    double final_value = 0.0;
    double budget = 0.0;
  };
  std::map<std::string, std::map<int, Trial>> by_algo;
  std::vector<fs::path> sidecars;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.path().extension() == ".json" && entry.path().filename() != "summary.json") sidecars.push_back(entry.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  for (const auto& path : sidecars) {
    json side;
    try {
      side = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    if (!side.contains("algo") || !side.contains("trial")) continue;
    const std::string algo = side.at("algo").get<std::string>();
    const int t = side.at("trial").get<int>();
    Trial tr;
    tr.records = parse_trace(read_file(fs::path(in_dir) / trace_filename(algo, t)));
    tr.initial = side.at("initial").at("ground_truth").get<double>();
    tr.final_value = side.at("final").at("ground_truth").get<double>();
    tr.budget = side.at("budget").get<double>();
    by_algo[algo][t] = std::move(tr);
  }
  if (by_algo.empty()) throw Error(ErrorCode::InvalidConfig, "no trials found in " + in_dir);

  fs::create_directories(out_dir);
  std::vector<CurveSummary> out;
  json table = json::object();
  for (const auto& [algo, trials] : by_algo) {
    CurveSummary s;
    s.algo = algo;
    s.trials = static_cast<int>(trials.size());
    for (const auto& [t, tr] : trials) s.budget = std::max(s.budget, tr.budget);
    const int points = std::max(grid_points, 2);
    for (int i = 0; i < points; ++i) s.grid.push_back(s.budget * i / (points - 1));
    std::vector<std::vector<double>> curves;
    std::vector<double> per_iter, finals;
    for (const auto& [t, tr] : trials) {
      curves.push_back(step_curve(tr.records, tr.initial, s.grid));
      double total = 0.0;
      for (const auto& r : tr.records) total += r.acq_seconds;
      if (!tr.records.empty()) per_iter.push_back(total / static_cast<double>(tr.records.size()));
      finals.push_back(tr.final_value);
      s.trial_points.emplace_back(total, tr.final_value);
    }
    std::string csv = "cost_grid,mean,stderr\n";
    for (std::size_t g = 0; g < s.grid.size(); ++g) {
      std::vector<double> col;
      for (const auto& c : curves) col.push_back(c[g]);
      const auto [m, se] = mean_and_stderr(col);
      s.mean.push_back(m);
      s.std_error.push_back(se);
      csv += format_double(s.grid[g]) + ',' + format_double(m) + ',' + format_double(se) + '\n';
    }
    write_file(fs::path(out_dir) / (algo + "_summary.csv"), csv);
    std::tie(s.mean_acq_seconds, s.stderr_acq_seconds) = mean_and_stderr(per_iter);
    std::tie(s.final_mean, s.final_stderr) = mean_and_stderr(finals);
    out.push_back(std::move(s));
  }

  // An algorithm is Pareto-optimal if no other one is both faster and better.
  for (const auto& s : out) {
    bool dominated = false;
    for (const auto& o : out) {
      if (&o == &s) continue;
      if (o.mean_acq_seconds <= s.mean_acq_seconds && o.final_mean >= s.final_mean &&
          (o.mean_acq_seconds < s.mean_acq_seconds || o.final_mean > s.final_mean)) {
        dominated = true;
      }
    }
    json pts = json::array();
    for (const auto& [sec, val] : s.trial_points) pts.push_back({{"acq_seconds_total", sec}, {"final_value", val}});
    table[s.algo] = {{"trials", s.trials},
                     {"budget", s.budget},
                     {"mean_acq_seconds_per_iter", s.mean_acq_seconds},
                     {"stderr_acq_seconds_per_iter", s.stderr_acq_seconds},
                     {"final_mean", s.final_mean},
                     {"final_stderr", s.final_stderr},
                     {"pareto_optimal", !dominated},
                     {"trial_points", pts}};
  }
  write_file(fs::path(out_dir) / "summary.json", table.dump(2) + "\n");
  return out;
}

}  // namespace fnbo
