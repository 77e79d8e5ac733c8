#include "fnbo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace fnbo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Counts evaluations against a budget and tracks the incumbent.
class Tracker {
 public:
  explicit Tracker(int budget) : budget_(budget) {}

  bool exhausted() const { return evals_ >= budget_; }
  int evals() const { return evals_; }

  void record(const Vector& x, double v) {
    ++evals_;
    if (std::isfinite(v) && v > best_) {
      best_ = v;
      best_x_ = x;
    } else if (best_x_.size() == 0) {
      best_x_ = x;
    }
    history_.push_back(best_);
  }

  MaximizeResult result() && {
    MaximizeResult r;
    r.x = std::move(best_x_);
    r.value = best_;
    r.evaluations = evals_;
    r.histories.push_back(std::move(history_));
    return r;
  }

 private:
  int budget_;
  int evals_ = 0;
  double best_ = kNegInf;
  Vector best_x_;
  std::vector<double> history_;
};

double sanitize(double v) { return std::isnan(v) ? kNegInf : v; }

}  // namespace

MaximizeResult maximize_pattern_search(const Objective& f, const std::vector<Interval>& bounds, const Vector& start,
                                       int max_evals) {
  const Eigen::Index n = start.size();
  Tracker tr(std::max(max_evals, 1));
  auto eval = [&](const Vector& x) {
    const double v = sanitize(f(x));
    tr.record(x, v);
    return v;
  };

  Vector step(n);
  for (Eigen::Index i = 0; i < n; ++i) step[i] = 0.25 * bounds[static_cast<std::size_t>(i)].width();

  Vector x = project_to_box(start, bounds);
  double fx = eval(x);

  // Coordinate poll around `base`; returns the improved point (or base).
  auto explore = [&](Vector base, double fbase) {
    for (Eigen::Index i = 0; i < n && !tr.exhausted(); ++i) {
      const Interval& iv = bounds[static_cast<std::size_t>(i)];
      const double orig = base[i];
      bool moved = false;
      for (double dir : {1.0, -1.0}) {
        if (tr.exhausted()) break;
        const double cand = iv.clamp(orig + dir * step[i]);
        if (cand == orig) continue;
        base[i] = cand;
        const double v = eval(base);
        if (v > fbase) {
          fbase = v;
          moved = true;
          break;
        }
        base[i] = orig;
      }
      if (!moved) base[i] = orig;
    }
    return std::pair{base, fbase};
  };

  while (!tr.exhausted()) {
    auto [xn, fn] = explore(x, fx);
    if (fn > fx) {
      while (!tr.exhausted()) {
        const Vector xp = project_to_box(xn + (xn - x), bounds);
        x = xn;
        fx = fn;
        const double fp = eval(xp);
        auto [xe, fe] = explore(xp, fp);
        if (fe > fx) {
          xn = xe;
          fn = fe;
        } else {
          break;
        }
      }
    } else {
      step *= 0.5;
      double rel = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) rel = std::max(rel, step[i] / bounds[static_cast<std::size_t>(i)].width());
      if (rel < 1e-7) break;
    }
  }
  return std::move(tr).result();
}

MaximizeResult maximize_lbfgs(const GradObjective& f, const std::vector<Interval>& bounds, const Vector& start,
                              int max_evals) {
  const Eigen::Index n = start.size();
  constexpr std::size_t kHistory = 8;
  Tracker tr(std::max(max_evals, 1));
  auto eval = [&](const Vector& x, Vector& g) {
    g.setZero(n);
    const double v = sanitize(f(x, &g));
    if (!g.allFinite()) g.setZero();
    tr.record(x, v);
    return v;
  };

  double max_width = 0.0;
  for (const auto& iv : bounds) max_width = std::max(max_width, iv.width());

  Vector x = project_to_box(start, bounds);
  Vector grad;
  double fx = eval(x, grad);
  if (!std::isfinite(fx)) return std::move(tr).result();

  std::deque<Vector> S, Y;
  int stalls = 0;
  while (!tr.exhausted()) {
    // Work with the minimization gradient gm = -grad.
    const Vector gm = -grad;
    std::vector<bool> free(static_cast<std::size_t>(n), true);
    double pg = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Interval& iv = bounds[static_cast<std::size_t>(i)];
      const double eps = 1e-12 * iv.width();
      if ((x[i] <= iv.lower + eps && gm[i] > 0) || (x[i] >= iv.upper - eps && gm[i] < 0)) {
        free[static_cast<std::size_t>(i)] = false;
      } else {
        pg = std::max(pg, std::abs(gm[i]));
      }
    }
    if (pg < 1e-9) break;

    // Two-loop recursion.
    Vector q = gm;
    std::vector<double> alpha(S.size());
    for (std::size_t j = S.size(); j-- > 0;) {
      alpha[j] = S[j].dot(q) / Y[j].dot(S[j]);
      q -= alpha[j] * Y[j];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t j = 0; j < S.size(); ++j) {
      const double beta = Y[j].dot(q) / Y[j].dot(S[j]);
      q += (alpha[j] - beta) * S[j];
    }
    Vector d = -q;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!free[static_cast<std::size_t>(i)]) d[i] = 0.0;
    }
    if (gm.dot(d) >= 0.0) {
      d = -gm;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!free[static_cast<std::size_t>(i)]) d[i] = 0.0;
      }
      S.clear();
      Y.clear();
    }

    double t = 1.0;
    if (S.empty()) t = std::min(1.0, 0.1 * max_width / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));

    bool accepted = false;
    Vector xn, gn;
    double fn = kNegInf;
    for (int ls = 0; ls < 30 && !tr.exhausted(); ++ls) {
      xn = project_to_box(x + t * d, bounds);
      fn = eval(xn, gn);
      if (std::isfinite(fn) && fn >= fx + 1e-4 * grad.dot(xn - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    const Vector s = xn - x;
    const Vector y = (-gn) - gm;
    if (s.dot(y) > 1e-12 * std::max(1.0, s.norm() * y.norm())) {
      S.push_back(s);
      Y.push_back(y);
      if (S.size() > kHistory) {
        S.pop_front();
        Y.pop_front();
      }
    }
    const double gain = fn - fx;
    x = xn;
    fx = fn;
    grad = gn;
    if (gain <= 1e-12 * (1.0 + std::abs(fx))) {
      if (++stalls >= 3) break;
    } else {
      stalls = 0;
    }
  }
  return std::move(tr).result();
}

MaximizeResult multistart_maximize(const BoxProblem& problem, std::uint64_t seed, bool record_history) {
  const std::size_t dim = problem.dim();
  auto value_of = [&](const Vector& x) {
    if (problem.grad_objective) return sanitize(problem.grad_objective(x, nullptr));
    return sanitize(problem.objective(x));
  };

  std::vector<Vector> starts;
  const int restarts = std::max(problem.restarts, 1);
  MaximizeResult best;
  best.value = kNegInf;
  int total_evals = 0;

  if (problem.raw_samples > restarts) {
    const Matrix raw = scale_to_box(sobol_points(dim, static_cast<std::size_t>(problem.raw_samples), seed),
                                    problem.bounds);
    Vector scores(raw.rows());
    if (problem.batch_objective) {
      scores = problem.batch_objective(raw);
    } else {
      for (Eigen::Index i = 0; i < raw.rows(); ++i) scores[i] = value_of(raw.row(i).transpose());
    }
    total_evals += static_cast<int>(raw.rows());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(raw.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return sanitize(scores[a]) > sanitize(scores[b]);
    });
    for (int r = 0; r < restarts; ++r) starts.push_back(raw.row(order[static_cast<std::size_t>(r)]).transpose());
  } else {
    const Matrix unit = sobol_points(dim, static_cast<std::size_t>(restarts), seed);
    const Matrix pts = scale_to_box(unit, problem.bounds);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) starts.push_back(pts.row(i).transpose());
  }
  for (const Vector& s : problem.extra_starts) {
    if (static_cast<std::size_t>(s.size()) == dim) starts.push_back(project_to_box(s, problem.bounds));
  }

  for (const Vector& start : starts) {
    MaximizeResult local = problem.grad_objective
                               ? maximize_lbfgs(problem.grad_objective, problem.bounds, start, problem.max_evals)
                               : maximize_pattern_search(problem.objective, problem.bounds, start, problem.max_evals);
    total_evals += local.evaluations;
    if (record_history) best.histories.push_back(local.histories.front());
    if (local.value > best.value || best.x.size() == 0) {
      best.value = local.value;
      best.x = local.x;
    }
  }
  best.evaluations = total_evals;
  return best;
}

}  // namespace fnbo
