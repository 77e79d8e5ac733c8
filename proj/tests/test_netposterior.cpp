#include <doctest.h>

#include <Eigen/LU>

#include "fnbo/netposterior.hpp"
#include "fnbo/problems.hpp"
#include "support.hpp"

using namespace fnbo;
using fnbo::testing::Gen;

namespace {

KernelConfig kernel(KernelFamily family, Eigen::Index d, double ls, double os = 1.0) {
  KernelConfig cfg;
  cfg.family = family;
  cfg.lengthscales = Vector::Constant(d, ls);
  cfg.outputscale = os;
  return cfg;
}

double row_stderr(const Matrix& samples, Eigen::Index row) {
  return fnbo::testing::sample_sd(samples.row(row).transpose()) / std::sqrt(static_cast<double>(samples.cols()));
}

// Node 1 with data on [0,1]; node 2 a squared-exponential GP on y1, so
// E[mu2(y1)] has a closed form when y1 is Gaussian.
struct Composition {
  NetworkPosterior post;
  KernelConfig cfg2;
  Vector u2;      // node-2 training inputs in unit coordinates
  Vector weights; // (K + jitter I)^{-1} y_std for node 2
};

Composition composition(std::uint64_t seed) {
  Gen g(seed);
  Composition c;
  c.post.spec = fnbo::testing::chain_spec(-3.0, 3.0);
  Matrix x1 = g.mat(3, 1);
  const Vector y1 = g.vec(3, -1, 1);
  c.post.nodes.push_back(std::make_shared<GPState>(
      GPState::build(x1, y1, c.post.spec.node_bounds(0), kernel(KernelFamily::Matern52, 1, 0.3, 0.8))));
  const Matrix z2 = g.mat(6, 1, -2.5, 2.5);
  const Vector y2 = g.vec(6, -2, 2);
  c.cfg2 = kernel(KernelFamily::SquaredExponential, 1, 0.15, 1.2);
  const GPState gp2 = GPState::build(z2, y2, c.post.spec.node_bounds(1), c.cfg2);
  c.u2 = ((z2.col(0).array() + 3.0) / 6.0).matrix();
  const Matrix k = fnbo::testing::oracle_kernel(c.cfg2, c.u2, c.u2) + c.cfg2.jitter * Matrix::Identity(6, 6);
  const TargetTransform tf = gp2.target_transform();
  c.weights = k.fullPivLu().solve(((y2.array() - tf.mean) / tf.scale).matrix());
  c.post.nodes.push_back(std::make_shared<GPState>(gp2));
  c.post.refresh_base(64, seed);
  return c;
}

double composed_mean(const Composition& c, double x) {
  Vector m, v;
  c.post.nodes[0]->marginals(Matrix::Constant(1, 1, x), m, &v);
  const double mu = (m[0] + 3.0) / 6.0;
  const double var = v[0] / 36.0;
  const double l2 = c.cfg2.lengthscales[0] * c.cfg2.lengthscales[0];
  double acc = 0.0;
  for (Eigen::Index i = 0; i < c.u2.size(); ++i) {
    const double diff = mu - c.u2[i];
    acc += c.weights[i] * std::sqrt(l2 / (l2 + var)) * std::exp(-0.5 * diff * diff / (l2 + var));
  }
  const TargetTransform tf = c.post.nodes[1]->target_transform();
  return tf.mean + tf.scale * c.cfg2.outputscale * acc;
}

// Three-node network x -> (y1, y2) -> y3 with nonlinear node functions.
std::pair<NetworkSpec, std::vector<NodeFunction>> three_nodes() {
  NetworkSpec s;
  s.num_nodes = 3;
  s.parents = {{}, {}, {0, 1}};
  s.ext_inputs = {{0}, {1}, {}};
  s.domain = {Interval{0.0, 1.0}, Interval{0.0, 1.0}};
  s.parent_ranges = {{}, {}, {Interval{-1.5, 1.5}, Interval{-1.5, 1.5}}};
  s.costs = {1.0, 1.0, 1.0};
  std::vector<NodeFunction> f = {
      [](const Vector& z) { return std::sin(6.0 * z[0]); },
      [](const Vector& z) { return std::cos(5.0 * z[0]); },
      [](const Vector& z) { return -(z[0] - 0.3) * (z[0] - 0.3) + z[0] * z[1]; },
  };
  return {s, f};
}

}  // namespace

TEST_SUITE("netposterior") {
  TEST_CASE("single node reduces to the GP mean") {
    Gen g(51);
    const NetworkSpec s = fnbo::testing::single_node_spec(2);
    const Matrix x = g.mat(7, 2);
    const Matrix y = g.mat(7, 1, -1, 1);
    const NetworkPosterior post = fnbo::testing::fixed_posterior(s, x, y, 0.3);
    const Matrix probes = g.mat(10, 2);
    CHECK((nu(post, probes) - post.nodes[0]->mean(probes)).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  TEST_CASE("two-node composition matches the closed-form mean") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Composition c = composition(seed);
      Matrix probes(4, 1);
      probes << 0.05, 0.4, 0.66, 0.95;
      const Matrix samples = nu_samples(c.post, probes);
      const Vector est = samples.rowwise().mean();
      for (Eigen::Index i = 0; i < probes.rows(); ++i) {
        const double se = row_stderr(samples, i);
        CHECK(std::abs(est[i] - composed_mean(c, probes(i, 0))) <= 3.0 * se + 1e-12);
      }
    }
  }

  TEST_CASE("zero-data prior has zero mean") {
    NetworkPosterior post;
    post.spec = fnbo::testing::chain_spec();
    for (std::size_t k = 0; k < 2; ++k) {
      post.nodes.push_back(std::make_shared<GPState>(GPState::prior(
          InputTransform::from_bounds(post.spec.node_bounds(k)), kernel(KernelFamily::Matern52, 1, 0.3))));
    }
    post.refresh_base(64, 3);
    Matrix probes(3, 1);
    probes << 0.1, 0.5, 0.9;
    const Matrix samples = nu_samples(post, probes);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(std::abs(samples.row(i).mean()) <= 3.0 * row_stderr(samples, i) + 1e-12);
    }
  }

  TEST_CASE("nu outside the domain fails") {
    const Composition c = composition(1);
    try {
      nu(c.post, Vector(Vector::Constant(1, 1.5)));
      FAIL("expected DomainViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DomainViolation);
    }
  }

  TEST_CASE("base samples are quasi-random normals") {
    const Matrix b = normal_base_samples(256, 3, 8);
    CHECK(b.rows() == 256);
    CHECK(b.cols() == 3);
    CHECK(b.allFinite());
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(std::abs(b.col(j).mean()) <= 0.05);
      CHECK(std::abs(fnbo::testing::sample_sd(b.col(j)) - 1.0) <= 0.05);
    }
    CHECK(b == normal_base_samples(256, 3, 8));
  }

  TEST_CASE("same seed gives the same realization") {
    const Composition c = composition(2);
    Gen g(52);
    const Matrix probes = g.mat(20, 1);
    CHECK(sample_realization(c.post, 5).evaluate(probes) == sample_realization(c.post, 5).evaluate(probes));
  }

  TEST_CASE("realizations average to nu") {
    auto [s, f] = three_nodes();
    Gen g(53);
    auto [x, y] = fnbo::testing::observe(s, f, g, 6);
    NetworkPosterior post = fnbo::testing::fixed_posterior(s, x, y, 0.4, 1.0, 4096, 1);
    Vector probe(2);
    probe << 0.37, 0.81;
    Vector finals(500);
    for (Eigen::Index i = 0; i < finals.size(); ++i) {
      finals[i] = sample_realization(post, static_cast<std::uint64_t>(i)).evaluate(probe)[2];
    }
    const Matrix samples = nu_samples(post, probe.transpose());
    const double se = std::hypot(fnbo::testing::sample_sd(finals) / std::sqrt(500.0), row_stderr(samples, 0));
    CHECK(std::abs(finals.mean() - samples.mean()) <= 3.0 * se);
  }

  TEST_CASE("realizations compose node paths") {
    auto [s, f] = three_nodes();
    Gen g(54);
    auto [x, y] = fnbo::testing::observe(s, f, g, 6);
    const NetworkPosterior post = fnbo::testing::fixed_posterior(s, x, y, 0.4);
    const NetworkRealization r = sample_realization(post, 77);
    const Matrix probes = g.mat(10, 2);
    const Matrix out = r.evaluate(probes);
    for (Eigen::Index i = 0; i < probes.rows(); ++i) {
      const double y1 = r.node(0)(probes.row(i).segment(0, 1).transpose());
      const double y2 = r.node(1)(probes.row(i).segment(1, 1).transpose());
      CHECK(out(i, 0) == y1);
      CHECK(out(i, 1) == y2);
      CHECK(out(i, 2) == doctest::Approx(r.node(2)((Vector(2) << y1, y2).finished())).epsilon(1e-12));
    }
    CHECK(r.final_output(probes) == out.col(2));
  }

  TEST_CASE("mean maximizer sits at an isolated datum") {
    const NetworkSpec s = fnbo::testing::single_node_spec(1);
    NetworkPosterior post;
    post.spec = s;
    // Zero prior mean so the datum is a bump above a flat surface.
    post.nodes.push_back(std::make_shared<GPState>(GPState::build(Matrix::Constant(1, 1, 0.5), Vector::Constant(1, 2.0),
                                                                  s.node_bounds(0), kernel(KernelFamily::Matern52, 1, 0.05),
                                                                  TargetTransform{0.0, 1.0})));
    post.refresh_base(64, 0);
    const MeanMaximum m = maximize_mean(post, OptimizerSettings{}, 4);
    CHECK(std::abs(m.x[0] - 0.5) <= 0.05);
    CHECK(m.value == doctest::Approx(2.0).epsilon(1e-3));
  }

  TEST_CASE("mean maximizer with no data returns the prior mean") {
    NetworkPosterior post;
    post.spec = fnbo::testing::single_node_spec(2);
    post.nodes.push_back(std::make_shared<GPState>(
        GPState::prior(InputTransform::from_bounds(post.spec.node_bounds(0)), kernel(KernelFamily::Matern52, 2, 0.3), 1.5)));
    post.refresh_base(64, 0);
    const MeanMaximum m = maximize_mean(post, OptimizerSettings{}, 5);
    CHECK(m.value == doctest::Approx(1.5));
    CHECK(post.spec.in_domain(m.x));
  }

  TEST_CASE("AckMat mean maximum dominates the observed maximum") {
    const ProblemSpec p = ackmat();
    Gen g(55);
    auto [x, y] = fnbo::testing::observe(p.spec, p.truth, g, 13);
    const NetworkPosterior post = fnbo::testing::fitted_posterior(p.spec, x, y, 64, 2);
    Eigen::Index best = 0;
    y.col(1).maxCoeff(&best);
    OptimizerSettings opt;
    opt.restarts = 4;
    opt.max_evals = 100;
    const MeanMaximum m = maximize_mean(post, opt, 6, {x.row(best).transpose()});
    CHECK(m.value >= y(best, 1) - 1e-3);
  }

  TEST_CASE("nu is unbiased across refreshed bases") {
    auto [s, f] = three_nodes();
    Gen g(56);
    auto [x, y] = fnbo::testing::observe(s, f, g, 5);
    NetworkPosterior post = fnbo::testing::fixed_posterior(s, x, y, 0.3);
    for (int probe_id = 0; probe_id < 3; ++probe_id) {
      const Matrix probe = g.mat(1, 2);
      Vector estimates(50);
      for (Eigen::Index b = 0; b < 50; ++b) {
        post.refresh_base(64, static_cast<std::uint64_t>(1000 * probe_id + b));
        estimates[b] = nu(post, probe)[0];
      }
      // Plain Monte Carlo through the marginals, independent of the library's propagation.
      Vector m, v;
      post.nodes[0]->marginals(probe.col(0), m, &v);
      const double m1 = m[0], s1 = std::sqrt(v[0]);
      post.nodes[1]->marginals(probe.col(1), m, &v);
      const double m2 = m[0], s2 = std::sqrt(v[0]);
      const int n = 100000;
      Matrix z(n, 2);
      for (int i = 0; i < n; ++i) {
        z(i, 0) = m1 + s1 * g.normal();
        z(i, 1) = m2 + s2 * g.normal();
      }
      const Vector oracle = post.nodes[2]->mean(z);
      const double se = std::hypot(fnbo::testing::sample_sd(estimates) / std::sqrt(50.0),
                                   fnbo::testing::sample_sd(oracle) / std::sqrt(static_cast<double>(n)));
      CHECK(std::abs(estimates.mean() - oracle.mean()) <= 3.0 * se);
    }
  }

  TEST_CASE("mean maximum does not drop after a consistent observation") {
    auto [s, f] = three_nodes();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Gen g(57 + seed);
      auto [x, y] = fnbo::testing::observe(s, f, g, 6);
      NetworkPosterior post = fnbo::testing::fixed_posterior(s, x, y, 0.4, 1.0, 64, seed);
      OptimizerSettings opt;
      opt.restarts = 4;
      opt.max_evals = 100;
      const MeanMaximum before = maximize_mean(post, opt, seed);
      // Observe the final node at its own posterior mean.
      const Vector z = g.vec(2, -1.0, 1.0);
      const double yz = post.nodes[2]->mean(z.transpose())[0];
      NetworkPosterior after = post;
      after.nodes[2] = std::make_shared<GPState>(post.nodes[2]->fantasize(z, yz));
      const MeanMaximum m = maximize_mean(after, opt, seed, {before.x});
      const double se = row_stderr(nu_samples(post, before.x.transpose()), 0);
      CHECK(m.value >= before.value - 2.0 * se - 1e-9);
    }
  }
}
