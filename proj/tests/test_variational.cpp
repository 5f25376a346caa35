#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spvi/score.hpp"
#include "spvi/variational.hpp"

using namespace spvi;

TEST_SUITE("variational") {

TEST_CASE("diag gaussian collapses to the mean as sigma vanishes") {
  DiagGaussian q(3);
  Vec p(6);
  p << 0.2, -0.4, 1.0, 1e-12, 1e-12, 1e-12;
  q.set_params(p);
  RngStream rng(1);
  const Vec x = q.sample(rng, nullptr, nullptr);
  CHECK((x - p.head(3)).norm() < 1e-10);
}

TEST_CASE("diag gaussian sample moments") {
  DiagGaussian q(2);
  Vec p(4);
  p << 1.0, -2.0, 0.5, -1.5;  // negative raw sigma: effective |.|
  q.set_params(p);
  RngStream rng(2);
  const int n = 100000;
  Vec mean = Vec::Zero(2), sq = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vec x = q.sample(rng, nullptr, nullptr);
    mean += x;
    sq += x.cwiseAbs2();
  }
  mean /= n;
  const Vec var = sq / n - mean.cwiseAbs2();
  const Vec sig = p.tail(2).cwiseAbs();
  for (int d = 0; d < 2; ++d) {
    CHECK(std::abs(mean[d] - p[d]) < 3.0 * sig[d] / std::sqrt(static_cast<double>(n)));
    CHECK(var[d] == doctest::Approx(sig[d] * sig[d]).epsilon(0.02));
  }
}

TEST_CASE("diag gaussian density at the mode and sample consistency") {
  DiagGaussian q(2);
  Vec p(4);
  p << 0.3, 0.7, 0.2, 0.05;
  q.set_params(p);
  const double at_mode = q.log_density(p.head(2));
  CHECK(at_mode ==
        doctest::Approx(-std::log(2.0 * kPi * 0.2 * 0.05) - 0.0).epsilon(1e-12));

  RngStream rng(3);
  double logq;
  const Vec x = q.sample(rng, &logq, nullptr);
  CHECK(q.log_density(x) == doctest::Approx(logq).epsilon(1e-12));
}

TEST_CASE("diag gaussian pathwise gradient matches finite differences") {
  DiagGaussian q(2);
  Vec p0(4);
  p0 << 0.4, -0.1, 0.3, 0.2;
  const int n = 4000;

  // smooth objective: E[f(x) + log q(x)]
  auto f = [](const Vec& x) { return std::sin(x[0]) + 0.1 * x.squaredNorm() + x[1]; };
  auto fgrad = [](const Vec& x) {
    Vec g(2);
    g << std::cos(x[0]) + 0.2 * x[0], 0.2 * x[1] + 1.0;
    return g;
  };

  auto objective = [&](const Vec& p) {
    DiagGaussian qq(2);
    qq.set_params(p);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      RngStream rng = RngStream::from_path(91, {static_cast<std::uint64_t>(i)});
      double lq;
      const Vec x = qq.sample(rng, &lq, nullptr);
      acc += f(x) + lq;
    }
    return acc / n;
  };

  q.set_params(p0);
  Vec grad = Vec::Zero(4);
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::from_path(91, {static_cast<std::uint64_t>(i)});
    double lq;
    std::unique_ptr<VariationalFamily::Tape> tape;
    const Vec x = q.sample(rng, &lq, &tape);
    Vec g = Vec::Zero(4);
    q.backward(*tape, fgrad(x) / n, 1.0 / n, &g);
    grad += g;
  }
  const Vec fd = oracles::fd_gradient(objective, p0, 1e-5);
  CHECK((grad - fd).norm() < 0.02 * (1.0 + fd.norm()));
}

TEST_CASE("identity-initialized flow reproduces the base distribution") {
  RealNvp q(4, 8, 16);
  RngStream rng(5);
  for (int i = 0; i < 5; ++i) {
    double lq;
    const Vec x = q.sample(rng, &lq, nullptr);
    CHECK(std::abs(lq - standard_normal_logpdf(x)) < 1e-3);  // near-identity at init
  }
  CHECK(std::abs(q.log_density(Vec::Zero(4)) - standard_normal_logpdf(Vec::Zero(4))) <
        1e-3);
}

TEST_CASE("flow density is self-consistent with sampling") {
  RealNvp q(3, 6, 12);
  RngStream pr(6);
  q.set_params(q.params() + 0.3 * pr.normal_vec(q.param_count()));
  RngStream rng(7);
  for (int i = 0; i < 8; ++i) {
    double lq;
    const Vec x = q.sample(rng, &lq, nullptr);
    CHECK(q.log_density(x) == doctest::Approx(lq).epsilon(1e-6));
  }
}

TEST_CASE("flow inverse round trip under perturbed parameters") {
  RealNvp q(4, 10, 8);
  RngStream pr(8);
  q.set_params(q.params() + 0.5 * pr.normal_vec(q.param_count()));
  // make normalization stats non-trivial too: per layer [mean(4); var(4)]
  Vec st = q.extra_state();
  for (Eigen::Index at = 0; at < st.size(); at += 8) {
    for (int i = 0; i < 4; ++i) st[at + i] = 0.3 * pr.normal();
    for (int i = 4; i < 8; ++i) st[at + i] = 0.5 + pr.uniform();
  }
  q.set_extra_state(st);

  RngStream rng(9);
  for (int i = 0; i < 10; ++i) {
    const Vec eps = rng.normal_vec(4);
    double ld1, ld2;
    const Vec x = q.forward_from_base(eps, &ld1);
    const Vec back = q.inverse_to_base(x, &ld2);
    CHECK((back - eps).norm() < 1e-5);
    CHECK(ld1 == doctest::Approx(ld2).epsilon(1e-9));
  }
}

TEST_CASE("flow log-determinant against a dense numerical jacobian") {
  RealNvp q(2, 4, 8);
  RngStream pr(10);
  q.set_params(q.params() + 0.4 * pr.normal_vec(q.param_count()));
  RngStream rng(11);
  for (int i = 0; i < 4; ++i) {
    const Vec x = rng.normal_vec(2);
    const Mat j = oracles::fd_jacobian(
        [&](const Vec& u) { return q.inverse_to_base(u, nullptr); }, x, 1e-6);
    const Vec eps = q.inverse_to_base(x, nullptr);
    const double oracle = standard_normal_logpdf(eps) + std::log(std::abs(j.determinant()));
    CHECK(q.log_density(x) == doctest::Approx(oracle).epsilon(1e-5));
  }
}

TEST_CASE("flow integrates to one on a 2d grid") {
  RealNvp q(2, 4, 8);
  RngStream pr(12);
  q.set_params(q.params() + 0.3 * pr.normal_vec(q.param_count()));
  const int n = 220;
  const double lo = -7.0, hi = 7.0, h = (hi - lo) / n;
  double mass = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec x(2);
      x << lo + (i + 0.5) * h, lo + (j + 0.5) * h;
      mass += std::exp(q.log_density(x)) * h * h;
    }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("flow pathwise gradient matches finite differences") {
  const int n = 400;
  RealNvp proto(2, 3, 6);
  RngStream pr(13);
  const Vec p0 = proto.params() + 0.2 * pr.normal_vec(proto.param_count());

  auto f = [](const Vec& x) { return 0.5 * x.squaredNorm() + std::sin(x[0]); };
  auto fgrad = [](const Vec& x) {
    Vec g(2);
    g << x[0] + std::cos(x[0]), x[1];
    return g;
  };
  auto objective = [&](const Vec& p) {
    RealNvp qq(2, 3, 6);
    qq.set_params(p);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      RngStream rng = RngStream::from_path(17, {static_cast<std::uint64_t>(i)});
      double lq;
      const Vec x = qq.sample(rng, &lq, nullptr);
      acc += f(x) + lq;
    }
    return acc / n;
  };

  RealNvp q(2, 3, 6);
  q.set_params(p0);
  Vec grad = Vec::Zero(q.param_count());
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::from_path(17, {static_cast<std::uint64_t>(i)});
    double lq;
    std::unique_ptr<VariationalFamily::Tape> tape;
    const Vec x = q.sample(rng, &lq, &tape);
    q.backward(*tape, fgrad(x) / n, 1.0 / n, &grad);
  }

  RngStream dr(19);
  for (int trial = 0; trial < 4; ++trial) {
    Vec u = dr.normal_vec(q.param_count());
    u /= u.norm();
    const double h = 1e-5;
    const double fd = (objective(p0 + h * u) - objective(p0 - h * u)) / (2.0 * h);
    CHECK(grad.dot(u) == doctest::Approx(fd).epsilon(0.02));
  }
}

TEST_CASE("normalization statistics update from batch tapes") {
  RealNvp q(2, 2, 4);
  RngStream pr(20);
  q.set_params(q.params() + 0.3 * pr.normal_vec(q.param_count()));
  RngStream rng(21);
  std::vector<std::unique_ptr<VariationalFamily::Tape>> tapes;
  std::vector<const VariationalFamily::Tape*> raw;
  for (int i = 0; i < 64; ++i) {
    std::unique_ptr<VariationalFamily::Tape> t;
    q.sample(rng, nullptr, &t);
    raw.push_back(t.get());
    tapes.push_back(std::move(t));
  }
  const Vec before = q.extra_state();
  q.update_stats(raw);
  const Vec after = q.extra_state();
  CHECK((before - after).norm() > 0.0);

  // density remains exact after the stats move
  double lq;
  RngStream r2(22);
  const Vec x = q.sample(r2, &lq, nullptr);
  CHECK(q.log_density(x) == doctest::Approx(lq).epsilon(1e-6));
}

TEST_CASE("init_family defaults") {
  auto dg = init_family("diag-gaussian", 4);
  auto* d = dynamic_cast<DiagGaussian*>(dg.get());
  REQUIRE(d != nullptr);
  CHECK((d->mean() - Vec::Constant(4, 0.5)).norm() == 0.0);
  CHECK((d->sigma() - Vec::Constant(4, 0.1)).norm() == 0.0);

  auto fl = init_family("realnvp", 256, 32);
  auto* f = dynamic_cast<RealNvp*>(fl.get());
  REQUIRE(f != nullptr);
  CHECK(f->n_layers() == 32);
  CHECK(f->hidden_width() == 32);  // ceil(256 / 8)

  auto fl2 = init_family("realnvp", 2, 16, 32);
  auto* f2 = dynamic_cast<RealNvp*>(fl2.get());
  CHECK(f2->n_layers() == 16);
  CHECK(f2->hidden_width() == 32);

  CHECK_THROWS_AS(init_family("laplace", 2), ValidationError);
}

}  // TEST_SUITE
