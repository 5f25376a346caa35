#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spvi/score.hpp"

using namespace spvi;

namespace {

DiffusionSpec spec_d(int d) {
  DiffusionSpec s;
  s.dim = d;
  return s;
}

Mat random_spd(RngStream& rng, int d, double jitter = 0.3) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() / d + jitter * Mat::Identity(d, d);
}

GmmPrior bimodal2d() {
  GmmPrior p;
  p.weights = Vec(2);
  p.weights << 0.65, 0.35;
  Vec m1(2), m2(2);
  m1 << -1.5, 0.0;
  m2 << 1.5, 0.0;
  p.means = {m1, m2};
  p.covs = {0.09 * Mat::Identity(2, 2), 0.09 * Mat::Identity(2, 2)};
  return p;
}

}  // namespace

TEST_SUITE("score") {

TEST_CASE("standard normal prior keeps score -x at every t") {
  const auto spec = spec_d(3);
  GaussianScore score({Vec::Zero(3), Mat::Identity(3, 3)}, spec);
  RngStream rng(1);
  for (double t : {spec.t_eps, 0.2, 0.7, 1.0}) {
    const Vec x = rng.normal_vec(3);
    CHECK((score.eval(x, t) + x).norm() < 1e-12);
  }
}

TEST_CASE("any prior forgets itself at the horizon") {
  const auto spec = spec_d(3);
  Vec mu(3);
  mu << 3.0, -1.0, 2.0;
  GaussianScore score({mu, 0.5 * Mat::Identity(3, 3)}, spec);
  RngStream rng(2);
  const Vec x = rng.normal_vec(3);
  CHECK((score.eval(x, spec.horizon) + x).norm() < 0.05);
}

TEST_CASE("gaussian score equals the gradient of the diffused log-density") {
  const auto spec = spec_d(4);
  RngStream rng(5);
  GaussianScore score({rng.normal_vec(4), random_spd(rng, 4)}, spec);
  for (double t : {spec.t_eps, 0.3, 0.9}) {
    const Vec x = rng.normal_vec(4);
    const Vec fd = oracles::fd_gradient(
        [&](const Vec& u) { return score.diffused_logpdf(u, t); }, x, 1e-4);
    CHECK((score.eval(x, t) - fd).norm() < 1e-5);
  }
}

TEST_CASE("gaussian jacobian operators") {
  const auto spec = spec_d(3);
  RngStream rng(11);
  GaussianScore score({rng.normal_vec(3), random_spd(rng, 3)}, spec);
  const Vec x = rng.normal_vec(3);
  const Vec v = rng.normal_vec(3);
  const double t = 0.37;
  const Mat j = oracles::fd_jacobian([&](const Vec& u) { return score.eval(u, t); }, x);
  CHECK((score.jvp(x, t, v) - j * v).norm() < 1e-6);
  CHECK((score.vjp(x, t, v) - j.transpose() * v).norm() < 1e-6);
  CHECK(*score.divergence(x, t) == doctest::Approx(j.trace()).epsilon(1e-6));
  CHECK(score.div_pair_grad(x, t, v)->norm() == 0.0);
}

TEST_CASE("single-component mixture degenerates to the gaussian score") {
  const auto spec = spec_d(3);
  RngStream rng(7);
  const Vec mu = rng.normal_vec(3);
  const Mat c = random_spd(rng, 3);
  GaussianScore gs({mu, c}, spec);
  GmmPrior p;
  p.weights = Vec::Ones(1);
  p.means = {mu};
  p.covs = {c};
  GmmScore ms(p, spec);
  for (double t : {spec.t_eps, 0.5, 1.0}) {
    const Vec x = rng.normal_vec(3);
    CHECK((gs.eval(x, t) - ms.eval(x, t)).norm() < 1e-10);
    CHECK(gs.diffused_logpdf(x, t) == doctest::Approx(ms.diffused_logpdf(x, t)).epsilon(1e-12));
  }
}

TEST_CASE("symmetric mixture has zero score at the origin") {
  const auto spec = spec_d(2);
  GmmPrior p;
  p.weights = Vec(2);
  p.weights << 0.5, 0.5;
  Vec m(2);
  m << 1.2, -0.4;
  p.means = {m, -m};
  p.covs = {0.2 * Mat::Identity(2, 2), 0.2 * Mat::Identity(2, 2)};
  GmmScore score(p, spec);
  for (double t : {spec.t_eps, 0.4, 1.0})
    CHECK(score.eval(Vec::Zero(2), t).norm() < 1e-12);
}

TEST_CASE("gmm score equals the gradient of the mixture log-density") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  RngStream rng(13);
  for (double t : {spec.t_eps, 0.25, 0.8}) {
    const Vec x = rng.normal_vec(2);
    const Vec fd = oracles::fd_gradient(
        [&](const Vec& u) { return score.diffused_logpdf(u, t); }, x, 1e-4);
    CHECK((score.eval(x, t) - fd).norm() < 1e-5);
  }
}

TEST_CASE("gmm jacobian and third-order operators match finite differences") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  RngStream rng(17);
  const double t = 0.21;
  const Vec x = rng.normal_vec(2);
  const Vec v = rng.normal_vec(2);

  const Mat j = oracles::fd_jacobian([&](const Vec& u) { return score.eval(u, t); }, x);
  CHECK((score.jvp(x, t, v) - j * v).norm() < 1e-5);
  CHECK(*score.divergence(x, t) == doctest::Approx(j.trace()).epsilon(1e-5));

  const Vec fd_pair = oracles::fd_gradient(
      [&](const Vec& u) { return v.dot(score.jvp(u, t, v)); }, x, 1e-4);
  CHECK((*score.div_pair_grad(x, t, v) - fd_pair).norm() < 1e-4 * (1.0 + fd_pair.norm()));

  const Vec fd_div = oracles::fd_gradient(
      [&](const Vec& u) { return *score.divergence(u, t); }, x, 1e-4);
  CHECK((*score.div_grad(x, t) - fd_div).norm() < 1e-4 * (1.0 + fd_div.norm()));
}

TEST_CASE("log-sum-exp stability for wildly unbalanced mixtures") {
  const auto spec = spec_d(2);
  GmmPrior p;
  p.weights = Vec(2);
  p.weights << 1.0, 1e-304;  // log-weight gap ~ 700
  Vec m1(2), m2(2);
  m1 << -40.0, 0.0;
  m2 << 40.0, 0.0;
  p.means = {m1, m2};
  p.covs = {0.5 * Mat::Identity(2, 2), 0.5 * Mat::Identity(2, 2)};
  GmmScore score(p, spec);
  RngStream rng(19);
  for (int i = 0; i <= 50; ++i) {
    const double t = spec.t_eps + (spec.horizon - spec.t_eps) * i / 50.0;
    const Vec x = 30.0 * rng.normal_vec(2);
    const Vec s = score.eval(x, t);
    REQUIRE(s.allFinite());
    REQUIRE(std::isfinite(score.diffused_logpdf(x, t)));
  }
}

TEST_CASE("continuity in t") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  Vec x(2);
  x << 0.3, -0.2;
  for (double t : {1e-4, 0.01, 0.5, 0.999}) {
    const Vec a = score.eval(x, t);
    const Vec b = score.eval(x, t + 1e-9);
    CHECK((a - b).norm() < 1e-6 * (1.0 + a.norm()));
  }
}

TEST_CASE("prior validation") {
  GaussianPrior g{Vec::Zero(2), Mat::Identity(3, 3)};
  CHECK_THROWS_AS(g.validate(), ValidationError);
  GmmPrior p = bimodal2d();
  p.weights[0] = 0.7;  // no longer sums to 1
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

}  // TEST_SUITE
