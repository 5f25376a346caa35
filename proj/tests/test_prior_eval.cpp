#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spvi/prior_eval.hpp"

using namespace spvi;

namespace {

DiffusionSpec spec_d(int d) {
  DiffusionSpec s;
  s.dim = d;
  return s;
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

Mat random_spd(RngStream& rng, int d, double jitter = 0.3) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() / d + jitter * Mat::Identity(d, d);
}

}  // namespace

TEST_SUITE("prior_eval") {

TEST_CASE("bound is tight for the exact standard-normal score") {
  const int d = 2;
  const auto spec = spec_d(d);
  GaussianScore score({Vec::Zero(d), Mat::Identity(d, d)}, spec);
  const TimeProposal prop(spec);
  const SurrogateConfig cfg;  // N_t = N_z = 1 default
  CHECK(cfg.n_time == 1);
  CHECK(cfg.n_noise == 1);

  const Vec x = Vec::Zero(d);
  std::vector<double> vals;
  vals.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    RngStream rng = RngStream::from_path(42, {static_cast<std::uint64_t>(i)});
    vals.push_back(elbo_estimate(score, spec, prop, x, rng, cfg).value);
  }
  const auto [m, se] = oracles::mean_se(vals);
  const double truth = -0.5 * d * std::log(2.0 * kPi);  // log N(0; 0, I)
  CHECK(std::abs(m - truth) < 3.0 * se);
}

TEST_CASE("estimator converges at the Monte-Carlo rate") {
  const int d = 2;
  const auto spec = spec_d(d);
  GaussianScore score({Vec::Zero(d), Mat::Identity(d, d)}, spec);
  const TimeProposal prop(spec);
  const SurrogateConfig cfg;
  RngStream rx(31);
  const Vec x = rx.normal_vec(d);
  const double truth = standard_normal_logpdf(x);  // N(0, I) marginal is preserved

  std::uint64_t block = 0;
  std::vector<double> ses;
  for (int n : {2000, 8000, 32000}) {
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      RngStream rng = RngStream::from_path(77, {block, static_cast<std::uint64_t>(i)});
      vals.push_back(elbo_estimate(score, spec, prop, x, rng, cfg).value);
    }
    ++block;
    const auto [m, se] = oracles::mean_se(vals);
    CHECK(std::abs(m - truth) < 3.5 * se);
    ses.push_back(se);
  }
  // quadrupling the sample count halves the standard error
  CHECK(ses[1] < 0.6 * ses[0]);
  CHECK(ses[2] < 0.6 * ses[1]);
}

TEST_CASE("elbo gradient matches finite differences of the seed-averaged value") {
  const int d = 2;
  const auto spec = spec_d(d);
  RngStream rp(3);
  GaussianScore score({rp.normal_vec(d), random_spd(rp, d)}, spec);
  const TimeProposal prop(spec);
  const SurrogateConfig cfg;
  const Vec x0 = rp.normal_vec(d);
  const int n_seeds = 1000;

  auto averaged = [&](const Vec& x) {
    double acc = 0.0;
    for (int i = 0; i < n_seeds; ++i) {
      RngStream rng = RngStream::from_path(1234, {static_cast<std::uint64_t>(i)});
      acc += elbo_estimate(score, spec, prop, x, rng, cfg).value;
    }
    return acc / n_seeds;
  };

  Vec grad = Vec::Zero(d);
  for (int i = 0; i < n_seeds; ++i) {
    RngStream rng = RngStream::from_path(1234, {static_cast<std::uint64_t>(i)});
    Vec g;
    elbo_estimate_grad(score, spec, prop, x0, rng, cfg, &g);
    grad += g;
  }
  grad /= n_seeds;

  const Vec fd = oracles::fd_gradient(averaged, x0, 1e-4);
  CHECK((grad - fd).norm() < 0.02 * fd.norm());
}

TEST_CASE("elbo seed determinism") {
  const int d = 3;
  const auto spec = spec_d(d);
  GaussianScore score({Vec::Zero(d), Mat::Identity(d, d)}, spec);
  const TimeProposal prop(spec);
  RngStream a(5), b(5);
  const Vec x = Vec::Constant(d, 0.4);
  const double va = elbo_estimate(score, spec, prop, x, a, SurrogateConfig{4, 2}).value;
  const double vb = elbo_estimate(score, spec, prop, x, b, SurrogateConfig{4, 2}).value;
  CHECK(va == vb);
}

TEST_CASE("ode log-density is exact for the standard normal prior") {
  const int d = 4;
  const auto spec = spec_d(d);
  GaussianScore score({Vec::Zero(d), Mat::Identity(d, d)}, spec);
  RngStream rng(21);
  const OdeConfig cfg;
  CHECK(cfg.n_trace == 16);
  for (int i = 0; i < 3; ++i) {
    const Vec x = rng.normal_vec(d);
    RngStream r0 = rng.derive(static_cast<std::uint64_t>(i));
    const double lp = ode_logprob(score, spec, x, r0, cfg);
    CHECK(std::abs(lp - standard_normal_logpdf(x)) < 1e-4);
  }
}

TEST_CASE("ode log-density for a correlated gaussian prior") {
  const int d = 3;
  const auto spec = spec_d(d);
  RngStream rp(8);
  GaussianScore score({rp.normal_vec(d), random_spd(rp, d)}, spec);
  const Vec x = rp.normal_vec(d);
  const double truth = score.diffused_logpdf(x, spec.t_eps);

  // Terminal marginal p_T differs from pi by O(alpha(T)); the 1e-2 * D
  // budget covers that intrinsic truncation.
  OdeConfig cfg;
  cfg.exact_trace = true;
  RngStream rng(100);
  CHECK(std::abs(ode_logprob(score, spec, x, rng, cfg) - truth) < 1e-2 * d);

  cfg.exact_trace = false;
  std::vector<double> vals;
  for (int i = 0; i < 10; ++i) {
    RngStream r = RngStream::from_path(55, {static_cast<std::uint64_t>(i)});
    vals.push_back(ode_logprob(score, spec, x, r, cfg));
  }
  const auto [m, se] = oracles::mean_se(vals);
  (void)se;
  CHECK(std::abs(m - truth) < 1e-2 * d);
}

TEST_CASE("ode log-density for the bimodal mixture") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  Vec x(2);
  x << -1.2, 0.2;
  const double truth = score.diffused_logpdf(x, spec.t_eps);

  OdeConfig cfg;
  cfg.exact_trace = true;
  RngStream rng(9);
  CHECK(std::abs(ode_logprob(score, spec, x, rng, cfg) - truth) < 2e-3);

  cfg.exact_trace = false;
  cfg.n_trace = 20;
  std::vector<double> vals;
  for (int i = 0; i < 8; ++i) {
    RngStream r = RngStream::from_path(66, {static_cast<std::uint64_t>(i)});
    vals.push_back(ode_logprob(score, spec, x, r, cfg));
  }
  const auto [m, se] = oracles::mean_se(vals);
  (void)se;
  CHECK(std::abs(m - truth) < 1e-2);
}

TEST_CASE("ode seed determinism") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  Vec x(2);
  x << 0.5, -0.1;
  RngStream a(4), b(4);
  CHECK(ode_logprob(score, spec, x, a, OdeConfig{}) ==
        ode_logprob(score, spec, x, b, OdeConfig{}));
}

TEST_CASE("ode gradient matches finite differences") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  Vec x(2);
  x << -1.0, 0.3;

  OdeConfig cfg;
  cfg.fixed_steps = 200;  // smooth in x, so finite differences are clean
  auto value_at = [&](const Vec& u) {
    RngStream r(12);
    return ode_logprob(score, spec, u, r, cfg);
  };
  RngStream r(12);
  Vec grad;
  ode_logprob_grad(score, spec, x, r, cfg, &grad);
  const Vec fd = oracles::fd_gradient(value_at, x, 1e-5);
  CHECK((grad - fd).norm() < 2e-4 * (1.0 + fd.norm()));

  // adaptive path agrees with the fixed-step gradient to solver accuracy
  OdeConfig acfg;
  RngStream r2(12);
  Vec agrad;
  ode_logprob_grad(score, spec, x, r2, acfg, &agrad);
  CHECK((agrad - grad).norm() < 1e-2 * (1.0 + grad.norm()));
}

TEST_CASE("tv penalty") {
  CHECK(tv_penalty(Vec::Constant(9, 3.7), 3, 3, 1.0) == 0.0);

  Vec img = Vec::Zero(9);
  img[4] = 1.0;  // center pixel
  // brute-force oracle over forward differences
  double oracle = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const double dx = c + 1 < 3 ? img[r * 3 + c + 1] - img[r * 3 + c] : 0.0;
      const double dy = r + 1 < 3 ? img[(r + 1) * 3 + c] - img[r * 3 + c] : 0.0;
      oracle += std::sqrt(dx * dx + dy * dy);
    }
  CHECK(tv_penalty(img, 3, 3, 1.0) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(tv_penalty(img, 3, 3, 1e5) == doctest::Approx(1e5 * oracle).epsilon(1e-12));
  CHECK_THROWS_AS(tv_penalty(Vec::Zero(7), 3, 3, 1.0), ValidationError);

  RngStream rng(2);
  const Vec x = rng.normal_vec(16);
  const Vec g = tv_penalty_grad(x, 4, 4, 2.5);
  const Vec fd =
      oracles::fd_gradient([&](const Vec& u) { return tv_penalty(u, 4, 4, 2.5); }, x, 1e-6);
  CHECK((g - fd).norm() < 1e-4 * (1.0 + fd.norm()));
}

TEST_CASE("bound gap probe table and validity") {
  const auto spec = spec_d(2);
  GmmScore score(bimodal2d(), spec);
  RngStream rng(77);
  std::vector<Vec> samples;
  for (int i = 0; i < 8; ++i) {
    // draw from the prior itself
    const int k = rng.uniform() < 0.65 ? 0 : 1;
    samples.push_back(bimodal2d().means[static_cast<std::size_t>(k)] +
                      0.3 * rng.normal_vec(2));
  }
  SurrogateConfig scfg;
  scfg.n_time = 256;
  OdeConfig ocfg;
  const auto table = bound_gap_probe(score, spec, samples, 5, scfg, ocfg, 2024);
  CHECK(table.rows.size() == 40);

  int ok = 0;
  for (const auto& s : table.summarize()) {
    const double pooled = std::sqrt(s.b_se * s.b_se + s.ode_se * s.ode_se);
    if (s.b_mean <= s.ode_mean + 3.0 * pooled) ++ok;
  }
  CHECK(ok >= 7);  // >= 95% would be 7.6 of 8; exact scores give a tight bound
}

}  // TEST_SUITE
