#include "spvi/prior_eval.hpp"

#include <cmath>

#include "spvi/parallel.hpp"

namespace spvi {

namespace {

ElboResult elbo_impl(const ScoreField& score, const DiffusionSpec& spec,
                     const TimeProposal& proposal, const Vec& x, RngStream& rng,
                     const SurrogateConfig& cfg, Vec* grad) {
  cfg.validate();
  require(x.size() == spec.dim, "elbo: dimension mismatch");
  require(x.allFinite(), "elbo: non-finite input");

  const auto [alpha_T, rho_T] = kernel_params(spec, spec.horizon);
  const int nt = cfg.n_time, nz = cfg.n_noise;

  ElboResult out;
  out.time_weights.reserve(static_cast<std::size_t>(nt));
  if (grad) *grad = Vec::Zero(spec.dim);

  // Terminal term: mean over x'_j ~ N(alpha(T) x, rho(T)^2 I) of log pi.
  double term1 = 0.0;
  for (int j = 0; j < nz; ++j) {
    const Vec zj = rng.normal_vec(spec.dim);
    const Vec xj = alpha_T * x + rho_T * zj;
    term1 += standard_normal_logpdf(xj);
    if (grad) *grad += (-alpha_T / nz) * xj;
  }
  term1 /= nz;

  // Importance-sampled time integral of g^2 h(t).
  double sum2 = 0.0;
  for (int i = 0; i < nt; ++i) {
    const auto [t, w] = proposal.sample(rng);
    out.time_weights.emplace_back(t, w);
    const auto [alpha, rho] = kernel_params(spec, t);
    const double g2 = beta(spec, t);
    const double div_term = 2.0 / g2 * drift_divergence(spec, t);
    for (int j = 0; j < nz; ++j) {
      const Vec z = rng.normal_vec(spec.dim);
      const Vec xp = alpha * x + rho * z;
      const Vec resid = score.eval(xp, t) + z / rho;
      sum2 += w * (resid.squaredNorm() - z.squaredNorm() / (rho * rho) - div_term);
      if (grad)
        *grad -= (w * alpha / (nt * nz)) * score.vjp(xp, t, resid);
    }
  }
  out.value = term1 - sum2 / (2.0 * nt * nz);
  return out;
}

// Probability-flow ODE with augmented divergence integral. State is
// [x (D); accumulated divergence (1)].
class PfOdeSystem : public OdeSystem {
 public:
  PfOdeSystem(const ScoreField& score, const DiffusionSpec& spec,
              std::vector<Vec> probes, bool exact_trace)
      : score_(score), spec_(spec), probes_(std::move(probes)), exact_(exact_trace) {}

  Vec rhs(const Vec& y, double t) const override {
    const int d = spec_.dim;
    const Vec x = y.head(d);
    const double b = beta(spec_, t);
    const Vec s = score_.eval(x, t);
    Vec out(d + 1);
    out.head(d) = -0.5 * b * (x + s);

    double trace_s;
    if (exact_) {
      const auto tr = score_.divergence(x, t);
      if (!tr) throw NumericalError("ode_logprob: score has no exact divergence");
      trace_s = *tr;
    } else {
      double acc = 0.0;
      for (const Vec& v : probes_) acc += v.dot(score_.jvp(x, t, v));
      trace_s = acc / static_cast<double>(probes_.size());
    }
    out[d] = -0.5 * b * (static_cast<double>(d) + trace_s);
    return out;
  }

  Vec rhs_vjp(const Vec& y, double t, const Vec& w) const override {
    const int d = spec_.dim;
    const Vec x = y.head(d);
    const Vec wx = w.head(d);
    const double wl = w[d];
    const double b = beta(spec_, t);

    Vec xbar = -0.5 * b * (wx + score_.vjp(x, t, wx));
    if (wl != 0.0) {
      Vec dq = Vec::Zero(d);
      if (exact_) {
        const auto g = score_.div_grad(x, t);
        if (!g) throw NumericalError("ode_logprob: score has no divergence gradient");
        dq = *g;
      } else {
        for (const Vec& v : probes_) {
          const auto g = score_.div_pair_grad(x, t, v);
          if (!g) throw NumericalError("ode_logprob: score has no div_pair_grad");
          dq += *g;
        }
        dq /= static_cast<double>(probes_.size());
      }
      xbar += wl * (-0.5 * b) * dq;
    }
    Vec out(d + 1);
    out.head(d) = xbar;
    out[d] = 0.0;
    return out;
  }

 private:
  const ScoreField& score_;
  const DiffusionSpec& spec_;
  std::vector<Vec> probes_;
  bool exact_;
};

std::vector<Vec> draw_probes(RngStream& rng, int n, int dim) {
  std::vector<Vec> probes;
  probes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) probes.push_back(rng.rademacher_vec(dim));
  return probes;
}

}  // namespace

ElboResult elbo_estimate(const ScoreField& score, const DiffusionSpec& spec,
                         const TimeProposal& proposal, const Vec& x, RngStream& rng,
                         const SurrogateConfig& cfg) {
  return elbo_impl(score, spec, proposal, x, rng, cfg, nullptr);
}

ElboResult elbo_estimate_grad(const ScoreField& score, const DiffusionSpec& spec,
                              const TimeProposal& proposal, const Vec& x, RngStream& rng,
                              const SurrogateConfig& cfg, Vec* grad) {
  require(grad != nullptr, "elbo_estimate_grad: null grad output");
  return elbo_impl(score, spec, proposal, x, rng, cfg, grad);
}

double ode_logprob(const ScoreField& score, const DiffusionSpec& spec, const Vec& x,
                   RngStream& rng, const OdeConfig& cfg, OdeStats* stats) {
  cfg.validate();
  require(x.size() == spec.dim, "ode_logprob: dimension mismatch");
  require(x.allFinite(), "ode_logprob: non-finite input");

  PfOdeSystem sys(score, spec,
                  cfg.exact_trace ? std::vector<Vec>{} : draw_probes(rng, cfg.n_trace, spec.dim),
                  cfg.exact_trace);
  Vec y0(spec.dim + 1);
  y0.head(spec.dim) = x;
  y0[spec.dim] = 0.0;
  const Vec yT = integrate(sys, std::move(y0), spec.t_eps, spec.horizon,
                           cfg.ode_options(), nullptr, stats);
  return standard_normal_logpdf(yT.head(spec.dim)) + yT[spec.dim];
}

double ode_logprob_grad(const ScoreField& score, const DiffusionSpec& spec, const Vec& x,
                        RngStream& rng, const OdeConfig& cfg, Vec* grad) {
  cfg.validate();
  require(grad != nullptr, "ode_logprob_grad: null grad output");
  require(x.size() == spec.dim, "ode_logprob_grad: dimension mismatch");

  PfOdeSystem sys(score, spec,
                  cfg.exact_trace ? std::vector<Vec>{} : draw_probes(rng, cfg.n_trace, spec.dim),
                  cfg.exact_trace);
  Vec y0(spec.dim + 1);
  y0.head(spec.dim) = x;
  y0[spec.dim] = 0.0;
  OdeTape tape;
  const Vec yT = integrate(sys, std::move(y0), spec.t_eps, spec.horizon,
                           cfg.ode_options(), &tape);
  const double value = standard_normal_logpdf(yT.head(spec.dim)) + yT[spec.dim];

  Vec ybar(spec.dim + 1);
  ybar.head(spec.dim) = -yT.head(spec.dim);  // d log pi / d x_T
  ybar[spec.dim] = 1.0;
  const Vec y0bar = integrate_backward(sys, tape, std::move(ybar));
  *grad = y0bar.head(spec.dim);
  return value;
}

double tv_penalty(const Vec& x, int rows, int cols, double weight) {
  require(rows >= 1 && cols >= 1 && rows * cols == x.size(),
          "tv_penalty: image shape does not match vector length");
  double tv = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = x[r * cols + c];
      const double dx = (c + 1 < cols) ? x[r * cols + c + 1] - v : 0.0;
      const double dy = (r + 1 < rows) ? x[(r + 1) * cols + c] - v : 0.0;
      tv += std::sqrt(dx * dx + dy * dy);
    }
  }
  return weight * tv;
}

Vec tv_penalty_grad(const Vec& x, int rows, int cols, double weight) {
  require(rows >= 1 && cols >= 1 && rows * cols == x.size(),
          "tv_penalty: image shape does not match vector length");
  Vec g = Vec::Zero(x.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = x[r * cols + c];
      const double dx = (c + 1 < cols) ? x[r * cols + c + 1] - v : 0.0;
      const double dy = (r + 1 < rows) ? x[(r + 1) * cols + c] - v : 0.0;
      const double m = std::sqrt(dx * dx + dy * dy);
      if (m == 0.0) continue;
      g[r * cols + c] += weight * (-(dx + dy) / m);
      if (c + 1 < cols) g[r * cols + c + 1] += weight * (dx / m);
      if (r + 1 < rows) g[(r + 1) * cols + c] += weight * (dy / m);
    }
  }
  return g;
}

std::vector<BoundGapTable::Summary> BoundGapTable::summarize() const {
  std::vector<Summary> out;
  if (rows.empty()) return out;
  int max_id = 0;
  for (const auto& r : rows) max_id = std::max(max_id, r.sample_id);
  for (int id = 0; id <= max_id; ++id) {
    double bsum = 0, bsq = 0, osum = 0, osq = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.sample_id != id) continue;
      bsum += r.b_value;
      bsq += r.b_value * r.b_value;
      osum += r.ode_value;
      osq += r.ode_value * r.ode_value;
      ++n;
    }
    if (n == 0) continue;
    Summary s;
    s.sample_id = id;
    s.b_mean = bsum / n;
    s.ode_mean = osum / n;
    const double bvar = n > 1 ? (bsq - n * s.b_mean * s.b_mean) / (n - 1) : 0.0;
    const double ovar = n > 1 ? (osq - n * s.ode_mean * s.ode_mean) / (n - 1) : 0.0;
    s.b_se = std::sqrt(std::max(bvar, 0.0) / n);
    s.ode_se = std::sqrt(std::max(ovar, 0.0) / n);
    out.push_back(s);
  }
  return out;
}

BoundGapTable bound_gap_probe(const ScoreField& score, const DiffusionSpec& spec,
                              const std::vector<Vec>& samples, int n_repeats,
                              const SurrogateConfig& surrogate_cfg, const OdeConfig& ode_cfg,
                              std::uint64_t seed) {
  require(!samples.empty(), "bound_gap_probe: empty batch");
  require(n_repeats >= 1, "bound_gap_probe: need n_repeats >= 1");

  const TimeProposal proposal(spec);
  const std::int64_t n_rows =
      static_cast<std::int64_t>(samples.size()) * n_repeats;
  BoundGapTable table;
  table.rows.resize(static_cast<std::size_t>(n_rows));

  parallel_for(n_rows, [&](std::int64_t idx) {
    const int sid = static_cast<int>(idx / n_repeats);
    const int rep = static_cast<int>(idx % n_repeats);
    RngStream rb = RngStream::from_path(seed, {0x61, static_cast<std::uint64_t>(idx)});
    RngStream ro = RngStream::from_path(seed, {0x62, static_cast<std::uint64_t>(idx)});
    const auto su = static_cast<std::size_t>(sid);
    BoundGapRow row;
    row.sample_id = sid;
    row.repeat = rep;
    row.b_value = elbo_estimate(score, spec, proposal, samples[su], rb, surrogate_cfg).value;
    row.ode_value = ode_logprob(score, spec, samples[su], ro, ode_cfg);
    table.rows[static_cast<std::size_t>(idx)] = row;
  });
  return table;
}

}  // namespace spvi
