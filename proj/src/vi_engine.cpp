#include "spvi/vi_engine.hpp"

#include <chrono>
#include <cmath>

#include "spvi/parallel.hpp"

namespace spvi {

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "surrogate") return PriorKind::surrogate;
  if (s == "exact") return PriorKind::exact;
  if (s == "tv") return PriorKind::tv;
  throw ValidationError("unknown prior kind: " + s);
}

std::string to_string(PriorKind k) {
  switch (k) {
    case PriorKind::surrogate: return "surrogate";
    case PriorKind::exact: return "exact";
    case PriorKind::tv: return "tv";
  }
  return "?";
}

double PriorTerm::logdensity(const Vec& x, RngStream& rng, Vec* grad) const {
  double value = 0.0;
  switch (kind) {
    case PriorKind::surrogate: {
      require(score != nullptr && proposal != nullptr, "prior term: surrogate needs a score");
      if (grad)
        value = elbo_estimate_grad(*score, spec, *proposal, x, rng, surrogate, grad).value;
      else
        value = elbo_estimate(*score, spec, *proposal, x, rng, surrogate).value;
      break;
    }
    case PriorKind::exact: {
      require(score != nullptr, "prior term: exact needs a score");
      value = grad ? ode_logprob_grad(*score, spec, x, rng, ode, grad)
                   : ode_logprob(*score, spec, x, rng, ode);
      break;
    }
    case PriorKind::tv: {
      value = -tv_penalty(x, tv_rows, tv_cols, tv_weight);
      if (grad) *grad = -tv_penalty_grad(x, tv_rows, tv_cols, tv_weight);
      break;
    }
  }
  if (flux_weight > 0.0) {
    value -= flux_penalty(x, flux_target, flux_weight);
    if (grad) *grad -= flux_penalty_grad(x, flux_target, flux_weight);
  }
  return value;
}

void ViConfig::validate() const {
  require(learning_rate > 0.0, "vi config: learning rate must be positive");
  require(grad_clip > 0.0, "vi config: gradient clip must be positive");
  require(batch >= 1, "vi config: batch must be >= 1");
  require(max_steps >= 0, "vi config: max_steps must be >= 0");
  require(snapshot_interval >= 1, "vi config: snapshot interval must be >= 1");
  require(epsilon > 0.0 && epsilon < 1.0, "vi config: epsilon must be in (0, 1)");
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

void Adam::step(Vec& params, const Vec& grad) {
  require(grad.size() == params.size(), "adam: shape mismatch");
  if (!grad.allFinite()) throw NumericalError("adam: non-finite gradient");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

Vec clip_global_norm(const Vec& g, double bound) {
  const double n = g.norm();
  if (n <= bound || n == 0.0) return g;
  return g * (bound / n);
}

bool converged(const std::vector<Vec>& snapshot_means, double eps) {
  require(snapshot_means.size() >= 3, "converged: need at least three snapshots");
  auto delta = [&](std::size_t i) {
    const double prev = snapshot_means[i - 1].norm();
    if (prev == 0.0) throw NumericalError("converged: zero-norm previous snapshot");
    return (snapshot_means[i] - snapshot_means[i - 1]).norm() / prev;
  };
  const std::size_t last = snapshot_means.size() - 1;
  return delta(last) < eps && delta(last - 1) < eps;
}

namespace {

constexpr std::uint64_t kSampleTag = 0xA5;

struct BatchResult {
  double loss = 0.0;
  Vec grad;
};

// One batch of the objective with pathwise gradients, chunked so per-sample
// slots stay bounded while the reduction runs serially in sample order.
BatchResult batch_objective_grad(const VariationalFamily& q, const Measurement& y,
                                 const PriorTerm& prior, std::uint64_t seed,
                                 std::uint64_t step, int batch,
                                 std::vector<std::unique_ptr<VariationalFamily::Tape>>* tapes) {
  const Eigen::Index np = q.param_count();
  BatchResult out;
  out.grad = Vec::Zero(np);

  const int chunk = std::min(batch, 64);
  std::vector<Vec> slot_grad(static_cast<std::size_t>(chunk));
  std::vector<double> slot_loss(static_cast<std::size_t>(chunk));
  if (tapes) tapes->resize(static_cast<std::size_t>(batch));

  for (int base = 0; base < batch; base += chunk) {
    const int n = std::min(chunk, batch - base);
    parallel_for(n, [&](std::int64_t c) {
      const int j = base + static_cast<int>(c);
      RngStream rng = RngStream::from_path(
          seed, {kSampleTag, step, static_cast<std::uint64_t>(j)});
      double logq;
      std::unique_ptr<VariationalFamily::Tape> tape;
      const Vec x = q.sample(rng, &logq, &tape);

      const double loglik = log_likelihood(y, x);
      const Vec glik = log_likelihood_grad(y, x);
      Vec gprior(x.size());
      const double lprior = prior.logdensity(x, rng, &gprior);

      slot_loss[static_cast<std::size_t>(c)] = -loglik - lprior + logq;
      Vec g = Vec::Zero(np);
      const Vec xbar = -(glik + gprior);
      q.backward(*tape, xbar, 1.0, &g);
      slot_grad[static_cast<std::size_t>(c)] = std::move(g);
      if (tapes) (*tapes)[static_cast<std::size_t>(j)] = std::move(tape);
    });
    for (int c = 0; c < n; ++c) {
      out.loss += slot_loss[static_cast<std::size_t>(c)];
      out.grad += slot_grad[static_cast<std::size_t>(c)];
    }
  }
  out.loss /= batch;
  out.grad /= batch;
  if (!std::isfinite(out.loss))
    throw NumericalError("objective: non-finite loss (step " + std::to_string(step) + ")");
  return out;
}

}  // namespace

double objective(const VariationalFamily& q, const Measurement& y, const PriorTerm& prior,
                 std::uint64_t seed, int batch) {
  require(batch >= 1, "objective: batch must be >= 1");
  std::vector<double> losses(static_cast<std::size_t>(batch));
  parallel_for(batch, [&](std::int64_t j) {
    RngStream rng =
        RngStream::from_path(seed, {kSampleTag, 0, static_cast<std::uint64_t>(j)});
    double logq;
    std::unique_ptr<VariationalFamily::Tape> tape;
    const Vec x = q.sample(rng, &logq, &tape);
    const double loglik = log_likelihood(y, x);
    const double lprior = prior.logdensity(x, rng, nullptr);
    losses[static_cast<std::size_t>(j)] = -loglik - lprior + logq;
  });
  double acc = 0.0;
  for (double l : losses) acc += l;
  const double loss = acc / batch;
  if (!std::isfinite(loss)) throw NumericalError("objective: non-finite loss");
  return loss;
}

RunHistory fit(VariationalFamily& q, const Measurement& y, const PriorTerm& prior,
               const ViConfig& cfg, FitObserver* observer) {
  cfg.validate();
  RunHistory hist;
  if (cfg.max_steps == 0) return hist;

  Vec params = q.params();
  Adam adam(params.size(), cfg.learning_rate);
  std::vector<Vec> snapshots;
  const double ema = 2.0 / 101.0;

  for (int step = 0; step < cfg.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::unique_ptr<VariationalFamily::Tape>> tapes;
    const BatchResult batch = batch_objective_grad(
        q, y, prior, cfg.seed, static_cast<std::uint64_t>(step), cfg.batch, &tapes);
    const Vec clipped = clip_global_norm(batch.grad, cfg.grad_clip);
    adam.step(params, clipped);
    q.set_params(params);
    std::vector<const VariationalFamily::Tape*> raw;
    raw.reserve(tapes.size());
    for (const auto& t : tapes) raw.push_back(t.get());
    q.update_stats(raw);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    hist.loss.push_back(batch.loss);
    hist.smoothed_loss.push_back(hist.smoothed_loss.empty()
                                     ? batch.loss
                                     : (1.0 - ema) * hist.smoothed_loss.back() +
                                           ema * batch.loss);
    hist.ms_per_step.push_back(ms);
    if (observer) observer->on_step(step, batch.loss, ms);

    if ((step + 1) % cfg.snapshot_interval == 0) {
      snapshots.push_back(q.mean_representative(cfg.snapshot_seed));
      if (snapshots.size() >= 2) {
        const double prev = snapshots[snapshots.size() - 2].norm();
        if (prev == 0.0) throw NumericalError("fit: zero-norm snapshot mean");
        const double delta =
            (snapshots.back() - snapshots[snapshots.size() - 2]).norm() / prev;
        hist.deltas.emplace_back(step + 1, delta);
        if (observer) observer->on_snapshot(step + 1, delta, q);
        if (snapshots.size() >= 3 && converged(snapshots, cfg.epsilon)) {
          hist.converged = true;
          break;
        }
      } else if (observer) {
        observer->on_snapshot(step + 1, std::numeric_limits<double>::quiet_NaN(), q);
      }
    }
  }
  return hist;
}

}  // namespace spvi
