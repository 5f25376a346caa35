#ifndef SPVI_VI_ENGINE_HPP
#define SPVI_VI_ENGINE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spvi/forward_models.hpp"
#include "spvi/prior_eval.hpp"
#include "spvi/variational.hpp"

namespace spvi {

enum class PriorKind { surrogate, exact, tv };

PriorKind prior_kind_from_string(const std::string& s);
std::string to_string(PriorKind k);

// The log-prior slot of the objective: the ELBO surrogate, the exact ODE
// log-density, or a TV regularizer, plus the optional flux constraint.
struct PriorTerm {
  PriorKind kind = PriorKind::surrogate;
  const ScoreField* score = nullptr;
  DiffusionSpec spec;
  const TimeProposal* proposal = nullptr;  // required for the surrogate
  SurrogateConfig surrogate;
  OdeConfig ode;
  double tv_weight = 1e5;
  int tv_rows = 0, tv_cols = 0;
  double flux_weight = 0.0;
  double flux_target = 0.0;

  // log-prior value at x; grad may be null.
  double logdensity(const Vec& x, RngStream& rng, Vec* grad) const;
};

struct ViConfig {
  double learning_rate = 2e-4;   // exact-prior reference; 1e-5 for the surrogate at scale
  double grad_clip = 1.0;
  int batch = 64;
  int max_steps = 10000;
  int snapshot_interval = 1000;
  double epsilon = 0.005;
  std::uint64_t seed = 0;
  std::uint64_t snapshot_seed = 1024;

  void validate() const;
};

struct RunHistory {
  std::vector<double> loss;
  std::vector<double> smoothed_loss;  // EMA, window 100, reporting only
  std::vector<double> ms_per_step;
  std::vector<std::pair<int, double>> deltas;  // (step, delta) at snapshots
  std::vector<std::string> checkpoints;
  bool converged = false;
};

class Adam {
 public:
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(Vec& params, const Vec& grad);

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  Vec m_, v_;
};

// Scales g so its global norm is at most bound.
Vec clip_global_norm(const Vec& g, double bound);

// True iff the last two consecutive relative snapshot changes are below eps.
bool converged(const std::vector<Vec>& snapshot_means, double eps);

// Monte-Carlo objective E_q[-log p(y|x) - logprior(x) + log q(x)] over a
// batch; per-sample randomness is derived from (seed, sample index).
double objective(const VariationalFamily& q, const Measurement& y, const PriorTerm& prior,
                 std::uint64_t seed, int batch);

// Snapshot / checkpoint hooks for the runner.
class FitObserver {
 public:
  virtual ~FitObserver() = default;
  virtual void on_step(int, double, double) {}
  virtual void on_snapshot(int, double, const VariationalFamily&) {}
};

RunHistory fit(VariationalFamily& q, const Measurement& y, const PriorTerm& prior,
               const ViConfig& cfg, FitObserver* observer = nullptr);

}  // namespace spvi

#endif
