#ifndef SPVI_PRIOR_EVAL_HPP
#define SPVI_PRIOR_EVAL_HPP

#include <utility>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/diffusion.hpp"
#include "spvi/ode.hpp"
#include "spvi/rng.hpp"
#include "spvi/score.hpp"

namespace spvi {

struct SurrogateConfig {
  int n_time = 1;
  int n_noise = 1;

  void validate() const {
    require(n_time >= 1 && n_noise >= 1, "surrogate config: counts must be >= 1");
  }
};

struct OdeConfig {
  int n_trace = 16;
  double rtol = 1e-5;
  double atol = 1e-5;
  int max_steps = 100000;
  int fixed_steps = 0;
  bool exact_trace = false;  // use tr(ds/dx) from the score field instead of probes

  void validate() const {
    require(n_trace >= 1, "ode config: n_trace must be >= 1");
    require(rtol > 0.0 && atol > 0.0, "ode config: tolerances must be positive");
  }
  OdeOptions ode_options() const { return {rtol, atol, max_steps, fixed_steps}; }
};

struct ElboResult {
  double value = 0.0;
  std::vector<std::pair<double, double>> time_weights;  // (t_i, Z rho(t_i)^2)
};

// Single-shot estimate of the denoising lower bound b(x). Draw order is
// fixed: N_z terminal noises first, then per time sample one (t, weight)
// draw followed by N_z kernel noises.
ElboResult elbo_estimate(const ScoreField& score, const DiffusionSpec& spec,
                         const TimeProposal& proposal, const Vec& x, RngStream& rng,
                         const SurrogateConfig& cfg);

// Same draws, also returning d b / d x (pathwise; needs the score vjp).
ElboResult elbo_estimate_grad(const ScoreField& score, const DiffusionSpec& spec,
                              const TimeProposal& proposal, const Vec& x, RngStream& rng,
                              const SurrogateConfig& cfg, Vec* grad);

// log p_ODE(x): integrates the probability-flow ODE with the accumulated
// divergence from t_eps to T and adds log pi of the terminal state.
double ode_logprob(const ScoreField& score, const DiffusionSpec& spec, const Vec& x,
                   RngStream& rng, const OdeConfig& cfg, OdeStats* stats = nullptr);

double ode_logprob_grad(const ScoreField& score, const DiffusionSpec& spec, const Vec& x,
                        RngStream& rng, const OdeConfig& cfg, Vec* grad);

// weight * isotropic total variation of an H x W image.
double tv_penalty(const Vec& x, int rows, int cols, double weight);
Vec tv_penalty_grad(const Vec& x, int rows, int cols, double weight);

struct BoundGapRow {
  int sample_id;
  int repeat;
  double b_value;
  double ode_value;
};

struct BoundGapTable {
  std::vector<BoundGapRow> rows;

  struct Summary {
    int sample_id;
    double b_mean, b_se;
    double ode_mean, ode_se;
  };
  std::vector<Summary> summarize() const;
};

// For each sample, n_repeats estimates of both evaluators; repeats use
// per-(sample, repeat) derived streams so the table is order-independent.
BoundGapTable bound_gap_probe(const ScoreField& score, const DiffusionSpec& spec,
                              const std::vector<Vec>& samples, int n_repeats,
                              const SurrogateConfig& surrogate_cfg, const OdeConfig& ode_cfg,
                              std::uint64_t seed);

}  // namespace spvi

#endif
