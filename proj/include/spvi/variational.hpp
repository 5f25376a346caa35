#ifndef SPVI_VARIATIONAL_HPP
#define SPVI_VARIATIONAL_HPP

#include <memory>
#include <string>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/rng.hpp"

namespace spvi {

// A variational family with reparameterized sampling, exact log-density and
// hand-rolled reverse mode for the pathwise gradient.
class VariationalFamily {
 public:
  virtual ~VariationalFamily() = default;

  virtual std::string kind() const = 0;
  virtual int dim() const = 0;
  virtual int param_count() const = 0;
  virtual Vec params() const = 0;
  virtual void set_params(const Vec& p) = 0;

  struct Tape {
    virtual ~Tape() = default;
  };

  // One reparameterized draw. log q is exact for the returned sample.
  virtual Vec sample(RngStream& rng, double* logq,
                     std::unique_ptr<Tape>* tape) const = 0;

  // Accumulates into param_grad the gradient of
  //   xbar . x(params)  +  logq_bar * log q(params)
  // for the draw recorded on the tape.
  virtual void backward(const Tape& tape, const Vec& xbar, double logq_bar,
                        Vec* param_grad) const = 0;

  virtual double log_density(const Vec& x) const = 0;

  // Representative mean for snapshot convergence: analytic when available,
  // otherwise a fixed-seed empirical mean.
  virtual Vec mean_representative(std::uint64_t snapshot_seed) const = 0;

  // Non-trainable state updates from the last optimization batch (flow
  // normalization moments). No-op by default.
  virtual void update_stats(const std::vector<const Tape*>& tapes) { (void)tapes; }

  // Non-trainable state for checkpointing (empty by default).
  virtual Vec extra_state() const { return Vec(); }
  virtual void set_extra_state(const Vec& s) { require(s.size() == 0, "no extra state"); }
};

class DiagGaussian : public VariationalFamily {
 public:
  // B.1 initialization: mean 0.5, standard deviation 0.1.
  explicit DiagGaussian(int dim, double mean_init = 0.5, double sigma_init = 0.1);

  std::string kind() const override { return "diag-gaussian"; }
  int dim() const override { return d_; }
  int param_count() const override { return 2 * d_; }
  Vec params() const override;
  void set_params(const Vec& p) override;

  Vec sample(RngStream& rng, double* logq, std::unique_ptr<Tape>* tape) const override;
  void backward(const Tape& tape, const Vec& xbar, double logq_bar,
                Vec* param_grad) const override;
  double log_density(const Vec& x) const override;
  Vec mean_representative(std::uint64_t) const override { return mu_; }

  const Vec& mean() const { return mu_; }
  Vec sigma() const { return sigma_raw_.cwiseAbs(); }

 private:
  int d_;
  Vec mu_;
  Vec sigma_raw_;  // effective sigma is |sigma_raw|
};

// RealNVP: affine coupling layers with alternating masks, each followed by a
// moment-normalization layer whose statistics are frozen during evaluation
// and refreshed from batch moments after optimizer steps.
class RealNvp : public VariationalFamily {
 public:
  RealNvp(int dim, int n_layers, int hidden_width);

  std::string kind() const override { return "realnvp"; }
  int dim() const override { return d_; }
  int param_count() const override;
  Vec params() const override;
  void set_params(const Vec& p) override;

  Vec sample(RngStream& rng, double* logq, std::unique_ptr<Tape>* tape) const override;
  void backward(const Tape& tape, const Vec& xbar, double logq_bar,
                Vec* param_grad) const override;
  double log_density(const Vec& x) const override;
  Vec mean_representative(std::uint64_t snapshot_seed) const override;
  void update_stats(const std::vector<const Tape*>& tapes) override;

  Vec extra_state() const override;            // normalization moments
  void set_extra_state(const Vec& s) override;

  int n_layers() const { return static_cast<int>(layers_.size()); }
  int hidden_width() const { return width_; }

  // generator direction: base noise -> sample; returns x and fills logdet
  Vec forward_from_base(const Vec& eps, double* logdet) const;
  // normalizing direction: sample -> base noise
  Vec inverse_to_base(const Vec& x, double* logdet) const;

 private:
  struct Coupling {
    Vec mask;  // 1 = pass-through coordinate
    Mat w1, w2, w3;
    Vec b1, b2, b3;
    Vec run_mean, run_var;  // moments of the following normalization layer
  };
  struct FlowTape;

  void mlp_forward(const Coupling& c, const Vec& z0, Vec* z1, Vec* z2, Vec* s,
                   Vec* t) const;

  int d_;
  int width_;
  std::vector<Coupling> layers_;
  double scale_cap_ = 2.0;
  double norm_eps_ = 1e-6;
  double momentum_ = 0.1;
};

// Factory per the initialization protocol: diag Gaussian at (0.5, 0.1);
// RealNVP near-identity with hidden width ceil(D/8) unless overridden.
std::unique_ptr<VariationalFamily> init_family(const std::string& kind, int dim,
                                               int n_layers = 32, int hidden_width = 0);

}  // namespace spvi

#endif
