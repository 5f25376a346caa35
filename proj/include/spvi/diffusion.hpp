#ifndef SPVI_DIFFUSION_HPP
#define SPVI_DIFFUSION_HPP

#include <utility>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/rng.hpp"

namespace spvi {

// Variance-preserving diffusion with a linear beta schedule on t in [0, T].
//   beta(t)  = beta_min + t (beta_max - beta_min)
//   alpha(t) = exp(-B(t)/2),   B(t) = integral of beta
//   rho(t)   = sqrt(1 - alpha(t)^2)
//   g(t)^2   = beta(t),   f(x,t) = -beta(t) x / 2
struct DiffusionSpec {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;
  double t_eps = 1e-5;
  int dim = 1;

  void validate() const;
};

double beta(const DiffusionSpec& spec, double t);
double beta_integral(const DiffusionSpec& spec, double t);
Vec drift(const DiffusionSpec& spec, const Vec& x, double t);
double drift_divergence(const DiffusionSpec& spec, double t);

// (alpha, rho) of the Gaussian transition kernel p_{0t}(x'|x) = N(alpha x, rho^2 I).
std::pair<double, double> kernel_params(const DiffusionSpec& spec, double t);

Vec perturb(const DiffusionSpec& spec, const Vec& x, double t, const Vec& z);

// Importance-sampling proposal p(t) ~ g(t)^2 / rho(t)^2 on [t_eps, T].
// The CDF has a closed form, tabulated on a log-spaced grid for inversion.
class TimeProposal {
 public:
  TimeProposal(const DiffusionSpec& spec, int grid_points = 10000);

  double normalizer() const { return z_; }
  double density(double t) const;

  // Draws t ~ p(t); the weight Z rho(t)^2 is the importance factor that
  // multiplies the integrand.
  std::pair<double, double> sample(RngStream& rng) const;

  const std::vector<double>& grid_t() const { return t_; }
  const std::vector<double>& grid_cdf() const { return cdf_; }

 private:
  DiffusionSpec spec_;
  double z_ = 0.0;
  std::vector<double> t_;
  std::vector<double> cdf_;
};

}  // namespace spvi

#endif
