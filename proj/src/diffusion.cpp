#include "spvi/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace spvi {

void DiffusionSpec::validate() const {
  require(beta_min > 0.0 && beta_min < beta_max, "diffusion: need 0 < beta_min < beta_max");
  require(t_eps > 0.0 && t_eps < horizon, "diffusion: need 0 < t_eps < horizon");
  require(dim >= 1, "diffusion: dim must be >= 1");
}

double beta(const DiffusionSpec& spec, double t) {
  if (t < 0.0 || t > spec.horizon)
    throw std::domain_error("beta: t outside [0, T]");
  return spec.beta_min + t * (spec.beta_max - spec.beta_min);
}

double beta_integral(const DiffusionSpec& spec, double t) {
  return spec.beta_min * t + 0.5 * (spec.beta_max - spec.beta_min) * t * t;
}

Vec drift(const DiffusionSpec& spec, const Vec& x, double t) {
  require(x.size() == spec.dim, "drift: dimension mismatch");
  return (-0.5 * beta(spec, t)) * x;
}

double drift_divergence(const DiffusionSpec& spec, double t) {
  return -0.5 * static_cast<double>(spec.dim) * beta(spec, t);
}

std::pair<double, double> kernel_params(const DiffusionSpec& spec, double t) {
  const double b = beta_integral(spec, t);
  const double alpha = std::exp(-0.5 * b);
  // rho^2 = 1 - exp(-B); expm1 keeps accuracy near t = 0.
  const double rho2 = -std::expm1(-b);
  return {alpha, std::sqrt(std::max(rho2, 0.0))};
}

Vec perturb(const DiffusionSpec& spec, const Vec& x, double t, const Vec& z) {
  require(x.size() == spec.dim && z.size() == spec.dim, "perturb: dimension mismatch");
  const auto [alpha, rho] = kernel_params(spec, t);
  return alpha * x + rho * z;
}

namespace {
// Unnormalized CDF of g^2/rho^2 from t_eps to t. Closed form: with
// rho^2 = 1 - exp(-B), beta/rho^2 = beta + d/dt log rho^2, so the integral
// is B(t) - B(t_eps) + log(rho^2(t) / rho^2(t_eps)).
double proposal_mass(const DiffusionSpec& spec, double t) {
  const double b = beta_integral(spec, t);
  const double b0 = beta_integral(spec, spec.t_eps);
  const double log_rho2_t = std::log1p(-std::exp(-b));
  const double log_rho2_0 = std::log1p(-std::exp(-b0));
  return (b - b0) + (log_rho2_t - log_rho2_0);
}
}  // namespace

TimeProposal::TimeProposal(const DiffusionSpec& spec, int grid_points) : spec_(spec) {
  spec.validate();
  require(grid_points >= 2, "time proposal: degenerate grid");
  z_ = proposal_mass(spec, spec.horizon);
  if (!std::isfinite(z_) || z_ <= 0.0)
    throw ValidationError("time proposal: normalizer is not finite and positive");

  // Log-spaced grid resolves the near-1/t density spike at t_eps.
  t_.resize(grid_points);
  cdf_.resize(grid_points);
  const double lr = std::log(spec.horizon / spec.t_eps) / (grid_points - 1);
  for (int i = 0; i < grid_points; ++i) {
    t_[i] = spec.t_eps * std::exp(lr * i);
    cdf_[i] = proposal_mass(spec, t_[i]) / z_;
  }
  t_.front() = spec.t_eps;
  t_.back() = spec.horizon;
  cdf_.front() = 0.0;
  cdf_.back() = 1.0;
  for (std::size_t i = 1; i < cdf_.size(); ++i) {
    if (!(cdf_[i] >= cdf_[i - 1]))
      throw ValidationError("time proposal: CDF not monotone");
  }
}

double TimeProposal::density(double t) const {
  const auto [alpha, rho] = kernel_params(spec_, t);
  (void)alpha;
  return beta(spec_, t) / (rho * rho * z_);
}

std::pair<double, double> TimeProposal::sample(RngStream& rng) const {
  const double u = rng.uniform();
  // First segment with cdf >= u.
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
  if (hi == 0) hi = 1;
  if (hi >= cdf_.size()) hi = cdf_.size() - 1;
  const std::size_t lo = hi - 1;
  const double span = cdf_[hi] - cdf_[lo];
  const double frac = span > 0.0 ? (u - cdf_[lo]) / span : 0.0;
  const double t = t_[lo] + frac * (t_[hi] - t_[lo]);
  const auto [alpha, rho] = kernel_params(spec_, t);
  (void)alpha;
  return {t, z_ * rho * rho};
}

}  // namespace spvi
