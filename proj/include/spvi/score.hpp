#ifndef SPVI_SCORE_HPP
#define SPVI_SCORE_HPP

#include <memory>
#include <optional>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/diffusion.hpp"

namespace spvi {

enum class ScoreKind { gaussian_analytic, gmm_analytic, network };

// A score field s(x, t) = grad_x log p_t(x) together with the Jacobian
// operators the estimators need. J denotes ds/dx.
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual ScoreKind kind() const = 0;
  virtual int dim() const = 0;

  virtual Vec eval(const Vec& x, double t) const = 0;

  // J v. Default falls back to central finite differences.
  virtual Vec jvp(const Vec& x, double t, const Vec& v) const;

  // J^T w. Analytic scores have symmetric J (it is a log-density Hessian).
  virtual Vec vjp(const Vec& x, double t, const Vec& w) const = 0;

  // tr J, when available in closed form.
  virtual std::optional<double> divergence(const Vec&, double) const { return std::nullopt; }

  // grad_x (v^T J v), needed for gradients of the ODE log-density.
  virtual std::optional<Vec> div_pair_grad(const Vec&, double, const Vec&) const {
    return std::nullopt;
  }

  // grad_x (tr J), for the exact-trace gradient path.
  virtual std::optional<Vec> div_grad(const Vec&, double) const { return std::nullopt; }
};

struct GaussianPrior {
  Vec mean;
  Mat cov;

  void validate() const;
};

struct GmmPrior {
  Vec weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;

  int components() const { return static_cast<int>(weights.size()); }
  void validate() const;
};

// Exact score of the diffused Gaussian marginal N(alpha mu, alpha^2 Sigma + rho^2 I).
class GaussianScore : public ScoreField {
 public:
  GaussianScore(GaussianPrior prior, DiffusionSpec spec);

  ScoreKind kind() const override { return ScoreKind::gaussian_analytic; }
  int dim() const override { return spec_.dim; }

  Vec eval(const Vec& x, double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& w) const override;
  std::optional<double> divergence(const Vec& x, double t) const override;
  std::optional<Vec> div_pair_grad(const Vec& x, double t, const Vec& v) const override;
  std::optional<Vec> div_grad(const Vec& x, double t) const override;

  // log N(x; alpha mu, alpha^2 Sigma + rho^2 I)
  double diffused_logpdf(const Vec& x, double t) const;

  const GaussianPrior& prior() const { return prior_; }

 private:
  Vec apply_precision(double t, const Vec& v) const;

  GaussianPrior prior_;
  DiffusionSpec spec_;
  Mat eigvecs_;
  Vec eigvals_;
};

// Exact score of the diffused mixture: responsibility-weighted component
// scores with log-sum-exp stabilization.
class GmmScore : public ScoreField {
 public:
  GmmScore(GmmPrior prior, DiffusionSpec spec);

  ScoreKind kind() const override { return ScoreKind::gmm_analytic; }
  int dim() const override { return spec_.dim; }

  Vec eval(const Vec& x, double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& w) const override;
  std::optional<double> divergence(const Vec& x, double t) const override;
  std::optional<Vec> div_pair_grad(const Vec& x, double t, const Vec& v) const override;
  std::optional<Vec> div_grad(const Vec& x, double t) const override;

  double diffused_logpdf(const Vec& x, double t) const;

  const GmmPrior& prior() const { return prior_; }

 private:
  struct Workspace;
  void component_stats(const Vec& x, double t, Workspace& ws) const;

  GmmPrior prior_;
  DiffusionSpec spec_;
  std::vector<Mat> eigvecs_;
  std::vector<Vec> eigvals_;
  Vec log_weights_;
};

double standard_normal_logpdf(const Vec& x);

}  // namespace spvi

#endif
