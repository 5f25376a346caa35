#ifndef SPVI_EVALUATION_HPP
#define SPVI_EVALUATION_HPP

#include <functional>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/rng.hpp"
#include "spvi/score.hpp"

namespace spvi {

struct Gmm2Fit {
  Vec weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  std::vector<double> loglik_trace;  // mean log-likelihood per EM iteration

  double log_density(const Vec& x) const;
};

// Two-component EM with k-means-style initialization, best of 10 restarts.
Gmm2Fit fit_gmm2(const std::vector<Vec>& samples, RngStream& rng);

// (1/N) sum [log qhat(x) - log pstar(x)] over the given samples.
double reverse_kl(const std::vector<Vec>& samples,
                  const std::function<double(const Vec&)>& fitted_logq,
                  const std::function<double(const Vec&)>& true_logp);

// Conjugate posterior for a Gaussian prior, linear operator and iid noise.
GaussianPrior gaussian_posterior(const GaussianPrior& prior, const Mat& A, const Vec& y,
                                 double sigma_y);

// Per-component conjugate update with evidence-reweighted mixture weights.
GmmPrior gmm_posterior(const GmmPrior& prior, const Mat& A, const Vec& y, double sigma_y);

double gaussian_logpdf(const Vec& x, const Vec& mean, const Mat& cov);
double gmm_logpdf(const Vec& x, const GmmPrior& p);

// Model evidence log p(y) of the linear-Gaussian model.
double gaussian_evidence(const GaussianPrior& prior, const Mat& A, const Vec& y,
                         double sigma_y);

// KL(q || p) for diagonal q = N(mu_q, diag(sigma_q^2)) and full-covariance p.
double kl_diag_vs_gaussian(const Vec& mu_q, const Vec& sigma_q, const GaussianPrior& p);

double psnr(const Vec& truth, const Vec& estimate, double data_range);
double ssim(const Vec& truth, const Vec& estimate, int rows, int cols,
            double data_range = 1.0);
double coverage_3sigma(const Vec& truth, const Vec& post_mean, const Vec& post_std);

}  // namespace spvi

#endif
