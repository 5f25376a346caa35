#include "spvi/score.hpp"

#include <cmath>

namespace spvi {

double standard_normal_logpdf(const Vec& x) {
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * kPi) + x.squaredNorm());
}

Vec ScoreField::jvp(const Vec& x, double t, const Vec& v) const {
  const double vn = v.norm();
  if (vn == 0.0) return Vec::Zero(x.size());
  const double h = 1e-6 * (1.0 + x.norm()) / vn;
  return (eval(x + h * v, t) - eval(x - h * v, t)) / (2.0 * h);
}

void GaussianPrior::validate() const {
  require(mean.size() > 0, "gaussian prior: empty mean");
  require(cov.rows() == mean.size() && cov.cols() == mean.size(),
          "gaussian prior: covariance shape mismatch");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-10,
          "gaussian prior: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  require(es.eigenvalues().minCoeff() > 0.0, "gaussian prior: covariance not positive definite");
}

void GmmPrior::validate() const {
  require(components() >= 1, "gmm prior: need at least one component");
  require(std::abs(weights.sum() - 1.0) < 1e-12, "gmm prior: weights must sum to 1");
  require(weights.minCoeff() >= 0.0, "gmm prior: negative weight");
  require(static_cast<int>(means.size()) == components() &&
              static_cast<int>(covs.size()) == components(),
          "gmm prior: component count mismatch");
  for (int k = 0; k < components(); ++k) {
    GaussianPrior g{means[static_cast<std::size_t>(k)], covs[static_cast<std::size_t>(k)]};
    g.validate();
  }
}

GaussianScore::GaussianScore(GaussianPrior prior, DiffusionSpec spec)
    : prior_(std::move(prior)), spec_(spec) {
  spec_.validate();
  prior_.validate();
  require(prior_.mean.size() == spec_.dim, "gaussian score: dim mismatch");
  Eigen::SelfAdjointEigenSolver<Mat> es(prior_.cov);
  eigvecs_ = es.eigenvectors();
  eigvals_ = es.eigenvalues();
}

Vec GaussianScore::apply_precision(double t, const Vec& v) const {
  const auto [alpha, rho] = kernel_params(spec_, t);
  const double a2 = alpha * alpha, r2 = rho * rho;
  const Vec proj = eigvecs_.transpose() * v;
  const Vec scaled = proj.array() / (a2 * eigvals_.array() + r2);
  return eigvecs_ * scaled;
}

Vec GaussianScore::eval(const Vec& x, double t) const {
  const auto [alpha, rho] = kernel_params(spec_, t);
  (void)rho;
  return -apply_precision(t, x - alpha * prior_.mean);
}

Vec GaussianScore::jvp(const Vec&, double t, const Vec& v) const {
  return -apply_precision(t, v);
}

Vec GaussianScore::vjp(const Vec& x, double t, const Vec& w) const {
  return jvp(x, t, w);  // symmetric Jacobian
}

std::optional<double> GaussianScore::divergence(const Vec&, double t) const {
  const auto [alpha, rho] = kernel_params(spec_, t);
  const double a2 = alpha * alpha, r2 = rho * rho;
  return -(1.0 / (a2 * eigvals_.array() + r2)).sum();
}

std::optional<Vec> GaussianScore::div_pair_grad(const Vec& x, double, const Vec&) const {
  return Vec::Zero(x.size());
}

std::optional<Vec> GaussianScore::div_grad(const Vec& x, double) const {
  return Vec::Zero(x.size());
}

double GaussianScore::diffused_logpdf(const Vec& x, double t) const {
  const auto [alpha, rho] = kernel_params(spec_, t);
  const double a2 = alpha * alpha, r2 = rho * rho;
  const Vec d = x - alpha * prior_.mean;
  const Vec proj = eigvecs_.transpose() * d;
  const double quad = (proj.array().square() / (a2 * eigvals_.array() + r2)).sum();
  const double logdet = (a2 * eigvals_.array() + r2).log().sum();
  return -0.5 * (quad + logdet + spec_.dim * std::log(2.0 * kPi));
}

struct GmmScore::Workspace {
  Vec log_norm;          // log w_k + log N_k(x)
  Vec resp;              // responsibilities r_k
  std::vector<Vec> sk;   // component scores
  Vec score;             // mixture score
  double logpdf = 0.0;
  double alpha = 0.0, rho = 0.0;
};

GmmScore::GmmScore(GmmPrior prior, DiffusionSpec spec)
    : prior_(std::move(prior)), spec_(spec) {
  spec_.validate();
  prior_.validate();
  const int K = prior_.components();
  eigvecs_.resize(static_cast<std::size_t>(K));
  eigvals_.resize(static_cast<std::size_t>(K));
  log_weights_.resize(K);
  for (int k = 0; k < K; ++k) {
    require(prior_.means[static_cast<std::size_t>(k)].size() == spec_.dim,
            "gmm score: dim mismatch");
    Eigen::SelfAdjointEigenSolver<Mat> es(prior_.covs[static_cast<std::size_t>(k)]);
    eigvecs_[static_cast<std::size_t>(k)] = es.eigenvectors();
    eigvals_[static_cast<std::size_t>(k)] = es.eigenvalues();
    log_weights_[k] = std::log(prior_.weights[k]);
  }
}

void GmmScore::component_stats(const Vec& x, double t, Workspace& ws) const {
  const int K = prior_.components();
  const auto [alpha, rho] = kernel_params(spec_, t);
  ws.alpha = alpha;
  ws.rho = rho;
  const double a2 = alpha * alpha, r2 = rho * rho;
  ws.log_norm.resize(K);
  ws.sk.assign(static_cast<std::size_t>(K), Vec());
  for (int k = 0; k < K; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vec d = x - alpha * prior_.means[ku];
    const Vec proj = eigvecs_[ku].transpose() * d;
    const Eigen::ArrayXd lam = a2 * eigvals_[ku].array() + r2;
    const double quad = (proj.array().square() / lam).sum();
    const double logdet = lam.log().sum();
    ws.log_norm[k] =
        log_weights_[k] - 0.5 * (quad + logdet + spec_.dim * std::log(2.0 * kPi));
    ws.sk[ku] = -(eigvecs_[ku] * (proj.array() / lam).matrix().eval());
  }
  const double m = ws.log_norm.maxCoeff();
  const double lse = m + std::log((ws.log_norm.array() - m).exp().sum());
  ws.logpdf = lse;
  ws.resp = (ws.log_norm.array() - lse).exp();
  ws.score = Vec::Zero(spec_.dim);
  for (int k = 0; k < K; ++k)
    ws.score += ws.resp[k] * ws.sk[static_cast<std::size_t>(k)];
}

Vec GmmScore::eval(const Vec& x, double t) const {
  Workspace ws;
  component_stats(x, t, ws);
  return ws.score;
}

double GmmScore::diffused_logpdf(const Vec& x, double t) const {
  Workspace ws;
  component_stats(x, t, ws);
  return ws.logpdf;
}

Vec GmmScore::jvp(const Vec& x, double t, const Vec& v) const {
  // H v with H = sum_k r_k (J_k + s_k s_k^T) - s s^T, J_k = -P_k.
  Workspace ws;
  component_stats(x, t, ws);
  const double a2 = ws.alpha * ws.alpha, r2 = ws.rho * ws.rho;
  Vec out = -(ws.score.dot(v)) * ws.score;
  for (int k = 0; k < prior_.components(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vec proj = eigvecs_[ku].transpose() * v;
    const Vec pkv = eigvecs_[ku] * (proj.array() / (a2 * eigvals_[ku].array() + r2)).matrix();
    out += ws.resp[k] * (-pkv + ws.sk[ku] * ws.sk[ku].dot(v));
  }
  return out;
}

Vec GmmScore::vjp(const Vec& x, double t, const Vec& w) const {
  return jvp(x, t, w);  // Hessian of the log-density is symmetric
}

std::optional<double> GmmScore::divergence(const Vec& x, double t) const {
  Workspace ws;
  component_stats(x, t, ws);
  const double a2 = ws.alpha * ws.alpha, r2 = ws.rho * ws.rho;
  double tr = -ws.score.squaredNorm();
  for (int k = 0; k < prior_.components(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double trk = -(1.0 / (a2 * eigvals_[ku].array() + r2)).sum();
    tr += ws.resp[k] * (trk + ws.sk[ku].squaredNorm());
  }
  return tr;
}

std::optional<Vec> GmmScore::div_pair_grad(const Vec& x, double t, const Vec& v) const {
  // grad_x (v^T H v) = sum_k r_k (s_k - s) [v^T J_k v + (s_k.v)^2]
  //                    + 2 sum_k r_k (s_k.v) J_k v - 2 (s.v) H v
  Workspace ws;
  component_stats(x, t, ws);
  const double a2 = ws.alpha * ws.alpha, r2 = ws.rho * ws.rho;
  Vec out = Vec::Zero(spec_.dim);
  for (int k = 0; k < prior_.components(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Vec proj = eigvecs_[ku].transpose() * v;
    const Vec pkv = eigvecs_[ku] * (proj.array() / (a2 * eigvals_[ku].array() + r2)).matrix();
    const double vjkv = -v.dot(pkv);
    const double skv = ws.sk[ku].dot(v);
    out += ws.resp[k] * ((vjkv + skv * skv) * (ws.sk[ku] - ws.score) + 2.0 * skv * (-pkv));
  }
  out -= 2.0 * ws.score.dot(v) * jvp(x, t, v);
  return out;
}

std::optional<Vec> GmmScore::div_grad(const Vec& x, double t) const {
  // grad_x tr H = sum_k r_k [(s_k - s)(tr J_k + |s_k|^2) + 2 J_k s_k] - 2 H s
  Workspace ws;
  component_stats(x, t, ws);
  const double a2 = ws.alpha * ws.alpha, r2 = ws.rho * ws.rho;
  Vec out = Vec::Zero(spec_.dim);
  for (int k = 0; k < prior_.components(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Eigen::ArrayXd lam = a2 * eigvals_[ku].array() + r2;
    const double trk = -(1.0 / lam).sum();
    const Vec proj = eigvecs_[ku].transpose() * ws.sk[ku];
    const Vec pksk = eigvecs_[ku] * (proj.array() / lam).matrix();
    out += ws.resp[k] *
           ((ws.sk[ku] - ws.score) * (trk + ws.sk[ku].squaredNorm()) + 2.0 * (-pksk));
  }
  out -= 2.0 * jvp(x, t, ws.score);
  return out;
}

}  // namespace spvi
