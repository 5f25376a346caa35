#include "spvi/variational.hpp"

#include <cmath>

#include "spvi/score.hpp"

namespace spvi {

// ---- DiagGaussian ----

DiagGaussian::DiagGaussian(int dim, double mean_init, double sigma_init)
    : d_(dim), mu_(Vec::Constant(dim, mean_init)), sigma_raw_(Vec::Constant(dim, sigma_init)) {
  require(dim >= 1, "diag gaussian: dim must be >= 1");
}

Vec DiagGaussian::params() const {
  Vec p(2 * d_);
  p << mu_, sigma_raw_;
  return p;
}

void DiagGaussian::set_params(const Vec& p) {
  require(p.size() == 2 * d_, "diag gaussian: bad parameter length");
  mu_ = p.head(d_);
  sigma_raw_ = p.tail(d_);
}

namespace {
struct DiagTape : VariationalFamily::Tape {
  Vec eps;
};
}  // namespace

Vec DiagGaussian::sample(RngStream& rng, double* logq,
                         std::unique_ptr<Tape>* tape) const {
  const Vec eps = rng.normal_vec(d_);
  const Vec x = mu_ + sigma_raw_.cwiseAbs().cwiseProduct(eps);
  if (logq) {
    double acc = -0.5 * d_ * std::log(2.0 * kPi) - 0.5 * eps.squaredNorm();
    for (int i = 0; i < d_; ++i) acc -= std::log(std::abs(sigma_raw_[i]));
    *logq = acc;
  }
  if (tape) {
    auto t = std::make_unique<DiagTape>();
    t->eps = eps;
    *tape = std::move(t);
  }
  return x;
}

void DiagGaussian::backward(const Tape& tape, const Vec& xbar, double logq_bar,
                            Vec* param_grad) const {
  const auto& t = static_cast<const DiagTape&>(tape);
  require(param_grad->size() == 2 * d_, "diag gaussian: bad gradient buffer");
  param_grad->head(d_) += xbar;
  for (int i = 0; i < d_; ++i) {
    const double sgn = sigma_raw_[i] >= 0.0 ? 1.0 : -1.0;
    (*param_grad)[d_ + i] += xbar[i] * t.eps[i] * sgn - logq_bar / sigma_raw_[i];
  }
}

double DiagGaussian::log_density(const Vec& x) const {
  require(x.size() == d_, "diag gaussian: dim mismatch");
  double acc = -0.5 * d_ * std::log(2.0 * kPi);
  for (int i = 0; i < d_; ++i) {
    const double s = std::abs(sigma_raw_[i]);
    require(s > 0.0, "diag gaussian: zero standard deviation");
    const double z = (x[i] - mu_[i]) / s;
    acc -= std::log(s) + 0.5 * z * z;
  }
  return acc;
}

// ---- RealNVP ----

RealNvp::RealNvp(int dim, int n_layers, int hidden_width) : d_(dim), width_(hidden_width) {
  require(dim >= 1 && n_layers >= 1 && hidden_width >= 1, "realnvp: bad architecture");
  RngStream init(0x5eed);  // fixed initialization stream; training overwrites
  layers_.resize(static_cast<std::size_t>(n_layers));
  for (int k = 0; k < n_layers; ++k) {
    auto& c = layers_[static_cast<std::size_t>(k)];
    c.mask.resize(d_);
    for (int i = 0; i < d_; ++i) c.mask[i] = ((i + k) % 2 == 0) ? 1.0 : 0.0;
    auto gauss = [&](Eigen::Index r, Eigen::Index cc, double scale) {
      Mat m(r, cc);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < cc; ++j) m(i, j) = scale * init.normal();
      return m;
    };
    c.w1 = gauss(width_, d_, 1.0 / std::sqrt(static_cast<double>(d_)));
    c.w2 = gauss(width_, width_, 1.0 / std::sqrt(static_cast<double>(width_)));
    c.w3 = Mat::Zero(2 * d_, width_);  // identity coupling at init
    c.b1 = Vec::Zero(width_);
    c.b2 = Vec::Zero(width_);
    c.b3 = Vec::Zero(2 * d_);
    c.run_mean = Vec::Zero(d_);
    c.run_var = Vec::Ones(d_);
  }
}

int RealNvp::param_count() const {
  const int per = static_cast<int>(width_ * d_ + width_ + width_ * width_ + width_ +
                                   2 * d_ * width_ + 2 * d_);
  return per * n_layers();
}

Vec RealNvp::params() const {
  Vec p(param_count());
  Eigen::Index at = 0;
  auto put = [&](const Mat& m) {
    p.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
    at += m.size();
  };
  for (const auto& c : layers_) {
    put(c.w1);
    put(c.b1);
    put(c.w2);
    put(c.b2);
    put(c.w3);
    put(c.b3);
  }
  return p;
}

void RealNvp::set_params(const Vec& p) {
  require(p.size() == param_count(), "realnvp: bad parameter length");
  Eigen::Index at = 0;
  auto take = [&](Mat& m) {
    Eigen::Map<Vec>(m.data(), m.size()) = p.segment(at, m.size());
    at += m.size();
  };
  auto take_v = [&](Vec& v) {
    v = p.segment(at, v.size());
    at += v.size();
  };
  for (auto& c : layers_) {
    take(c.w1);
    take_v(c.b1);
    take(c.w2);
    take_v(c.b2);
    take(c.w3);
    take_v(c.b3);
  }
}

void RealNvp::mlp_forward(const Coupling& c, const Vec& z0, Vec* z1, Vec* z2, Vec* s,
                          Vec* t) const {
  *z1 = (c.w1 * z0 + c.b1).array().tanh();
  *z2 = (c.w2 * (*z1) + c.b2).array().tanh();
  const Vec out = c.w3 * (*z2) + c.b3;
  *s = scale_cap_ * out.head(d_).array().tanh();
  *t = out.tail(d_);
}

struct RealNvp::FlowTape : VariationalFamily::Tape {
  Vec eps;
  // per layer: coupling input, hidden activations, bounded scale, norm input
  std::vector<Vec> h_in, z1, z2, s, norm_in;
};

Vec RealNvp::forward_from_base(const Vec& eps, double* logdet) const {
  Vec h = eps;
  double ld = 0.0;
  Vec z1, z2, s, t;
  for (const auto& c : layers_) {
    mlp_forward(c, h.cwiseProduct(c.mask), &z1, &z2, &s, &t);
    for (int i = 0; i < d_; ++i) {
      if (c.mask[i] != 0.0) continue;
      h[i] = h[i] * std::exp(s[i]) + t[i];
      ld += s[i];
    }
    for (int i = 0; i < d_; ++i) {
      const double scale = 1.0 / std::sqrt(c.run_var[i] + norm_eps_);
      h[i] = (h[i] - c.run_mean[i]) * scale;
      ld += std::log(scale);
    }
  }
  if (logdet) *logdet = ld;
  return h;
}

Vec RealNvp::inverse_to_base(const Vec& x, double* logdet) const {
  Vec h = x;
  double ld = 0.0;
  Vec z1, z2, s, t;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const auto& c = *it;
    for (int i = 0; i < d_; ++i) {
      const double var = c.run_var[i] + norm_eps_;
      require(var > 0.0, "realnvp: non-invertible normalization state");
      const double scale = 1.0 / std::sqrt(var);
      h[i] = h[i] / scale + c.run_mean[i];
      ld += std::log(scale);
    }
    mlp_forward(c, h.cwiseProduct(c.mask), &z1, &z2, &s, &t);
    for (int i = 0; i < d_; ++i) {
      if (c.mask[i] != 0.0) continue;
      h[i] = (h[i] - t[i]) * std::exp(-s[i]);
      ld += s[i];
    }
  }
  if (logdet) *logdet = ld;
  return h;
}

Vec RealNvp::sample(RngStream& rng, double* logq, std::unique_ptr<Tape>* tape) const {
  const Vec eps = rng.normal_vec(d_);
  Vec h = eps;
  double ld = 0.0;
  auto ft = tape ? std::make_unique<FlowTape>() : nullptr;
  if (ft) {
    ft->eps = eps;
    const auto n = layers_.size();
    ft->h_in.reserve(n);
    ft->z1.reserve(n);
    ft->z2.reserve(n);
    ft->s.reserve(n);
    ft->norm_in.reserve(n);
  }
  Vec z1, z2, s, t;
  for (const auto& c : layers_) {
    if (ft) ft->h_in.push_back(h);
    mlp_forward(c, h.cwiseProduct(c.mask), &z1, &z2, &s, &t);
    for (int i = 0; i < d_; ++i) {
      if (c.mask[i] != 0.0) continue;
      h[i] = h[i] * std::exp(s[i]) + t[i];
      ld += s[i];
    }
    if (ft) {
      ft->z1.push_back(z1);
      ft->z2.push_back(z2);
      ft->s.push_back(s);
      ft->norm_in.push_back(h);
    }
    for (int i = 0; i < d_; ++i) {
      const double scale = 1.0 / std::sqrt(c.run_var[i] + norm_eps_);
      h[i] = (h[i] - c.run_mean[i]) * scale;
      ld += std::log(scale);
    }
  }
  if (logq) *logq = standard_normal_logpdf(eps) - ld;
  if (tape) *tape = std::move(ft);
  return h;
}

void RealNvp::backward(const Tape& tape, const Vec& xbar, double logq_bar,
                       Vec* param_grad) const {
  const auto& ft = static_cast<const FlowTape&>(tape);
  require(param_grad->size() == param_count(), "realnvp: bad gradient buffer");
  // log q = log N(eps) - sum_k ld_k, so each ld gets coefficient -logq_bar.
  const double ldbar = -logq_bar;

  Vec hbar = xbar;
  const int per_layer = param_count() / n_layers();
  for (int k = n_layers() - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& c = layers_[ku];
    // normalization layer: o = (h - mean) * scale
    for (int i = 0; i < d_; ++i)
      hbar[i] *= 1.0 / std::sqrt(c.run_var[i] + norm_eps_);

    // coupling: o_u = h_u e^s + t with (s, t) from the masked input
    const Vec& h_in = ft.h_in[ku];
    const Vec& s = ft.s[ku];
    Vec sbar = Vec::Zero(d_), tbar = Vec::Zero(d_);
    Vec hbar_next = hbar;
    for (int i = 0; i < d_; ++i) {
      if (c.mask[i] != 0.0) continue;
      const double es = std::exp(s[i]);
      sbar[i] = hbar[i] * h_in[i] * es + ldbar;
      tbar[i] = hbar[i];
      hbar_next[i] = hbar[i] * es;
    }
    // through the bounded scale: s = cap * tanh(s_raw)
    Vec out_bar(2 * d_);
    for (int i = 0; i < d_; ++i) {
      const double th = s[i] / scale_cap_;
      out_bar[i] = sbar[i] * scale_cap_ * (1.0 - th * th);
      out_bar[d_ + i] = tbar[i];
    }
    // MLP backward
    const Vec& z1 = ft.z1[ku];
    const Vec& z2 = ft.z2[ku];
    const Vec z0 = h_in.cwiseProduct(c.mask);
    const Vec z2bar = c.w3.transpose() * out_bar;
    const Vec a2bar = z2bar.cwiseProduct((1.0 - z2.array().square()).matrix());
    const Vec z1bar = c.w2.transpose() * a2bar;
    const Vec a1bar = z1bar.cwiseProduct((1.0 - z1.array().square()).matrix());
    const Vec z0bar = c.w1.transpose() * a1bar;

    auto seg = param_grad->segment(static_cast<Eigen::Index>(k) * per_layer, per_layer);
    Eigen::Index at = 0;
    auto add_mat = [&](const Mat& g) {
      seg.segment(at, g.size()) += Eigen::Map<const Vec>(g.data(), g.size());
      at += g.size();
    };
    auto add_vec = [&](const Vec& g) {
      seg.segment(at, g.size()) += g;
      at += g.size();
    };
    add_mat(a1bar * z0.transpose());
    add_vec(a1bar);
    add_mat(a2bar * z1.transpose());
    add_vec(a2bar);
    add_mat(out_bar * z2.transpose());
    add_vec(out_bar);

    hbar = hbar_next + z0bar.cwiseProduct(c.mask);
  }
}

double RealNvp::log_density(const Vec& x) const {
  require(x.size() == d_, "realnvp: dim mismatch");
  double ld = 0.0;
  const Vec eps = inverse_to_base(x, &ld);
  return standard_normal_logpdf(eps) - ld;
}

Vec RealNvp::mean_representative(std::uint64_t snapshot_seed) const {
  RngStream rng(snapshot_seed);
  Vec acc = Vec::Zero(d_);
  const int n = 1024;
  for (int i = 0; i < n; ++i) acc += sample(rng, nullptr, nullptr);
  return acc / n;
}

void RealNvp::update_stats(const std::vector<const Tape*>& tapes) {
  if (tapes.empty()) return;
  const double n = static_cast<double>(tapes.size());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Vec mean = Vec::Zero(d_), var = Vec::Zero(d_);
    for (const Tape* t : tapes) {
      const auto& ft = static_cast<const FlowTape&>(*t);
      mean += ft.norm_in[k];
    }
    mean /= n;
    for (const Tape* t : tapes) {
      const auto& ft = static_cast<const FlowTape&>(*t);
      var += (ft.norm_in[k] - mean).cwiseAbs2();
    }
    var /= std::max(n - 1.0, 1.0);
    auto& c = layers_[k];
    c.run_mean = (1.0 - momentum_) * c.run_mean + momentum_ * mean;
    c.run_var = (1.0 - momentum_) * c.run_var + momentum_ * var;
  }
}

Vec RealNvp::extra_state() const {
  Vec s(2 * d_ * n_layers());
  Eigen::Index at = 0;
  for (const auto& c : layers_) {
    s.segment(at, d_) = c.run_mean;
    at += d_;
    s.segment(at, d_) = c.run_var;
    at += d_;
  }
  return s;
}

void RealNvp::set_extra_state(const Vec& s) {
  require(s.size() == 2 * d_ * n_layers(), "realnvp: bad extra state length");
  Eigen::Index at = 0;
  for (auto& c : layers_) {
    c.run_mean = s.segment(at, d_);
    at += d_;
    c.run_var = s.segment(at, d_);
    at += d_;
  }
}

std::unique_ptr<VariationalFamily> init_family(const std::string& kind, int dim,
                                               int n_layers, int hidden_width) {
  if (kind == "diag-gaussian") return std::make_unique<DiagGaussian>(dim);
  if (kind == "realnvp") {
    const int width =
        hidden_width > 0 ? hidden_width : static_cast<int>((dim + 7) / 8);
    return std::make_unique<RealNvp>(dim, n_layers, std::max(width, 1));
  }
  throw ValidationError("unknown variational family: " + kind);
}

}  // namespace spvi
