// Test-only reference implementations: finite differences, quadrature,
// brute-force transforms, sample statistics. These stay independent of the
// library code paths they check.
#ifndef SPVI_TESTS_ORACLES_HPP
#define SPVI_TESTS_ORACLES_HPP

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "spvi/common.hpp"
#include "spvi/rng.hpp"

namespace oracles {

using spvi::Mat;
using spvi::Vec;

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-4) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                       double h = 1e-5) {
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline double fd_divergence(const std::function<Vec(const Vec&)>& f, const Vec& x,
                            double h = 1e-5) {
  return fd_jacobian(f, x, h).trace();
}

// Composite Simpson on a fixed grid after substituting u = log t, which
// removes the 1/t-type spike of the proposal integrand near t_eps.
inline double log_simpson(const std::function<double(double)>& f, double a, double b,
                          int n = 20000) {
  if (n % 2 != 0) ++n;
  const double ua = std::log(a), ub = std::log(b);
  const double h = (ub - ua) / n;
  auto g = [&](double u) {
    const double t = std::exp(u);
    return t * f(t);
  };
  double acc = g(ua) + g(ub);
  for (int i = 1; i < n; ++i) acc += g(ua + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int n = 20000) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

struct MeanSe {
  double mean;
  double se;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v = xs.size() > 1 ? v / (n - 1.0) : 0.0;
  return {m, std::sqrt(v / n)};
}

// Brute-force 2D DFT by direct double summation (row-major image).
inline std::vector<std::complex<double>> brute_dft2(const Vec& img, int rows, int cols) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(rows * cols));
  for (int ky = 0; ky < rows; ++ky) {
    for (int kx = 0; kx < cols; ++kx) {
      std::complex<double> acc(0.0, 0.0);
      for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
          const double ph = -2.0 * spvi::kPi *
                            (static_cast<double>(ky) * y / rows +
                             static_cast<double>(kx) * x / cols);
          acc += img[y * cols + x] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
      }
      out[static_cast<std::size_t>(ky * cols + kx)] = acc;
    }
  }
  return out;
}

// Energy-distance two-sample permutation test; returns the p-value of the
// observed statistic under label shuffling.
inline double energy_test_pvalue(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                                 spvi::RngStream& rng, int n_perm = 200) {
  std::vector<Vec> all;
  all.reserve(xs.size() + ys.size());
  for (const auto& x : xs) all.push_back(x);
  for (const auto& y : ys) all.push_back(y);
  const std::size_t n = xs.size(), m = ys.size(), total = all.size();

  auto stat = [&](const std::vector<std::size_t>& idx) {
    double dxy = 0, dxx = 0, dyy = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        dxy += (all[idx[i]] - all[idx[n + j]]).norm();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        dxx += (all[idx[i]] - all[idx[j]]).norm();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        dyy += (all[idx[n + i]] - all[idx[n + j]]).norm();
    return 2.0 * dxy / (n * m) - 2.0 * dxx / (n * (n - 1.0)) - 2.0 * dyy / (m * (m - 1.0));
  };

  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  const double observed = stat(idx);
  int exceed = 0;
  for (int p = 0; p < n_perm; ++p) {
    for (std::size_t i = total - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    if (stat(idx) >= observed) ++exceed;
  }
  return (exceed + 1.0) / (n_perm + 1.0);
}

}  // namespace oracles

#endif
