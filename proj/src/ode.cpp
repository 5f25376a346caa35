#include "spvi/ode.hpp"

#include <algorithm>
#include <cmath>

namespace spvi {

Vec OdeSystem::rhs_vjp(const Vec&, double, const Vec&) const {
  throw NumericalError("ode: rhs_vjp not provided by this system");
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b*   (5th-order minus embedded 4th-order weights, k7 = F(y_next))
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Stages {
  Vec k1, k2, k3, k4, k5, k6;
  Vec u2, u3, u4, u5, u6;
  Vec ynext;
};

void dopri5_stages(const OdeSystem& sys, const Vec& y, double t, double h, Stages& s,
                   OdeStats* stats) {
  s.k1 = sys.rhs(y, t);
  s.u2 = y + h * (a21 * s.k1);
  s.k2 = sys.rhs(s.u2, t + c2 * h);
  s.u3 = y + h * (a31 * s.k1 + a32 * s.k2);
  s.k3 = sys.rhs(s.u3, t + c3 * h);
  s.u4 = y + h * (a41 * s.k1 + a42 * s.k2 + a43 * s.k3);
  s.k4 = sys.rhs(s.u4, t + c4 * h);
  s.u5 = y + h * (a51 * s.k1 + a52 * s.k2 + a53 * s.k3 + a54 * s.k4);
  s.k5 = sys.rhs(s.u5, t + c5 * h);
  s.u6 = y + h * (a61 * s.k1 + a62 * s.k2 + a63 * s.k3 + a64 * s.k4 + a65 * s.k5);
  s.k6 = sys.rhs(s.u6, t + h);
  s.ynext = y + h * (b1 * s.k1 + b3 * s.k3 + b4 * s.k4 + b5 * s.k5 + b6 * s.k6);
  if (stats) stats->rhs_evals += 6;
}

Vec rk4_step(const OdeSystem& sys, const Vec& y, double t, double h, OdeStats* stats) {
  const Vec k1 = sys.rhs(y, t);
  const Vec k2 = sys.rhs(y + 0.5 * h * k1, t + 0.5 * h);
  const Vec k3 = sys.rhs(y + 0.5 * h * k2, t + 0.5 * h);
  const Vec k4 = sys.rhs(y + h * k3, t + h);
  if (stats) stats->rhs_evals += 4;
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Vec integrate(const OdeSystem& sys, Vec y0, double t0, double t1, const OdeOptions& opt,
              OdeTape* tape, OdeStats* stats) {
  require(t1 > t0, "ode: need t1 > t0");
  if (tape) {
    tape->steps.clear();
    tape->fixed = opt.fixed_steps > 0;
  }

  if (opt.fixed_steps > 0) {
    const double h = (t1 - t0) / opt.fixed_steps;
    Vec y = std::move(y0);
    for (int i = 0; i < opt.fixed_steps; ++i) {
      const double t = t0 + i * h;
      if (tape) tape->steps.push_back({t, h, y});
      y = rk4_step(sys, y, t, h, stats);
      if (!y.allFinite()) throw NumericalError("ode: non-finite state during RK4");
    }
    if (stats) stats->accepted += opt.fixed_steps;
    return y;
  }

  Vec y = std::move(y0);
  double t = t0;
  double h = (t1 - t0) / 100.0;
  Stages s;
  int steps = 0;
  while (t < t1) {
    if (++steps > opt.max_steps)
      throw NumericalError("ode: step budget exhausted");
    h = std::min(h, t1 - t);
    dopri5_stages(sys, y, t, h, s, stats);
    const Vec errv = h * (e1 * s.k1 + e3 * s.k3 + e4 * s.k4 + e5 * s.k5 + e6 * s.k6 +
                          e7 * sys.rhs(s.ynext, t + h));
    if (stats) stats->rhs_evals += 1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(s.ynext[i]));
      const double r = errv[i] / sc;
      acc += r * r;
    }
    const double errnorm = std::sqrt(acc / static_cast<double>(y.size()));
    if (!std::isfinite(errnorm)) throw NumericalError("ode: non-finite error estimate");
    if (errnorm <= 1.0) {
      if (tape) tape->steps.push_back({t, h, y});
      t += h;
      y = s.ynext;
      if (stats) stats->accepted += 1;
    } else if (stats) {
      stats->rejected += 1;
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(errnorm, 1e-12), -0.2), 0.2, 5.0);
    h *= factor;
    if (h < 1e-14 * (t1 - t0)) throw NumericalError("ode: step size underflow");
  }
  return y;
}

namespace {

Vec dopri5_backward_step(const OdeSystem& sys, const OdeTape::Step& st, const Vec& ybar_next) {
  Stages s;
  dopri5_stages(sys, st.y, st.t, st.h, s, nullptr);
  const double h = st.h;

  Vec k1b = h * b1 * ybar_next;
  Vec k2b = Vec::Zero(st.y.size());
  Vec k3b = h * b3 * ybar_next;
  Vec k4b = h * b4 * ybar_next;
  Vec k5b = h * b5 * ybar_next;
  Vec k6b = h * b6 * ybar_next;
  Vec ybar = ybar_next;

  // Stage 6
  Vec u = sys.rhs_vjp(s.u6, st.t + st.h, k6b);
  ybar += u;
  k1b += h * a61 * u; k2b += h * a62 * u; k3b += h * a63 * u;
  k4b += h * a64 * u; k5b += h * a65 * u;
  // Stage 5
  u = sys.rhs_vjp(s.u5, st.t + c5 * h, k5b);
  ybar += u;
  k1b += h * a51 * u; k2b += h * a52 * u; k3b += h * a53 * u; k4b += h * a54 * u;
  // Stage 4
  u = sys.rhs_vjp(s.u4, st.t + c4 * h, k4b);
  ybar += u;
  k1b += h * a41 * u; k2b += h * a42 * u; k3b += h * a43 * u;
  // Stage 3
  u = sys.rhs_vjp(s.u3, st.t + c3 * h, k3b);
  ybar += u;
  k1b += h * a31 * u; k2b += h * a32 * u;
  // Stage 2
  u = sys.rhs_vjp(s.u2, st.t + c2 * h, k2b);
  ybar += u;
  k1b += h * a21 * u;
  // Stage 1
  ybar += sys.rhs_vjp(st.y, st.t, k1b);
  return ybar;
}

Vec rk4_backward_step(const OdeSystem& sys, const OdeTape::Step& st, const Vec& ybar_next) {
  const double h = st.h;
  const Vec k1 = sys.rhs(st.y, st.t);
  const Vec u2 = st.y + 0.5 * h * k1;
  const Vec k2 = sys.rhs(u2, st.t + 0.5 * h);
  const Vec u3 = st.y + 0.5 * h * k2;
  const Vec k3 = sys.rhs(u3, st.t + 0.5 * h);
  const Vec u4 = st.y + h * k3;

  Vec k1b = (h / 6.0) * ybar_next;
  Vec k2b = (h / 3.0) * ybar_next;
  Vec k3b = (h / 3.0) * ybar_next;
  Vec k4b = (h / 6.0) * ybar_next;
  Vec ybar = ybar_next;

  Vec u = sys.rhs_vjp(u4, st.t + h, k4b);
  ybar += u;
  k3b += h * u;
  u = sys.rhs_vjp(u3, st.t + 0.5 * h, k3b);
  ybar += u;
  k2b += 0.5 * h * u;
  u = sys.rhs_vjp(u2, st.t + 0.5 * h, k2b);
  ybar += u;
  k1b += 0.5 * h * u;
  ybar += sys.rhs_vjp(st.y, st.t, k1b);
  return ybar;
}

}  // namespace

Vec integrate_backward(const OdeSystem& sys, const OdeTape& tape, Vec ybar) {
  for (auto it = tape.steps.rbegin(); it != tape.steps.rend(); ++it)
    ybar = tape.fixed ? rk4_backward_step(sys, *it, ybar)
                      : dopri5_backward_step(sys, *it, ybar);
  return ybar;
}

}  // namespace spvi
