#ifndef SPVI_ODE_HPP
#define SPVI_ODE_HPP

#include <vector>

#include "spvi/common.hpp"

namespace spvi {

struct OdeOptions {
  double rtol = 1e-5;
  double atol = 1e-5;
  int max_steps = 100000;
  int fixed_steps = 0;  // > 0 selects fixed-step classic RK4 (fully smooth in y0)
};

struct OdeStats {
  int accepted = 0;
  int rejected = 0;
  int rhs_evals = 0;
};

// Accepted-step checkpoints. Stage values are recomputed during the backward
// sweep, so memory stays at one state vector per step.
struct OdeTape {
  struct Step {
    double t;
    double h;
    Vec y;
  };
  std::vector<Step> steps;
  bool fixed = false;
};

class OdeSystem {
 public:
  virtual ~OdeSystem() = default;
  virtual Vec rhs(const Vec& y, double t) const = 0;
  // (dF/dy)^T w; required only for integrate_backward.
  virtual Vec rhs_vjp(const Vec& y, double t, const Vec& w) const;
};

// Integrates y' = F(y, t) from t0 to t1 (t1 > t0) with a Dormand-Prince 5(4)
// embedded pair, or classic RK4 when fixed_steps is set.
Vec integrate(const OdeSystem& sys, Vec y0, double t0, double t1,
              const OdeOptions& opt, OdeTape* tape = nullptr, OdeStats* stats = nullptr);

// Discretize-then-differentiate adjoint over the taped steps: propagates
// d(scalar)/d(y at t1) back to d(scalar)/d(y at t0).
Vec integrate_backward(const OdeSystem& sys, const OdeTape& tape, Vec ybar);

}  // namespace spvi

#endif
