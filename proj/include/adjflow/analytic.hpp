// Closed-form scalar systems; they exercise every engine against analytic
// discrete solutions (temporal order studies, stability-function checks,
// adjoint chain identities).
#pragma once

#include <cmath>

#include "adjflow/system.hpp"
#include "adjflow/tableau.hpp"

namespace adjflow {

/// u' = -mu_0 u with u(0) = u0. Mass = 1. Gradients are fully closed-form.
class ScalarDecaySystem final : public SemiDiscreteSystem {
 public:
  explicit ScalarDecaySystem(double u0 = 1.0, int n_params = 1, bool ic_from_mu1 = false)
      : u0_(u0), np_(n_params), ic_from_mu1_(ic_from_mu1) {
    mass_ = Matrix::identity(1);
  }

  int dim() const override { return 1; }
  int num_params() const override { return np_; }
  const Matrix& mass() const override { return mass_; }

  Vector residual(const Vector& u, const Vector& mu, double) const override {
    return {-mu[0] * u[0]};
  }
  Matrix jac_state(const Vector&, const Vector& mu, double) const override {
    Matrix j(1, 1);
    j(0, 0) = -mu[0];
    return j;
  }
  Matrix jac_param(const Vector& u, const Vector&, double) const override {
    Matrix j(1, np_);
    j(0, 0) = -u[0];
    return j;
  }

  InitialCondition initial(const Vector& mu) const override {
    InitialCondition ic;
    ic.kind = InitialCondition::Kind::analytic;
    ic.value = {ic_from_mu1_ ? mu[1] : u0_};
    ic.du_dmu = Matrix(1, np_);
    if (ic_from_mu1_ && np_ > 1) ic.du_dmu(0, 1) = 1.0;
    return ic;
  }

 private:
  double u0_;
  int np_;
  bool ic_from_mu1_;
  Matrix mass_;
};

/// Stability function R(z) = 1 + z b^T (I - z A)^{-1} 1 of a DIRK tableau:
/// the exact discrete solution of u' = lambda u advances by R(lambda dt) per
/// step, which pins the integrator against closed-form values.
inline double stability_function(const ButcherTableau& tab, double z) {
  const int s = tab.stages;
  Matrix m = Matrix::identity(s);
  m.add_scaled(-z, tab.a);
  Vector ones(s, 1.0);
  const Vector w = LuSolver(std::move(m)).solve(std::move(ones));
  double r = 1.0;
  for (int i = 0; i < s; ++i) r += z * tab.b[i] * w[i];
  return r;
}

}  // namespace adjflow
