// The semi-discrete contract M du/dt = r(u, mu, t) every discretized problem
// implements, with analytic derivatives. A finite-difference verifier guards
// the hand-derived Jacobians: the discrete adjoint is only exact if the
// linearizations are.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "adjflow/linalg.hpp"

namespace adjflow {

struct InitialCondition {
  enum class Kind { analytic, steady };
  Kind kind = Kind::analytic;
  Vector value;  // u_0(mu)

  // analytic: du_0/dmu, N_u x N_mu.
  Matrix du_dmu;

  // steady: u_0 solves R(u_0, mu) = 0; Jacobians evaluated at the solution.
  Matrix steady_jac_state;  // dR/du_0
  Matrix steady_jac_param;  // dR/dmu
};

/// Pure evaluator contract. Implementations must be callable concurrently
/// for distinct (u, mu, t); any caching happens at construction.
class SemiDiscreteSystem {
 public:
  virtual ~SemiDiscreteSystem() = default;

  virtual int dim() const = 0;
  virtual int num_params() const = 0;

  /// Time- and parameter-independent mass matrix.
  virtual const Matrix& mass() const = 0;

  virtual Vector residual(const Vector& u, const Vector& mu, double t) const = 0;
  virtual Matrix jac_state(const Vector& u, const Vector& mu, double t) const = 0;
  virtual Matrix jac_param(const Vector& u, const Vector& mu, double t) const = 0;

  virtual InitialCondition initial(const Vector& mu) const = 0;
};

/// Spatially discretized QoI integrand f_h(u, mu, t) with analytic partials;
/// systems ship factories for their solver-consistent integrands.
class QoiIntegrand {
 public:
  virtual ~QoiIntegrand() = default;
  virtual double value(const Vector& u, const Vector& mu, double t) const = 0;
  virtual Vector jac_state(const Vector& u, const Vector& mu, double t) const = 0;  // length N_u
  virtual Vector jac_param(const Vector& u, const Vector& mu, double t) const = 0;  // length N_mu
};

/// Integrand defined by plain callables; handy for analytic test problems.
class CallbackIntegrand final : public QoiIntegrand {
 public:
  using ValueFn = std::function<double(const Vector&, const Vector&, double)>;
  using GradFn = std::function<Vector(const Vector&, const Vector&, double)>;

  CallbackIntegrand(ValueFn v, GradFn du, GradFn dmu)
      : value_(std::move(v)), jac_state_(std::move(du)), jac_param_(std::move(dmu)) {}

  double value(const Vector& u, const Vector& mu, double t) const override { return value_(u, mu, t); }
  Vector jac_state(const Vector& u, const Vector& mu, double t) const override { return jac_state_(u, mu, t); }
  Vector jac_param(const Vector& u, const Vector& mu, double t) const override { return jac_param_(u, mu, t); }

 private:
  ValueFn value_;
  GradFn jac_state_, jac_param_;
};

struct DerivativeReport {
  double jac_state_error = 0.0;
  double jac_param_error = 0.0;
  std::map<std::string, double> qoi_state_errors;
  std::map<std::string, double> qoi_param_errors;

  double max_error() const {
    double m = std::max(jac_state_error, jac_param_error);
    for (const auto& [k, v] : qoi_state_errors) m = std::max(m, v);
    for (const auto& [k, v] : qoi_param_errors) m = std::max(m, v);
    return m;
  }
};

namespace detail {

// 4th-order central difference of a vector-valued function of one scalar.
template <class F>
Vector central_diff4(F&& f, double x, double h, int out_dim) {
  Vector d(out_dim, 0.0);
  const Vector fp2 = f(x + 2.0 * h);
  const Vector fp1 = f(x + h);
  const Vector fm1 = f(x - h);
  const Vector fm2 = f(x - 2.0 * h);
  for (int i = 0; i < out_dim; ++i)
    d[i] = (-fp2[i] + 8.0 * fp1[i] - 8.0 * fm1[i] + fm2[i]) / (12.0 * h);
  return d;
}

inline double relative_block_error(const Matrix& analytic, const Matrix& fd) {
  const double scale = std::max(analytic.norm_inf_abs(), 1.0);
  Matrix diff = fd;
  diff.add_scaled(-1.0, analytic);
  return diff.norm_inf_abs() / scale;
}

}  // namespace detail

/// Rebuilds a system for a perturbed mu; needed when evaluators carry
/// mu-dependent precomputation (the GCL field cache).
using SystemFactory = std::function<std::shared_ptr<const SemiDiscreteSystem>(const Vector&)>;
using QoiSetFactory =
    std::function<std::map<std::string, std::shared_ptr<const QoiIntegrand>>(const Vector&)>;

/// Compares the analytic Jacobians of `sys` (and optional QoI integrands)
/// against 4th-order central differences at the probe point. Reports the max
/// relative error per block.
inline DerivativeReport verify_derivatives(
    const SemiDiscreteSystem& sys, const Vector& u, const Vector& mu, double t, double step,
    const std::map<std::string, std::shared_ptr<const QoiIntegrand>>& qois = {},
    const SystemFactory& factory = nullptr, const QoiSetFactory& qoi_factory = nullptr) {
  if (!(step > 0.0)) throw std::invalid_argument("verify_derivatives: step must be positive");
  if (u[0] + 2.0 * step == u[0] && step < 1e-200)
    throw std::invalid_argument("verify_derivatives: step underflows the probe state");

  const int n = sys.dim();
  const int np = sys.num_params();
  DerivativeReport rep;

  // d r / d u, column by column.
  {
    const Matrix analytic = sys.jac_state(u, mu, t);
    Matrix fd(n, n);
    for (int j = 0; j < n; ++j) {
      auto f = [&](double xj) {
        Vector up = u;
        up[j] = xj;
        return sys.residual(up, mu, t);
      };
      const Vector col = detail::central_diff4(f, u[j], step, n);
      for (int i = 0; i < n; ++i) fd(i, j) = col[i];
    }
    rep.jac_state_error = detail::relative_block_error(analytic, fd);
  }

  // d r / d mu; rebuild the system per perturbed mu when a factory is given.
  {
    const Matrix analytic = sys.jac_param(u, mu, t);
    Matrix fd(n, np);
    for (int j = 0; j < np; ++j) {
      auto f = [&](double mj) {
        Vector mup = mu;
        mup[j] = mj;
        if (factory) return factory(mup)->residual(u, mup, t);
        return sys.residual(u, mup, t);
      };
      const Vector col = detail::central_diff4(f, mu[j], step, n);
      for (int i = 0; i < n; ++i) fd(i, j) = col[i];
    }
    rep.jac_param_error = detail::relative_block_error(analytic, fd);
  }

  for (const auto& [name, q] : qois) {
    {
      const Vector analytic = q->jac_state(u, mu, t);
      double scale = std::max(norm_inf(analytic), 1.0);
      double err = 0.0;
      for (int j = 0; j < n; ++j) {
        auto f = [&](double xj) {
          Vector up = u;
          up[j] = xj;
          return Vector{q->value(up, mu, t)};
        };
        const double d = detail::central_diff4(f, u[j], step, 1)[0];
        err = std::max(err, std::abs(d - analytic[j]));
      }
      rep.qoi_state_errors[name] = err / scale;
    }
    {
      const Vector analytic = q->jac_param(u, mu, t);
      double scale = std::max(norm_inf(analytic), 1.0);
      double err = 0.0;
      for (int j = 0; j < np; ++j) {
        auto f = [&](double mj) {
          Vector mup = mu;
          mup[j] = mj;
          if (qoi_factory) return Vector{qoi_factory(mup).at(name)->value(u, mup, t)};
          return Vector{q->value(u, mup, t)};
        };
        const double d = detail::central_diff4(f, mu[j], step, 1)[0];
        err = std::max(err, std::abs(d - analytic[j]));
      }
      rep.qoi_param_errors[name] = err / scale;
    }
  }
  return rep;
}

}  // namespace adjflow
