// Quantities of interest and their solver-consistent discretization: the
// running functional is advanced with the same DIRK weights as the state,
// F^(n) = F^(n-1) + dt_n sum_i b_i f_h(u_i^(n)), so the functional error
// order matches the solver's. The same object supplies the partials
// dF/du^(n) and dF/dk_i^(n) the adjoint equations need.
#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/system.hpp"
#include "adjflow/tableau.hpp"
#include "adjflow/time_grid.hpp"

namespace adjflow {

enum class QoiWeight { uniform, time_impulse, space_point, space_time_point };

struct QoiSpec {
  std::string name;
  QoiWeight weight = QoiWeight::uniform;
  double t_star = 0.0;  // impulse weights
  double x_star = 0.0;  // spatial point weights (realized as boundary traces)
  std::shared_ptr<const QoiIntegrand> integrand;
};

/// dt-weighted stage accumulation, F_next = F_prev + dt sum_i b_i f_i.
inline double accumulate(const QoiSpec& spec, double f_prev, std::span<const double> stage_values,
                         const ButcherTableau& tab, double dt) {
  if (static_cast<int>(stage_values.size()) != tab.stages)
    throw std::invalid_argument("accumulate: stage value count does not match the tableau");
  if (spec.weight == QoiWeight::time_impulse || spec.weight == QoiWeight::space_time_point)
    return f_prev;  // impulse weights update only at t*
  double sum = 0.0;
  for (int i = 0; i < tab.stages; ++i) sum += tab.b[i] * stage_values[i];
  return f_prev + dt * sum;
}

/// A QoI bound to a (grid, tableau) pair: impulse times are resolved to a
/// step/stage at registration, and both the primal update and the adjoint
/// source terms come from here so they cannot drift apart.
class DiscreteQoi {
 public:
  DiscreteQoi(QoiSpec spec, const TimeGrid& grid, const ButcherTableau& tab)
      : spec_(std::move(spec)) {
    if (!spec_.integrand) throw std::invalid_argument("qoi '" + spec_.name + "' has no integrand");
    if (!is_impulse()) return;
    const double t = spec_.t_star;
    const double tol = 1e-12 * (1.0 + std::abs(t));
    for (int n = 0; n <= grid.steps(); ++n)
      if (std::abs(grid.time(n) - t) <= tol) {
        impulse_step_ = n;
        impulse_stage_ = 0;  // grid state
        return;
      }
    for (int n = 1; n <= grid.steps(); ++n)
      for (int i = 1; i <= tab.stages; ++i)
        if (std::abs(grid.stage_time(n, tab, i) - t) <= tol) {
          impulse_step_ = n;
          impulse_stage_ = i;
          return;
        }
    throw std::invalid_argument("qoi '" + spec_.name +
                                "': t* does not coincide with a grid point or stage time");
  }

  const QoiSpec& spec() const { return spec_; }
  const QoiIntegrand& integrand() const { return *spec_.integrand; }
  bool is_impulse() const {
    return spec_.weight == QoiWeight::time_impulse || spec_.weight == QoiWeight::space_time_point;
  }
  int impulse_step() const { return impulse_step_; }
  int impulse_stage() const { return impulse_stage_; }

  double instantaneous(const Vector& u, const Vector& mu, double t) const {
    return integrand().value(u, mu, t);
  }

  /// F at t_0 (nonzero only for an impulse registered at the initial time).
  double initial_value(const Vector& u0, const Vector& mu, double t0) const {
    if (is_impulse() && impulse_step_ == 0) return integrand().value(u0, mu, t0);
    return 0.0;
  }

  /// Running-functional update once step n's stage states and u^(n) are known.
  double update(double f_prev, int n, std::span<const Vector> stage_states, const Vector& u_n,
                const Vector& mu, const TimeGrid& grid, const ButcherTableau& tab) const {
    if (is_impulse()) {
      if (impulse_step_ != n) return f_prev;
      if (impulse_stage_ == 0) return integrand().value(u_n, mu, grid.time(n));
      return integrand().value(stage_states[impulse_stage_ - 1], mu,
                               grid.stage_time(n, tab, impulse_stage_));
    }
    Vector vals(tab.stages);
    for (int i = 1; i <= tab.stages; ++i)
      vals[i - 1] = integrand().value(stage_states[i - 1], mu, grid.stage_time(n, tab, i));
    return accumulate(spec_, f_prev, vals, tab, grid.dt(n));
  }

  /// dF/du^(N_t); nonzero only for an impulse at the final grid point.
  Vector terminal_partial(const Vector& u_final, const Vector& mu, const TimeGrid& grid,
                          int n_u) const {
    if (is_impulse() && impulse_stage_ == 0 && impulse_step_ == grid.steps())
      return integrand().jac_state(u_final, mu, grid.t_final());
    return Vector(n_u, 0.0);
  }

  /// d F / d mu through the integrand's explicit mu dependence at the final
  /// grid point (impulse there only); all other contributions live in
  /// step_partials.
  Vector terminal_param_partial(const Vector& u_final, const Vector& mu, const TimeGrid& grid,
                                int n_mu) const {
    if (is_impulse() && impulse_stage_ == 0 && impulse_step_ == grid.steps())
      return integrand().jac_param(u_final, mu, grid.t_final());
    return Vector(n_mu, 0.0);
  }

  struct StepPartials {
    Vector dF_du_prev;          // dF/du^(n-1), the contribution visible at step n
    std::vector<Vector> dF_dk;  // dF/dk_p^(n), p = 1..s
    Vector dF_dmu;              // explicit mu dependence surfaced at step n
  };

  /// Partials of the fully discrete F for step n. The chain through the
  /// stage states u_i = u^(n-1) + sum_j a_ij k_j gives
  ///   dF/dk_p = dt sum_{i>=p} b_i a_ip f_u(u_i),
  ///   dF/du^(n-1) += dt sum_i b_i f_u(u_i).
  /// A grid-point impulse at n-1 also surfaces here (its state is u_prev).
  StepPartials step_partials(int n, const Vector& u_prev, std::span<const Vector> stage_states,
                             const Vector& mu, const TimeGrid& grid, const ButcherTableau& tab,
                             int n_u, int n_mu) const {
    StepPartials out;
    out.dF_du_prev = Vector(n_u, 0.0);
    out.dF_dk.assign(tab.stages, Vector(n_u, 0.0));
    out.dF_dmu = Vector(n_mu, 0.0);

    if (is_impulse()) {
      if (impulse_step_ == n - 1 && impulse_stage_ == 0 && n - 1 < grid.steps()) {
        // impulse at the grid point t_{n-1}; never fires for n-1 = N_t
        out.dF_du_prev = integrand().jac_state(u_prev, mu, grid.time(n - 1));
        out.dF_dmu = integrand().jac_param(u_prev, mu, grid.time(n - 1));
      } else if (impulse_step_ == n && impulse_stage_ >= 1) {
        const int is = impulse_stage_;
        const double ts = grid.stage_time(n, tab, is);
        const Vector fu = integrand().jac_state(stage_states[is - 1], mu, ts);
        out.dF_du_prev = fu;
        for (int j = 1; j <= is; ++j) out.dF_dk[j - 1] = scaled(tab.a(is - 1, j - 1), fu);
        out.dF_dmu = integrand().jac_param(stage_states[is - 1], mu, ts);
      }
      return out;
    }

    const double dt = grid.dt(n);
    std::vector<Vector> fu(tab.stages);
    for (int i = 1; i <= tab.stages; ++i) {
      const double ts = grid.stage_time(n, tab, i);
      fu[i - 1] = integrand().jac_state(stage_states[i - 1], mu, ts);
      axpy(dt * tab.b[i - 1], fu[i - 1], out.dF_du_prev);
      axpy(dt * tab.b[i - 1], integrand().jac_param(stage_states[i - 1], mu, ts), out.dF_dmu);
    }
    for (int p = 1; p <= tab.stages; ++p)
      for (int i = p; i <= tab.stages; ++i)
        axpy(dt * tab.b[i - 1] * tab.a(i - 1, p - 1), fu[i - 1], out.dF_dk[p - 1]);
    return out;
  }

 private:
  QoiSpec spec_;
  int impulse_step_ = -1;
  int impulse_stage_ = -1;
};

}  // namespace adjflow
