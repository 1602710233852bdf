// Fully discrete adjoint of the DIRK-integrated system. The sweep runs the
// time loop of the primal in reverse, reading checkpoints in strictly
// descending order:
//   lambda^(N_t) = dF/du^(N_t)^T
//   (M^T - a_ii dt J_i^T) kappa_i = dF/dk_i^T + b_i lambda^(n)
//                                   + sum_{j>i} a_ji dt J_j^T kappa_j
//   lambda^(n-1) = lambda^(n) + dF/du^(n-1)^T + dt sum_i J_i^T kappa_i
// and the gradient is reconstructed without any state sensitivities:
//   dF/dmu = pF/pmu + lambda^(0)^T du_0/dmu + sum_n dt sum_i kappa_i^T pr/pmu.
// Because only quantities computed by the primal appear, the stages need no
// time reversal or interpolation; the gradient is exact for the discrete F.
#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "adjflow/linalg.hpp"
#include "adjflow/primal.hpp"
#include "adjflow/qoi.hpp"
#include "adjflow/store.hpp"
#include "adjflow/system.hpp"

namespace adjflow {

struct DualTrajectory {
  std::vector<Vector> lambda;               // 0..N_t
  std::vector<std::vector<Vector>> kappa;   // [n-1][i-1], n = 1..N_t

  double lambda_inf() const {
    double m = 0.0;
    for (const auto& l : lambda) m = std::max(m, norm_inf(l));
    return m;
  }
};

struct GradientBreakdown {
  Vector partial_term;  // pF/pmu
  Vector ic_term;       // lambda^(0)^T du_0/dmu
  Vector stage_term;    // sum_n dt_n sum_i kappa_i^T pr/pmu
};

struct Gradient {
  Vector value;
  GradientBreakdown breakdown;
};

/// lambda^(0)^T du_0/dmu. Analytic ICs use the stored du_0/dmu directly; a
/// steady IC costs one transposed linear solve with the steady Jacobian:
/// lambda^(0)^T du_0/dmu = -[dR/du_0^{-T} lambda^(0)]^T dR/dmu.
inline Vector ic_sensitivity_contribution(const InitialCondition& ic, const Vector& lambda0) {
  if (ic.kind == InitialCondition::Kind::analytic) {
    if (ic.du_dmu.rows() == 0) return Vector(0, 0.0);
    return ic.du_dmu.matvec_transpose(lambda0);
  }
  const LuSolver lu(ic.steady_jac_state);
  const Vector v = lu.solve_transpose(lambda0);
  Vector contrib = ic.steady_jac_param.matvec_transpose(v);
  scale(-1.0, contrib);
  return contrib;
}

/// Reverse sweep for one or more QoIs over the same trajectory; the stage
/// matrices are factored once per (n, i) and shared across QoIs through
/// transpose solves of the primal-form operator.
inline std::vector<DualTrajectory> adjoint_sweep(const SemiDiscreteSystem& sys,
                                                 const ButcherTableau& tab, const TimeGrid& grid,
                                                 const Vector& mu,
                                                 std::span<const DiscreteQoi> qois,
                                                 CheckpointStore& store) {
  const int s = tab.stages;
  const int n_u = sys.dim();
  const int n_mu = sys.num_params();
  const int nq = static_cast<int>(qois.size());
  const int n_t = grid.steps();

  auto reader = store.open_reverse(make_layout(sys, tab, grid));

  std::vector<DualTrajectory> duals(nq);
  for (auto& d : duals) {
    d.lambda.assign(n_t + 1, Vector());
    d.kappa.assign(n_t, std::vector<Vector>(s));
  }

  const Vector u_final = reader->final_state();
  for (int q = 0; q < nq; ++q)
    duals[q].lambda[n_t] = qois[q].terminal_partial(u_final, mu, grid, n_u);

  std::vector<Vector> stage_states(s);
  std::vector<Matrix> jac(s);
  std::vector<std::vector<Vector>> jtk(nq, std::vector<Vector>(s));  // dt J_i^T kappa_i

  for (int n = n_t; n >= 1; --n) {
    const StepBundle bundle = reader->read_step(n);
    const double dt = grid.dt(n);

    for (int i = 1; i <= s; ++i) {
      Vector ui = bundle.u_prev;
      for (int j = 1; j <= i; ++j) axpy(tab.a(i - 1, j - 1), bundle.stages[j - 1], ui);
      stage_states[i - 1] = std::move(ui);
      jac[i - 1] = sys.jac_state(stage_states[i - 1], mu, grid.stage_time(n, tab, i));
    }

    std::vector<DiscreteQoi::StepPartials> parts(nq);
    for (int q = 0; q < nq; ++q)
      parts[q] = qois[q].step_partials(n, bundle.u_prev, stage_states, mu, grid, tab, n_u, n_mu);

    for (int i = s; i >= 1; --i) {
      Matrix a = sys.mass();
      a.add_scaled(-tab.a(i - 1, i - 1) * dt, jac[i - 1]);
      const LuSolver lu(std::move(a));
      for (int q = 0; q < nq; ++q) {
        Vector rhs = parts[q].dF_dk[i - 1];
        axpy(tab.b[i - 1], duals[q].lambda[n], rhs);
        for (int j = i + 1; j <= s; ++j) axpy(tab.a(j - 1, i - 1), jtk[q][j - 1], rhs);
        Vector kappa = lu.solve_transpose(std::move(rhs));
        jtk[q][i - 1] = jac[i - 1].matvec_transpose(kappa);
        scale(dt, jtk[q][i - 1]);
        duals[q].kappa[n - 1][i - 1] = std::move(kappa);
      }
    }

    for (int q = 0; q < nq; ++q) {
      Vector lam = duals[q].lambda[n];
      axpy(1.0, parts[q].dF_du_prev, lam);
      for (int i = 0; i < s; ++i) axpy(1.0, jtk[q][i], lam);
      duals[q].lambda[n - 1] = std::move(lam);
    }
  }
  return duals;
}

/// Gradient reconstruction from a completed dual trajectory; a forward pass
/// over the same checkpoints accumulates kappa_i^T pr/pmu and the explicit
/// pF/pmu, then adds the initial-condition term.
inline std::vector<Gradient> reconstruct_gradient(const SemiDiscreteSystem& sys,
                                                  const ButcherTableau& tab, const TimeGrid& grid,
                                                  const Vector& mu,
                                                  std::span<const DiscreteQoi> qois,
                                                  std::span<const DualTrajectory> duals,
                                                  CheckpointStore& store) {
  const int s = tab.stages;
  const int n_u = sys.dim();
  const int n_mu = sys.num_params();
  const int nq = static_cast<int>(qois.size());

  auto reader = store.open_forward(make_layout(sys, tab, grid));
  std::vector<Gradient> grads(nq);
  for (auto& g : grads) {
    g.breakdown.partial_term = Vector(n_mu, 0.0);
    g.breakdown.ic_term = Vector(n_mu, 0.0);
    g.breakdown.stage_term = Vector(n_mu, 0.0);
  }

  std::vector<Vector> stage_states(s);
  for (int n = 1; n <= grid.steps(); ++n) {
    const StepBundle bundle = reader->read_step_forward(n);
    const double dt = grid.dt(n);
    for (int i = 1; i <= s; ++i) {
      Vector ui = bundle.u_prev;
      for (int j = 1; j <= i; ++j) axpy(tab.a(i - 1, j - 1), bundle.stages[j - 1], ui);
      stage_states[i - 1] = std::move(ui);
    }
    for (int i = 1; i <= s; ++i) {
      const Matrix drdmu = sys.jac_param(stage_states[i - 1], mu, grid.stage_time(n, tab, i));
      for (int q = 0; q < nq; ++q) {
        const Vector prod = drdmu.matvec_transpose(duals[q].kappa[n - 1][i - 1]);
        axpy(dt, prod, grads[q].breakdown.stage_term);
      }
    }
    for (int q = 0; q < nq; ++q) {
      const auto parts =
          qois[q].step_partials(n, bundle.u_prev, stage_states, mu, grid, tab, n_u, n_mu);
      axpy(1.0, parts.dF_dmu, grads[q].breakdown.partial_term);
    }
  }

  const Vector u_final = reader->read_state(grid.steps());
  const InitialCondition ic = sys.initial(mu);
  for (int q = 0; q < nq; ++q) {
    axpy(1.0, qois[q].terminal_param_partial(u_final, mu, grid, n_mu),
         grads[q].breakdown.partial_term);
    grads[q].breakdown.ic_term = ic_sensitivity_contribution(ic, duals[q].lambda[0]);

    grads[q].value = Vector(n_mu, 0.0);
    for (int j = 0; j < n_mu; ++j)
      grads[q].value[j] = grads[q].breakdown.partial_term[j] + grads[q].breakdown.ic_term[j] +
                          grads[q].breakdown.stage_term[j];
  }
  return grads;
}

/// Convenience: sweep plus reconstruction.
struct AdjointResult {
  std::vector<DualTrajectory> duals;
  std::vector<Gradient> gradients;
};

inline AdjointResult adjoint_gradient(const SemiDiscreteSystem& sys, const ButcherTableau& tab,
                                      const TimeGrid& grid, const Vector& mu,
                                      std::span<const DiscreteQoi> qois, CheckpointStore& store) {
  AdjointResult r;
  r.duals = adjoint_sweep(sys, tab, grid, mu, qois, store);
  r.gradients = reconstruct_gradient(sys, tab, grid, mu, qois, r.duals, store);
  return r;
}

/// Forward (tangent) sensitivity oracle: propagates du^(n)/dmu and
/// dk_i^(n)/dmu through the linearized stage systems over the *same* stored
/// trajectory the adjoint differentiates, then evaluates the chain rule for
/// dF/dmu directly. O(N_mu) linear solves per stage; oracle use only.
inline std::vector<Vector> forward_sensitivity(const SemiDiscreteSystem& sys,
                                               const ButcherTableau& tab, const TimeGrid& grid,
                                               const Vector& mu, std::span<const DiscreteQoi> qois,
                                               CheckpointStore& store) {
  const int s = tab.stages;
  const int n_u = sys.dim();
  const int n_mu = sys.num_params();
  const int nq = static_cast<int>(qois.size());

  auto reader = store.open_forward(make_layout(sys, tab, grid));

  const InitialCondition ic = sys.initial(mu);
  Matrix sens(n_u, n_mu);  // du^(n)/dmu
  if (ic.kind == InitialCondition::Kind::analytic) {
    sens = ic.du_dmu;
  } else {
    const LuSolver lu(ic.steady_jac_state);
    sens = lu.solve_matrix(ic.steady_jac_param);
    for (auto& v : sens.data()) v = -v;
  }

  std::vector<Vector> dF(nq, Vector(n_mu, 0.0));
  const Vector u0 = reader->initial_state();
  // impulse at t_0 contributes f_u(u^0) du^0/dmu + f_mu(u^0)
  for (int q = 0; q < nq; ++q)
    if (qois[q].is_impulse() && qois[q].impulse_step() == 0) {
      const Vector fu = qois[q].integrand().jac_state(u0, mu, grid.t_initial());
      Vector chain = sens.matvec_transpose(fu);
      axpy(1.0, chain, dF[q]);
      axpy(1.0, qois[q].integrand().jac_param(u0, mu, grid.t_initial()), dF[q]);
    }

  std::vector<Vector> stage_states(s);
  std::vector<Matrix> tangent(s);  // dk_i/dmu
  for (int n = 1; n <= grid.steps(); ++n) {
    const StepBundle bundle = reader->read_step_forward(n);
    const double dt = grid.dt(n);

    for (int i = 1; i <= s; ++i) {
      Vector ui = bundle.u_prev;
      for (int j = 1; j <= i; ++j) axpy(tab.a(i - 1, j - 1), bundle.stages[j - 1], ui);
      stage_states[i - 1] = std::move(ui);
    }

    for (int i = 1; i <= s; ++i) {
      const double ts = grid.stage_time(n, tab, i);
      const Matrix jac = sys.jac_state(stage_states[i - 1], mu, ts);

      Matrix dstate = sens;  // d u_i / dmu without the diagonal term
      for (int j = 1; j < i; ++j) dstate.add_scaled(tab.a(i - 1, j - 1), tangent[j - 1]);

      Matrix rhs = sys.jac_param(stage_states[i - 1], mu, ts);
      rhs.add_scaled(1.0, jac.matmul(dstate));
      Matrix sysmat = sys.mass();
      sysmat.add_scaled(-dt * tab.a(i - 1, i - 1), jac);
      const LuSolver lu(std::move(sysmat));
      Matrix scaled_rhs = rhs;
      for (auto& v : scaled_rhs.data()) v *= dt;
      tangent[i - 1] = lu.solve_matrix(scaled_rhs);
    }

    for (int q = 0; q < nq; ++q) {
      const auto parts =
          qois[q].step_partials(n, bundle.u_prev, stage_states, mu, grid, tab, n_u, n_mu);
      axpy(1.0, parts.dF_dmu, dF[q]);
      axpy(1.0, sens.matvec_transpose(parts.dF_du_prev), dF[q]);
      for (int p = 0; p < s; ++p)
        axpy(1.0, tangent[p].matvec_transpose(parts.dF_dk[p]), dF[q]);
    }

    for (int i = 0; i < s; ++i) sens.add_scaled(tab.b[i], tangent[i]);
  }

  const Vector u_final = reader->read_state(grid.steps());
  for (int q = 0; q < nq; ++q) {
    const Vector term = qois[q].terminal_partial(u_final, mu, grid, n_u);
    axpy(1.0, sens.matvec_transpose(term), dF[q]);
    axpy(1.0, qois[q].terminal_param_partial(u_final, mu, grid, n_mu), dF[q]);
  }
  return dF;
}

/// Norms of the Lagrangian partials at a computed primal/dual pair: these
/// vanish exactly when the adjoint equations hold, so they make a stringent
/// a-posteriori check with independently re-evaluated Jacobians.
struct LagrangianResiduals {
  double max_state = 0.0;  // max_n ||dL/du^(n)||_inf
  double max_stage = 0.0;  // max_{n,i} ||dL/dk_i^(n)||_inf
  double lambda_inf = 0.0;
};

inline LagrangianResiduals lagrangian_residuals(const SemiDiscreteSystem& sys,
                                                const ButcherTableau& tab, const TimeGrid& grid,
                                                const Vector& mu, const DiscreteQoi& qoi,
                                                const DualTrajectory& dual,
                                                CheckpointStore& store) {
  const int s = tab.stages;
  const int n_u = sys.dim();
  const int n_mu = sys.num_params();
  const int n_t = grid.steps();

  auto reader = store.open_reverse(make_layout(sys, tab, grid));
  LagrangianResiduals out;
  out.lambda_inf = dual.lambda_inf();

  {
    const Vector u_final = reader->final_state();
    Vector res = qoi.terminal_partial(u_final, mu, grid, n_u);
    axpy(-1.0, dual.lambda[n_t], res);
    out.max_state = std::max(out.max_state, norm_inf(res));
  }

  std::vector<Vector> stage_states(s);
  std::vector<Matrix> jac(s);
  for (int n = n_t; n >= 1; --n) {
    const StepBundle bundle = reader->read_step(n);
    const double dt = grid.dt(n);
    for (int i = 1; i <= s; ++i) {
      Vector ui = bundle.u_prev;
      for (int j = 1; j <= i; ++j) axpy(tab.a(i - 1, j - 1), bundle.stages[j - 1], ui);
      stage_states[i - 1] = std::move(ui);
      jac[i - 1] = sys.jac_state(stage_states[i - 1], mu, grid.stage_time(n, tab, i));
    }
    const auto parts = qoi.step_partials(n, bundle.u_prev, stage_states, mu, grid, tab, n_u, n_mu);

    std::vector<Vector> jtk(s);
    for (int i = 0; i < s; ++i) {
      jtk[i] = jac[i].matvec_transpose(dual.kappa[n - 1][i]);
      scale(dt, jtk[i]);
    }

    // dL/dk_i = dF/dk_i + b_i lambda^(n) + sum_{j>=i} a_ji dt J_j^T kappa_j - M^T kappa_i
    for (int i = 1; i <= s; ++i) {
      Vector res = parts.dF_dk[i - 1];
      axpy(tab.b[i - 1], dual.lambda[n], res);
      for (int j = i; j <= s; ++j) axpy(tab.a(j - 1, i - 1), jtk[j - 1], res);
      axpy(-1.0, sys.mass().matvec_transpose(dual.kappa[n - 1][i - 1]), res);
      out.max_stage = std::max(out.max_stage, norm_inf(res));
    }

    // dL/du^(n-1) = dF/du^(n-1) + lambda^(n) - lambda^(n-1) + dt sum_i J_i^T kappa_i
    Vector res = parts.dF_du_prev;
    axpy(1.0, dual.lambda[n], res);
    axpy(-1.0, dual.lambda[n - 1], res);
    for (int i = 0; i < s; ++i) axpy(1.0, jtk[i], res);
    out.max_state = std::max(out.max_state, norm_inf(res));
  }
  return out;
}

}  // namespace adjflow
