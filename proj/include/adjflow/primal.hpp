// Forward DIRK integration: per step, s sequential Newton stage solves
//   M k_i = dt r(u^(n-1) + sum_{j<=i} a_ij k_j, mu, t_{n-1} + c_i dt),
// the state update u^(n) = u^(n-1) + sum_i b_i k_i, the solver-consistent
// functional update, and checkpoint emission in forward slot order.
#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/linalg.hpp"
#include "adjflow/qoi.hpp"
#include "adjflow/store.hpp"
#include "adjflow/system.hpp"
#include "adjflow/tableau.hpp"
#include "adjflow/time_grid.hpp"

namespace adjflow {

struct NewtonOptions {
  double tolerance = 1e-11;  // absolute, on the stage residual 2-norm
  int max_iterations = 20;
  bool reuse_jacobian = false;  // freeze the stage Jacobian at the first iterate
};

struct StageFailure : std::runtime_error {
  StageFailure(int step_, int stage_, std::vector<double> history, const std::string& reason)
      : std::runtime_error("stage solve failed at step " + std::to_string(step_) + ", stage " +
                           std::to_string(stage_) + ": " + reason),
        step(step_), stage(stage_), residual_history(std::move(history)) {}
  int step;
  int stage;
  std::vector<double> residual_history;
};

/// Newton solve of one DIRK stage. `prior_stages` holds k_1..k_{i-1}; the
/// stage Jacobian is M - dt a_ii dr/du. Returns k_i; optionally reports the
/// iteration count and per-iteration residual norms.
inline Vector solve_stage(const SemiDiscreteSystem& sys, const ButcherTableau& tab,
                          const Vector& u_prev, std::span<const Vector> prior_stages, int i,
                          double t_prev, double dt, const Vector& mu, const NewtonOptions& opts,
                          int step_label = 0, int* iterations = nullptr,
                          std::vector<double>* history_out = nullptr) {
  if (!(dt > 0.0)) throw std::invalid_argument("solve_stage: dt must be positive");
  const int n_u = sys.dim();
  const double t_stage = t_prev + tab.c[i - 1] * dt;
  const double aii = tab.a(i - 1, i - 1);

  // frozen part of the stage state
  Vector base = u_prev;
  for (int j = 1; j < i; ++j) axpy(tab.a(i - 1, j - 1), prior_stages[j - 1], base);

  Vector k(n_u, 0.0);
  std::vector<double> history;
  LuSolver lu;
  bool factored = false;

  for (int it = 0; it <= opts.max_iterations; ++it) {
    Vector u_i = base;
    axpy(aii, k, u_i);
    Vector g = sys.mass().matvec(k);
    axpy(-dt, sys.residual(u_i, mu, t_stage), g);
    const double gnorm = norm2(g);
    history.push_back(gnorm);
    if (gnorm <= opts.tolerance) {
      if (iterations) *iterations = it;
      if (history_out) *history_out = history;
      return k;
    }
    if (it == opts.max_iterations) break;
    if (!factored || !opts.reuse_jacobian) {
      Matrix jg = sys.mass();
      jg.add_scaled(-dt * aii, sys.jac_state(u_i, mu, t_stage));
      try {
        lu.factor(std::move(jg));
      } catch (const SingularMatrixError& e) {
        throw StageFailure(step_label, i, history, e.what());
      }
      factored = true;
    }
    scale(-1.0, g);
    axpy(1.0, lu.solve(std::move(g)), k);
  }
  throw StageFailure(step_label, i, history,
                     "Newton did not converge in " + std::to_string(opts.max_iterations) +
                         " iterations");
}

struct StepLog {
  int step;
  double t;
  int newton_iterations;
  Vector qoi_running;
};

struct IntegrateOptions {
  NewtonOptions newton;
  std::function<void(const StepLog&)> progress;
};

struct QoiHistoryRow {
  double t;
  Vector instantaneous;  // f_h at the grid state
  Vector running;        // F_h^(n)
};

struct PrimalResult {
  Vector final_state;
  Vector qoi_values;  // F_h^(N_t) per registered QoI
  std::vector<QoiHistoryRow> history;
  int total_newton_iterations = 0;
};

inline StoreLayout make_layout(const SemiDiscreteSystem& sys, const ButcherTableau& tab,
                               const TimeGrid& grid) {
  StoreLayout l;
  l.n_u = static_cast<std::uint64_t>(sys.dim());
  l.stages = static_cast<std::uint32_t>(tab.stages);
  l.n_steps = static_cast<std::uint64_t>(grid.steps());
  l.times.assign(grid.points().begin(), grid.points().end());
  return l;
}

/// Algorithm: for each step solve the s stages, update the state and the
/// running functionals, and write every k_i^(n) and u^(n) to the store in
/// forward order.
inline PrimalResult integrate(const SemiDiscreteSystem& sys, const ButcherTableau& tab,
                              const TimeGrid& grid, const Vector& mu,
                              std::span<const DiscreteQoi> qois, CheckpointStore& store,
                              const IntegrateOptions& opts = {}) {
  const int s = tab.stages;
  const int nq = static_cast<int>(qois.size());

  const InitialCondition ic = sys.initial(mu);
  Vector u = ic.value;

  auto writer = store.open_write(make_layout(sys, tab, grid));
  writer->write_initial(u);

  PrimalResult out;
  out.qoi_values = Vector(nq, 0.0);
  for (int q = 0; q < nq; ++q)
    out.qoi_values[q] = qois[q].initial_value(u, mu, grid.t_initial());

  auto history_row = [&](double t, const Vector& state) {
    QoiHistoryRow row;
    row.t = t;
    row.running = out.qoi_values;
    row.instantaneous = Vector(nq, 0.0);
    for (int q = 0; q < nq; ++q) row.instantaneous[q] = qois[q].instantaneous(state, mu, t);
    out.history.push_back(std::move(row));
  };
  history_row(grid.t_initial(), u);

  std::vector<Vector> stages(s), stage_states(s);
  for (int n = 1; n <= grid.steps(); ++n) {
    const double t_prev = grid.time(n - 1);
    const double dt = grid.dt(n);
    int step_iters = 0;

    for (int i = 1; i <= s; ++i) {
      int iters = 0;
      stages[i - 1] = solve_stage(sys, tab, u, {stages.data(), static_cast<std::size_t>(i - 1)},
                                  i, t_prev, dt, mu, opts.newton, n, &iters);
      step_iters += iters;
      writer->write_stage(n, i, stages[i - 1]);
      Vector ui = u;
      for (int j = 1; j <= i; ++j) axpy(tab.a(i - 1, j - 1), stages[j - 1], ui);
      stage_states[i - 1] = std::move(ui);
    }

    for (int i = 0; i < s; ++i) axpy(tab.b[i], stages[i], u);
    for (int q = 0; q < nq; ++q)
      out.qoi_values[q] = qois[q].update(out.qoi_values[q], n, stage_states, u, mu, grid, tab);
    writer->write_state(n, u);

    out.total_newton_iterations += step_iters;
    history_row(grid.time(n), u);
    if (opts.progress) opts.progress(StepLog{n, grid.time(n), step_iters, out.qoi_values});
  }
  writer->finish();
  out.final_state = std::move(u);
  return out;
}

/// Re-checks u^(n) - u^(n-1) - sum_i b_i k_i^(n) = 0 from stored data; returns
/// the max relative residual over all steps.
inline double check_update_identity(CheckpointStore& store, const StoreLayout& layout,
                                    const ButcherTableau& tab) {
  auto reader = store.open_reverse(layout);
  Vector u_n = reader->final_state();
  double worst = 0.0;
  for (int n = static_cast<int>(layout.n_steps); n >= 1; --n) {
    StepBundle b = reader->read_step(n);
    Vector res = u_n;
    axpy(-1.0, b.u_prev, res);
    for (int i = 0; i < tab.stages; ++i) axpy(-tab.b[i], b.stages[i], res);
    worst = std::max(worst, norm_inf(res) / std::max(1.0, norm_inf(u_n)));
    u_n = std::move(b.u_prev);
  }
  return worst;
}

}  // namespace adjflow
