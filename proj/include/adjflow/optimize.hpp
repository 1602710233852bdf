// Gradient-based driver for the control problems: projected limited-memory
// BFGS with Armijo backtracking for bound constraints, wrapped in an
// augmented-Lagrangian outer loop when a scalar equality constraint is
// present. Each evaluation is one primal solve plus one adjoint sweep batch
// producing the objective and constraint values and gradients together.
#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/linalg.hpp"

namespace adjflow {

struct OptOptions {
  int max_iterations = 200;        // inner iterations per outer pass
  double grad_tolerance = 1e-9;    // projected-gradient inf norm (scaled merit)
  double step_tolerance = 1e-14;
  int lbfgs_memory = 10;
  double armijo_c1 = 1e-4;
  int max_backtracks = 40;
  double constraint_tolerance = 1e-8;  // unscaled |constraint - target|
  int max_outer = 12;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int eval_retry_cap = 5;
};

struct OptEval {
  double objective = 0.0;
  Vector objective_gradient;
  double constraint = 0.0;  // raw QoI value (not violation)
  Vector constraint_gradient;
};

struct OptProblem {
  int dim = 0;
  std::function<OptEval(const Vector&)> evaluate;
  bool has_constraint = false;
  double constraint_target = 0.0;
  Vector lower;  // empty => unbounded
  Vector upper;
  Vector initial;
};

struct OptIterate {
  int outer = 0;
  int iter = 0;
  Vector mu;
  double objective = 0.0;
  double merit = 0.0;
  double constraint_violation = 0.0;
  double projected_grad_norm = 0.0;
  double step = 0.0;
  int evaluations = 0;  // evaluator calls consumed by this iterate (line search)
  bool armijo_ok = true;
};

struct OptTrace {
  std::vector<OptIterate> rows;
};

enum class OptStatus { converged, step_stalled, max_iterations, evaluator_failure };

inline const char* to_string(OptStatus s) {
  switch (s) {
    case OptStatus::converged: return "converged";
    case OptStatus::step_stalled: return "step_stalled";
    case OptStatus::max_iterations: return "max_iterations";
    case OptStatus::evaluator_failure: return "evaluator_failure";
  }
  return "?";
}

struct OptResult {
  Vector mu;
  double objective = 0.0;
  double constraint_value = 0.0;
  double constraint_violation = 0.0;
  OptStatus status = OptStatus::max_iterations;
  OptTrace trace;
  int total_evaluations = 0;
};

namespace detail {

inline void project(const OptProblem& p, Vector& x) {
  if (!p.lower.empty())
    for (int i = 0; i < p.dim; ++i) x[i] = std::max(x[i], p.lower[i]);
  if (!p.upper.empty())
    for (int i = 0; i < p.dim; ++i) x[i] = std::min(x[i], p.upper[i]);
}

// gradient of the projected path: zero where a bound is active and the
// gradient pushes outward
inline Vector projected_gradient(const OptProblem& p, const Vector& x, const Vector& g) {
  Vector pg = g;
  const double eps = 1e-12;
  for (int i = 0; i < p.dim; ++i) {
    if (!p.lower.empty() && x[i] <= p.lower[i] + eps && g[i] > 0.0) pg[i] = 0.0;
    if (!p.upper.empty() && x[i] >= p.upper[i] - eps && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

class LbfgsDirection {
 public:
  explicit LbfgsDirection(int memory) : m_(memory) {}

  void push(const Vector& s, const Vector& y) {
    const double sy = dot(s, y);
    if (sy <= 1e-12 * norm2(s) * norm2(y)) return;  // curvature guard
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(1.0 / sy);
    if (static_cast<int>(s_.size()) > m_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
  }

  void reset() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  Vector apply(Vector g) const {  // two-loop recursion, d = H g
    const int k = static_cast<int>(s_.size());
    Vector alpha(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * dot(s_[i], g);
      axpy(-alpha[i], y_[i], g);
    }
    if (k > 0) {
      const double gamma = dot(s_[k - 1], y_[k - 1]) / dot(y_[k - 1], y_[k - 1]);
      scale(gamma, g);
    }
    for (int i = 0; i < k; ++i) {
      const double beta = rho_[i] * dot(y_[i], g);
      axpy(alpha[i] - beta, s_[i], g);
    }
    return g;
  }

 private:
  int m_;
  std::deque<Vector> s_, y_;
  std::deque<double> rho_;
};

}  // namespace detail

/// minimize f(mu) [subject to c(mu) = target] over the feasible box.
inline OptResult minimize(const OptProblem& problem, const OptOptions& opts = {}) {
  OptResult result;
  Vector x = problem.initial;
  detail::project(problem, x);

  int total_evals = 0;
  auto safe_eval = [&](const Vector& mu, OptEval& out) -> bool {
    try {
      out = problem.evaluate(mu);
      ++total_evals;
      return true;
    } catch (const std::exception&) {
      ++total_evals;
      return false;
    }
  };

  OptEval e0;
  if (!safe_eval(x, e0)) {
    result.status = OptStatus::evaluator_failure;
    result.mu = x;
    result.total_evaluations = total_evals;
    return result;
  }

  const double f_scale = std::max(std::abs(e0.objective), 1e-8);
  const double c_scale =
      problem.has_constraint
          ? std::max({std::abs(e0.constraint - problem.constraint_target),
                      1e-2 * std::abs(problem.constraint_target), 1e-8})
          : 1.0;

  double lambda = 0.0;           // multiplier (scaled)
  double rho = opts.penalty_init;
  double prev_violation = std::numeric_limits<double>::infinity();

  auto merit_of = [&](const OptEval& e, Vector* grad) {
    const double fs = e.objective / f_scale;
    if (grad) *grad = scaled(1.0 / f_scale, e.objective_gradient);
    if (!problem.has_constraint) return fs;
    const double cs = (e.constraint - problem.constraint_target) / c_scale;
    if (grad) axpy((lambda + rho * cs) / c_scale, e.constraint_gradient, *grad);
    return fs + lambda * cs + 0.5 * rho * cs * cs;
  };

  const int n_outer = problem.has_constraint ? opts.max_outer : 1;
  OptEval cur = e0;
  result.status = OptStatus::max_iterations;

  // forcing sequence: early outer passes solve the subproblem loosely, the
  // tolerance tightens as the multiplier estimates settle
  double inner_tol = problem.has_constraint ? std::max(opts.grad_tolerance, 1e-3)
                                            : opts.grad_tolerance;

  for (int outer = 0; outer < n_outer; ++outer) {
    detail::LbfgsDirection lbfgs(opts.lbfgs_memory);
    Vector grad;
    double merit = merit_of(cur, &grad);
    bool inner_converged = false;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
      const Vector pgrad = detail::projected_gradient(problem, x, grad);
      const double pgnorm = norm_inf(pgrad);

      OptIterate row;
      row.outer = outer;
      row.iter = iter;
      row.mu = x;
      row.objective = cur.objective;
      row.merit = merit;
      row.constraint_violation =
          problem.has_constraint ? std::abs(cur.constraint - problem.constraint_target) : 0.0;
      row.projected_grad_norm = pgnorm;

      if (pgnorm <= inner_tol) {
        result.trace.rows.push_back(row);
        inner_converged = true;
        break;
      }

      Vector dir = lbfgs.apply(pgrad);
      scale(-1.0, dir);
      if (dot(dir, grad) >= 0.0) {  // not a descent direction; steepest reset
        lbfgs.reset();
        dir = scaled(-1.0, pgrad);
      }

      // Armijo backtracking along the projected path
      double alpha = 1.0;
      bool accepted = false;
      Vector x_new, x_prev_trial;
      OptEval e_new;
      double merit_new = 0.0;
      int evals_this_iter = 0;
      int failures = 0;
      for (int bt = 0; bt < opts.max_backtracks; ++bt) {
        x_new = x;
        axpy(alpha, dir, x_new);
        detail::project(problem, x_new);
        Vector step = subtract(x_new, x);
        if (norm_inf(step) <= opts.step_tolerance) break;
        if (x_new == x_prev_trial) {  // projection collapsed to the same point
          alpha *= 0.5;
          continue;
        }
        x_prev_trial = x_new;
        if (!safe_eval(x_new, e_new)) {
          ++evals_this_iter;
          if (++failures > opts.eval_retry_cap) {
            result.trace.rows.push_back(row);
            result.status = OptStatus::evaluator_failure;
            goto finish;
          }
          alpha *= 0.5;
          continue;
        }
        ++evals_this_iter;
        merit_new = merit_of(e_new, nullptr);
        const double decrease = dot(grad, step);
        if (merit_new <= merit + opts.armijo_c1 * decrease) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }

      row.evaluations = evals_this_iter;
      if (!accepted) {
        row.armijo_ok = false;
        result.trace.rows.push_back(row);
        inner_converged = true;  // cannot make progress; treat as stalled
        result.status = OptStatus::step_stalled;
        break;
      }

      Vector grad_new;
      const double m_new = merit_of(e_new, &grad_new);
      lbfgs.push(subtract(x_new, x), subtract(grad_new, grad));

      row.step = norm_inf(subtract(x_new, x));
      result.trace.rows.push_back(row);

      x = std::move(x_new);
      cur = std::move(e_new);
      grad = std::move(grad_new);
      merit = m_new;
    }

    if (!problem.has_constraint) {
      if (inner_converged && result.status != OptStatus::step_stalled)
        result.status = OptStatus::converged;
      break;
    }

    const double cs = (cur.constraint - problem.constraint_target) / c_scale;
    const double violation = std::abs(cur.constraint - problem.constraint_target);
    if (violation <= opts.constraint_tolerance && inner_converged &&
        inner_tol <= opts.grad_tolerance) {
      result.status = OptStatus::converged;
      break;
    }
    lambda += rho * cs;
    if (violation > 0.25 * prev_violation) rho *= opts.penalty_growth;
    prev_violation = violation;
    inner_tol = std::max(opts.grad_tolerance, 0.1 * inner_tol);
  }

finish:
  result.mu = x;
  result.objective = cur.objective;
  result.constraint_value = cur.constraint;
  result.constraint_violation =
      problem.has_constraint ? std::abs(cur.constraint - problem.constraint_target) : 0.0;
  result.total_evaluations = total_evals;
  return result;
}

}  // namespace adjflow
