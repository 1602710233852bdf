#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "adjflow/optimize.hpp"

using namespace adjflow;

namespace {

OptProblem quadratic_1d() {
  OptProblem p;
  p.dim = 1;
  p.initial = {5.0};
  p.evaluate = [](const Vector& mu) {
    OptEval e;
    e.objective = (mu[0] - 2.0) * (mu[0] - 2.0);
    e.objective_gradient = {2.0 * (mu[0] - 2.0)};
    return e;
  };
  return p;
}

}  // namespace

TEST_CASE("quadratic minimum to 1e-8") {
  const OptResult r = minimize(quadratic_1d());
  CHECK(r.status == OptStatus::converged);
  CHECK(std::abs(r.mu[0] - 2.0) <= 1e-8);
}

TEST_CASE("equality-constrained quadratic reaches the KKT point") {
  OptProblem p;
  p.dim = 2;
  p.initial = {3.0, -1.0};
  p.has_constraint = true;
  p.constraint_target = 1.0;  // mu_0 + mu_1 = 1
  p.evaluate = [](const Vector& mu) {
    OptEval e;
    e.objective = mu[0] * mu[0] + mu[1] * mu[1];
    e.objective_gradient = {2.0 * mu[0], 2.0 * mu[1]};
    e.constraint = mu[0] + mu[1];
    e.constraint_gradient = {1.0, 1.0};
    return e;
  };
  OptOptions opts;
  opts.constraint_tolerance = 1e-10;
  const OptResult r = minimize(p, opts);
  CHECK(r.status == OptStatus::converged);
  CHECK(std::abs(r.mu[0] - 0.5) <= 1e-8);
  CHECK(std::abs(r.mu[1] - 0.5) <= 1e-8);
  CHECK(r.constraint_violation <= 1e-10);
}

TEST_CASE("rosenbrock from the classic start") {
  OptProblem p;
  p.dim = 2;
  p.initial = {-1.2, 1.0};
  p.evaluate = [](const Vector& mu) {
    const double a = 1.0, b = 100.0;
    OptEval e;
    const double x = mu[0], y = mu[1];
    e.objective = (a - x) * (a - x) + b * (y - x * x) * (y - x * x);
    e.objective_gradient = {-2.0 * (a - x) - 4.0 * b * x * (y - x * x), 2.0 * b * (y - x * x)};
    return e;
  };
  OptOptions opts;
  opts.max_iterations = 500;
  opts.grad_tolerance = 1e-10;
  const OptResult r = minimize(p, opts);
  CHECK(std::abs(r.mu[0] - 1.0) <= 1e-6);
  CHECK(std::abs(r.mu[1] - 1.0) <= 1e-6);
}

TEST_CASE("bound constraints are honored and active sets converge") {
  OptProblem p = quadratic_1d();
  p.lower = {3.0};
  p.upper = {10.0};
  const OptResult r = minimize(p);
  CHECK(r.mu[0] == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("armijo: every accepted step decreases the merit after iteration 1") {
  OptProblem p;
  p.dim = 2;
  p.initial = {2.0, -3.0};
  p.evaluate = [](const Vector& mu) {
    OptEval e;
    e.objective = std::pow(mu[0] - 0.3, 4) + 2.0 * mu[1] * mu[1] + 0.5 * mu[0] * mu[1];
    e.objective_gradient = {4.0 * std::pow(mu[0] - 0.3, 3) + 0.5 * mu[1],
                            4.0 * mu[1] + 0.5 * mu[0]};
    return e;
  };
  const OptResult r = minimize(p);
  REQUIRE(r.trace.rows.size() >= 3);
  for (std::size_t i = 2; i < r.trace.rows.size(); ++i) {
    if (r.trace.rows[i].outer != r.trace.rows[i - 1].outer) continue;
    CHECK(r.trace.rows[i].merit <= r.trace.rows[i - 1].merit + 1e-14);
  }
}

TEST_CASE("quadratic accepts unit steps: one evaluation per iteration") {
  const OptResult r = minimize(quadratic_1d());
  // after the first steepest-descent step, L-BFGS captures the curvature and
  // each iteration consumes exactly one evaluator call
  int multi = 0;
  for (std::size_t i = 2; i < r.trace.rows.size(); ++i)
    if (r.trace.rows[i].evaluations > 1) ++multi;
  CHECK(multi == 0);
}

TEST_CASE("evaluator failure aborts with the trace after retries") {
  OptProblem p;
  p.dim = 1;
  p.initial = {1.0};
  p.evaluate = [](const Vector& mu) -> OptEval {
    if (mu[0] < 0.9) throw std::runtime_error("blow up");
    OptEval e;
    e.objective = mu[0] * mu[0];
    e.objective_gradient = {2.0 * mu[0]};
    return e;
  };
  OptOptions opts;
  opts.eval_retry_cap = 3;
  opts.max_backtracks = 8;
  const OptResult r = minimize(p, opts);
  CHECK(r.status == OptStatus::evaluator_failure);
  CHECK_FALSE(r.trace.rows.empty());
}
