// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fail. Tolerances are pinned here, not configurable.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "adjflow/adjoint.hpp"
#include "adjflow/analytic.hpp"
#include "adjflow/commands.hpp"
#include "adjflow/config.hpp"

using namespace adjflow;

namespace {

struct Harness {
  int failures = 0;
  void report(int id, const std::string& label, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", id, label.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

RunConfig load(const char* name) {
  return load_config(std::filesystem::path(ADJFLOW_CONFIG_DIR) / name);
}

struct GradCheckResult {
  double min_rel = 1e300;
};

GradCheckResult fd_sweep(const RunConfig& cfg, const Vector& mu0, const Vector& adj,
                         std::size_t qoi_index) {
  GradCheckResult out;
  for (double tau : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    double worst = 0.0;
    bool ok = true;
    try {
      for (std::size_t j = 0; j < mu0.size(); ++j) {
        auto f = [&](double x) {
          Vector m = mu0;
          m[j] = x;
          return detail::primal_qoi_values(cfg, m)[qoi_index];
        };
        const double fd = (-f(mu0[j] + 2 * tau) + 8 * f(mu0[j] + tau) - 8 * f(mu0[j] - tau) +
                           f(mu0[j] - 2 * tau)) /
                          (12 * tau);
        worst = std::max(worst, std::abs(adj[j] - fd) / std::max(std::abs(fd), 1e-300));
      }
    } catch (const std::exception&) {
      ok = false;  // perturbation of this size degenerates the mapping
    }
    if (ok) out.min_rel = std::min(out.min_rel, worst);
  }
  return out;
}

double dual_consistency_error(const SemiDiscreteSystem& sys, const ButcherTableau& tab,
                              const TimeGrid& grid, const Vector& mu,
                              std::span<const DiscreteQoi> qois, const NewtonOptions& newton) {
  MemoryCheckpointStore store;
  IntegrateOptions iopts;
  iopts.newton = newton;
  integrate(sys, tab, grid, mu, qois, store, iopts);
  const auto adj = adjoint_gradient(sys, tab, grid, mu, qois, store);
  const auto fwd = forward_sensitivity(sys, tab, grid, mu, qois, store);
  double worst = 0.0;
  for (std::size_t q = 0; q < qois.size(); ++q) {
    const double scl = std::max(norm_inf(fwd[q]), 1e-300);
    for (std::size_t j = 0; j < fwd[q].size(); ++j)
      worst = std::max(worst, std::abs(adj.gradients[q].value[j] - fwd[q][j]) / scl);
  }
  return worst;
}

double fit_slope(const std::vector<double>& h, const std::vector<double>& e) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(h.size());
  for (int i = 0; i < m; ++i) {
    sx += std::log(h[i]);
    sy += std::log(e[i]);
    sxx += std::log(h[i]) * std::log(h[i]);
    sxy += std::log(h[i]) * std::log(e[i]);
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

std::shared_ptr<const QoiIntegrand> scalar_energy_integrand() {
  return std::make_shared<CallbackIntegrand>(
      [](const Vector& u, const Vector&, double) { return u[0] * u[0]; },
      [](const Vector& u, const Vector&, double) { return Vector{2.0 * u[0]}; },
      [](const Vector&, const Vector& mu, double) { return Vector(mu.size(), 0.0); });
}

}  // namespace

int main() {
  Harness h;
  const auto t_suite = std::chrono::steady_clock::now();

  // --- 1: adjoint gradient vs 4th-order finite differences ------------------
  {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load("control.json");
    const Vector mu0 = cfg.mapping.signal.knot_values;
    MemoryCheckpointStore store;
    const detail::FullEval ev = detail::evaluate_full(cfg, mu0, store);
    double worst_min = 0.0;
    for (std::size_t q = 0; q < cfg.qois.size() && q < 2; ++q) {  // work, energy
      const GradCheckResult r = fd_sweep(cfg, mu0, ev.gradients[q].value, q);
      worst_min = std::max(worst_min, r.min_rel);
    }
    const double dt = seconds_since(t0);
    h.report(1, "adjoint gradient matches 4th-order FD on the control problem",
             worst_min <= 1e-6 && dt <= 120.0,
             "min-over-tau rel error " + str(worst_min) + " (limit 1e-6), " + str(dt) + "s");
  }

  // --- 2: dual consistency (adjoint == forward sensitivity) -----------------
  {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;

    {  // scalar system, mu-dependent IC, two QoIs
      ScalarDecaySystem sys(1.0, 2, true);
      const auto tab = make_tableau(DirkScheme::dirk3);
      const auto grid = TimeGrid::uniform(0.0, 1.0, 8);
      std::vector<DiscreteQoi> qois;
      qois.emplace_back(QoiSpec{"energy", QoiWeight::uniform, 0.0, 0.0, scalar_energy_integrand()},
                        grid, tab);
      qois.emplace_back(
          QoiSpec{"terminal", QoiWeight::time_impulse, 1.0, 0.0, scalar_energy_integrand()}, grid,
          tab);
      worst = std::max(worst,
                       dual_consistency_error(sys, tab, grid, {1.3, 0.8}, qois, NewtonOptions{}));
    }

    for (bool gcl : {false, true}) {  // dg1d with and without GCL augmentation
      RunConfig cfg = load("control.json");
      cfg.mapping.gcl = gcl;
      cfg.problem.gcl = gcl ? GclMode::on : GclMode::off;
      const Vector mu0 = cfg.mapping.signal.knot_values;
      const ProblemInstance inst = instantiate(cfg, mu0);
      worst = std::max(worst, dual_consistency_error(*inst.sys, make_tableau(cfg.scheme),
                                                     build_grid(cfg), mu0, inst.qois, cfg.newton));
    }
    const double dt = seconds_since(t0);
    h.report(2, "adjoint equals forward-sensitivity gradient on every shipped system",
             worst <= 1e-12 && dt <= 60.0,
             "componentwise rel error " + str(worst) + " (limit 1e-12), " + str(dt) + "s");
  }

  // --- 3: Lagrangian stationarity -------------------------------------------
  {
    const RunConfig cfg = load("control.json");
    const Vector mu0 = cfg.mapping.signal.knot_values;
    const ProblemInstance inst = instantiate(cfg, mu0);
    const auto tab = make_tableau(cfg.scheme);
    const auto grid = build_grid(cfg);
    MemoryCheckpointStore store;
    IntegrateOptions iopts;
    iopts.newton = cfg.newton;
    integrate(*inst.sys, tab, grid, mu0, inst.qois, store, iopts);
    const auto duals = adjoint_sweep(*inst.sys, tab, grid, mu0, inst.qois, store);
    double worst = 0.0;
    for (std::size_t q = 0; q < inst.qois.size(); ++q) {
      const auto lr = lagrangian_residuals(*inst.sys, tab, grid, mu0, inst.qois[q], duals[q], store);
      const double bound = 1e-10 * (1.0 + lr.lambda_inf);
      worst = std::max(worst, std::max(lr.max_state, lr.max_stage) / bound);
    }
    h.report(3, "Lagrangian partials vanish at the computed primal/dual pair", worst <= 1.0,
             "worst residual at " + str(worst) + " of the 1e-10(1+|lambda|) budget");
  }

  // --- 4: GCL freestream preservation ----------------------------------------
  {
    const RunConfig base = load("gcl_check.json");
    const auto tab = make_tableau(base.scheme);
    const auto grid = build_grid(base);
    double err_on = 0.0, err_off = 0.0;
    for (bool gcl : {true, false}) {
      RunConfig cfg = base;
      cfg.mapping.gcl = gcl;
      cfg.problem.gcl = gcl ? GclMode::on : GclMode::off;
      const ProblemInstance inst = instantiate(cfg, {});
      MemoryCheckpointStore store;
      IntegrateOptions iopts;
      iopts.newton = cfg.newton;
      integrate(*inst.sys, tab, grid, {}, inst.qois, store, iopts);
      auto reader = store.open_forward(make_layout(*inst.sys, tab, grid));
      double worst = 0.0;
      for (int n = 1; n <= grid.steps(); ++n) {
        const Vector w = inst.sys->physical_from_conserved(reader->read_state(n), {}, grid.time(n));
        for (double v : w) worst = std::max(worst, std::abs(v - cfg.problem.ic.value));
      }
      (gcl ? err_on : err_off) = worst;
    }
    h.report(4, "freestream preserved with GCL, violated without", err_on <= 1e-12 && err_off >= 1e-8,
             "gcl on " + str(err_on) + " (limit 1e-12), gcl off " + str(err_off) + " (must be >= 1e-8)");
  }

  // --- 5: temporal order + closed-form linear cases ---------------------------
  {
    const double expected[3] = {0.9, 1.8, 2.7};
    bool pass = true;
    std::string detail;
    const double mu = 1.0, t_end = 1.0;
    int idx = 0;
    for (auto kind : {DirkScheme::dirk1, DirkScheme::dirk2, DirkScheme::dirk3}) {
      const auto tab = make_tableau(kind);
      ScalarDecaySystem sys;
      std::vector<double> hs, errs;
      double discrete_mismatch = 0.0;
      for (int steps : {4, 8, 16, 32, 64}) {
        const auto grid = TimeGrid::uniform(0.0, t_end, steps);
        MemoryCheckpointStore store;
        const auto res = integrate(sys, tab, grid, {mu}, {}, store);
        hs.push_back(t_end / steps);
        errs.push_back(std::abs(res.final_state[0] - std::exp(-mu * t_end)));
        const double exact_discrete =
            std::pow(stability_function(tab, -mu * t_end / steps), steps);
        discrete_mismatch =
            std::max(discrete_mismatch, std::abs(res.final_state[0] - exact_discrete));
      }
      const double slope = fit_slope(hs, errs);
      if (slope < expected[idx] || discrete_mismatch > 1e-13) pass = false;
      detail += std::string(to_string(kind)) + " slope " + str(slope) + " (need >= " +
                str(expected[idx]) + ") exact-to " + str(discrete_mismatch) + "; ";
      ++idx;
    }
    h.report(5, "DIRK temporal orders and closed-form linear solutions", pass, detail);
  }

  // --- 6: spatial order -------------------------------------------------------
  {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;
    const double t_end = 0.4;
    for (int p : {1, 2, 3}) {
      std::vector<double> hs, errs;
      for (int k_elems : {4, 8, 16, 32}) {
        Dg1dOptions opts;
        opts.flux = FluxKind::advection_diffusion;
        opts.advection_speed = 1.0;
        opts.viscosity = 0.0;
        opts.elements = k_elems;
        opts.order = p;
        opts.bc.left_kind = opts.bc.right_kind = DirichletBc::Kind::advection_sine;
        opts.bc.wavenumber = 1.0;
        opts.bc.speed = 1.0;
        opts.ic.kind = InitialSpec::Kind::sine;
        opts.ic.value = 0.0;
        auto sys = std::make_shared<Dg1dSystem>(opts, std::make_shared<StaticMapping>(0));
        const auto tab = make_tableau(DirkScheme::dirk3);
        const auto grid = TimeGrid::uniform(0.0, t_end, 200);
        MemoryCheckpointStore store;
        const auto res = integrate(*sys, tab, grid, {}, {}, store);
        hs.push_back(1.0 / k_elems);
        errs.push_back(sys->l2_error(res.final_state, {}, t_end, [&](double x) {
          return std::sin(2.0 * M_PI * (x - t_end));
        }));
      }
      const double slope = fit_slope(hs, errs);
      if (slope < p + 0.5) pass = false;
      detail += "p" + std::to_string(p) + " slope " + str(slope) + "; ";
    }
    detail += str(seconds_since(t0)) + "s";
    h.report(6, "DG spatial orders exceed p + 1/2", pass, detail);
  }

  // --- 7: solver-consistent functional exactness ------------------------------
  {
    ScalarDecaySystem sys;
    const auto tab = make_tableau(DirkScheme::dirk3);
    const double t_end = 1.7;
    const auto grid = TimeGrid::uniform(0.0, t_end, 13);
    auto unit = std::make_shared<CallbackIntegrand>(
        [](const Vector&, const Vector&, double) { return 1.0; },
        [](const Vector& u, const Vector&, double) { return Vector(u.size(), 0.0); },
        [](const Vector&, const Vector& mu, double) { return Vector(mu.size(), 0.0); });
    auto tsq = std::make_shared<CallbackIntegrand>(
        [](const Vector&, const Vector&, double t) { return t * t; },
        [](const Vector& u, const Vector&, double) { return Vector(u.size(), 0.0); },
        [](const Vector&, const Vector& mu, double) { return Vector(mu.size(), 0.0); });
    std::vector<DiscreteQoi> qois;
    qois.emplace_back(QoiSpec{"one", QoiWeight::uniform, 0.0, 0.0, unit}, grid, tab);
    qois.emplace_back(QoiSpec{"tsq", QoiWeight::uniform, 0.0, 0.0, tsq}, grid, tab);
    MemoryCheckpointStore store;
    const auto res = integrate(sys, tab, grid, {1.0}, qois, store);
    const double err_one = std::abs(res.qoi_values[0] - t_end);
    const double err_tsq = std::abs(res.qoi_values[1] - t_end * t_end * t_end / 3.0);
    h.report(7, "solver-consistent QoI: F[1] = T and F[t^2] = T^3/3",
             err_one <= 1e-13 * std::max(1.0, t_end) && err_tsq <= 1e-13,
             "|F[1]-T| " + str(err_one) + ", |F[t^2]-T^3/3| " + str(err_tsq) + " (limits 1e-13)");
  }

  // --- 8: tableau identities ---------------------------------------------------
  {
    const auto tab = make_tableau(DirkScheme::dirk3);
    const auto v = validate(tab);
    double worst = 0.0;
    for (const auto& c : v.checks) worst = std::max(worst, c.error);
    const double closure = std::abs(tab.b[0] + tab.b[1] + tab.b[2] - 1.0);
    h.report(8, "dirk3 satisfies all order-3 conditions and gamma+omega+alpha = 1",
             v.all_pass() && closure <= 1e-13,
             "worst condition error " + str(std::max(worst, closure)) + " (limit 1e-13)");
  }

  // --- 9: optimization analogs ----------------------------------------------
  {
    const auto t0 = std::chrono::steady_clock::now();
    // bounds-only: minimize the work analog over mission trajectories
    const RunConfig cfg_b = load("optimize_bounds.json");
    double nominal = 0.0, optimal = 0.0;
    OptStatus status_b;
    {
      const Vector mu0 = cfg_b.mapping.signal.knot_values;
      nominal = detail::primal_qoi_values(cfg_b, mu0)[0];
      OptProblem prob;
      prob.dim = cfg_b.num_params();
      prob.initial = mu0;
      prob.lower = Vector(prob.dim, cfg_b.optimize->lower);
      prob.upper = Vector(prob.dim, cfg_b.optimize->upper);
      prob.evaluate = [&](const Vector& m) {
        MemoryCheckpointStore store;
        const detail::FullEval ev = detail::evaluate_full(cfg_b, m, store);
        OptEval out;
        out.objective = ev.primal.qoi_values[0];
        out.objective_gradient = ev.gradients[0].value;
        return out;
      };
      OptOptions opts;
      opts.max_iterations = cfg_b.optimize->max_iterations;
      opts.grad_tolerance = cfg_b.optimize->grad_tolerance;
      const OptResult r = minimize(prob, opts);
      optimal = r.objective;
      status_b = r.status;
    }
    const double reduction = (nominal - optimal) / std::abs(nominal);

    // equality-constrained: same driver under an augmented Lagrangian
    const RunConfig cfg_c = load("optimize_constrained.json");
    double violation = 1e300, w_con = 0.0;
    OptStatus status_c;
    {
      OptProblem prob;
      prob.dim = cfg_c.num_params();
      prob.initial = cfg_c.mapping.signal.knot_values;
      prob.lower = Vector(prob.dim, cfg_c.optimize->lower);
      prob.upper = Vector(prob.dim, cfg_c.optimize->upper);
      prob.has_constraint = true;
      prob.constraint_target = cfg_c.optimize->constraint_target;
      prob.evaluate = [&](const Vector& m) {
        MemoryCheckpointStore store;
        const detail::FullEval ev = detail::evaluate_full(cfg_c, m, store);
        OptEval out;
        out.objective = ev.primal.qoi_values[0];
        out.objective_gradient = ev.gradients[0].value;
        out.constraint = ev.primal.qoi_values[1];
        out.constraint_gradient = ev.gradients[1].value;
        return out;
      };
      OptOptions opts;
      opts.max_iterations = cfg_c.optimize->max_iterations;
      opts.grad_tolerance = cfg_c.optimize->grad_tolerance;
      opts.constraint_tolerance = cfg_c.optimize->constraint_tolerance;
      const OptResult r = minimize(prob, opts);
      violation = r.constraint_violation;
      w_con = r.objective;
      status_c = r.status;
    }
    const double dt = seconds_since(t0);
    h.report(9, "optimization: work reduced >= 50% (bounds) and constraint to 1e-8 (equality)",
             reduction >= 0.5 && violation <= 1e-8 && dt <= 1800.0 &&
                 status_b == OptStatus::converged && status_c == OptStatus::converged,
             "reduction " + str(100.0 * reduction) + "% (W " + str(nominal) + " -> " +
                 str(optimal) + "); constrained W " + str(w_con) + " |E-q| " + str(violation) +
                 " (limit 1e-8), " + str(dt) + "s");
  }

  // --- 10: checkpoint integrity ------------------------------------------------
  {
    namespace fs = std::filesystem;
    bool roundtrip_ok = true;
    {
      const fs::path path = fs::temp_directory_path() / "adjflow_acceptance_roundtrip.ckpt";
      StoreLayout layout;
      layout.n_u = 60;
      layout.stages = 3;
      layout.n_steps = 10;
      layout.times.resize(11);
      for (int n = 0; n <= 10; ++n) layout.times[n] = 0.1 * n;
      std::mt19937 rng(2024);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      std::vector<Vector> written;
      FileCheckpointStore store(path);
      auto w = store.open_write(layout);
      auto rand_vec = [&]() {
        Vector v(layout.n_u);
        for (double& x : v) x = dist(rng);
        return v;
      };
      written.push_back(rand_vec());
      w->write_initial(written.back());
      for (int n = 1; n <= 10; ++n) {
        for (int i = 1; i <= 3; ++i) {
          written.push_back(rand_vec());
          w->write_stage(n, i, written.back());
        }
        written.push_back(rand_vec());
        w->write_state(n, written.back());
      }
      w->finish();
      auto r = store.open_reverse(layout);
      if (r->final_state() != written.back()) roundtrip_ok = false;
      std::size_t rec = written.size() - 1;
      for (int n = 10; n >= 1; --n) {
        const StepBundle b = r->read_step(n);
        rec -= 4;
        if (b.u_prev != written[rec]) roundtrip_ok = false;
        for (int i = 0; i < 3; ++i)
          if (b.stages[i] != written[rec + 1 + i]) roundtrip_ok = false;
      }
      fs::remove(path);
    }

    // disk-backed vs in-memory adjoint gradient, bit identical
    RunConfig cfg = load("control.json");
    cfg.steps = 10;
    const Vector mu0 = cfg.mapping.signal.knot_values;
    const ProblemInstance inst = instantiate(cfg, mu0);
    const auto tab = make_tableau(cfg.scheme);
    const auto grid = build_grid(cfg);
    IntegrateOptions iopts;
    iopts.newton = cfg.newton;

    MemoryCheckpointStore mem;
    integrate(*inst.sys, tab, grid, mu0, inst.qois, mem, iopts);
    const auto gm = adjoint_gradient(*inst.sys, tab, grid, mu0, inst.qois, mem);

    const fs::path ck = fs::temp_directory_path() / "adjflow_acceptance_adjoint.ckpt";
    FileCheckpointStore file(ck);
    integrate(*inst.sys, tab, grid, mu0, inst.qois, file, iopts);
    const auto gf = adjoint_gradient(*inst.sys, tab, grid, mu0, inst.qois, file);
    fs::remove(ck);

    bool bitwise = true;
    for (std::size_t q = 0; q < inst.qois.size(); ++q)
      for (int j = 0; j < inst.sys->num_params(); ++j)
        if (gm.gradients[q].value[j] != gf.gradients[q].value[j]) bitwise = false;

    h.report(10, "checkpoint round trip bit-exact; disk and memory adjoints identical",
             roundtrip_ok && bitwise,
             std::string("roundtrip ") + (roundtrip_ok ? "exact" : "MISMATCH") +
                 ", gradients " + (bitwise ? "bit-identical" : "DIFFER"));
  }

  std::printf("acceptance: %s (%d failure%s, %.1fs total)\n", h.failures == 0 ? "PASS" : "FAIL",
              h.failures, h.failures == 1 ? "" : "s", seconds_since(t_suite));
  return h.failures == 0 ? 0 : 1;
}
