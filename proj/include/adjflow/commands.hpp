// CLI command implementations. Each command is a library function so tests
// can drive it directly; the binary in tools/ is a thin argument parser.
// Every artifact starts with the config hash for reproducibility.
#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <json.hpp>

#include "adjflow/adjoint.hpp"
#include "adjflow/analytic.hpp"
#include "adjflow/config.hpp"
#include "adjflow/optimize.hpp"
#include "adjflow/primal.hpp"

namespace adjflow {

struct CommandContext {
  std::filesystem::path out_dir;
  int threads = 1;
  int log_level = 0;  // ADJFLOW_LOG
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& hash) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    out_ << "# config_hash=" << hash << "\n";
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

inline double fit_slope(const std::vector<double>& h, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(h.size());
  for (int i = 0; i < m; ++i) {
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

struct FullEval {
  PrimalResult primal;
  std::vector<Gradient> gradients;
};

/// One primal solve plus one adjoint batch at mu; objective and constraint
/// gradients come from the same trajectory.
inline FullEval evaluate_full(const RunConfig& cfg, const Vector& mu, CheckpointStore& store) {
  const ProblemInstance inst = instantiate(cfg, mu);
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);
  IntegrateOptions iopts;
  iopts.newton = cfg.newton;
  FullEval out;
  out.primal = integrate(*inst.sys, tab, grid, mu, inst.qois, store, iopts);
  out.gradients = adjoint_gradient(*inst.sys, tab, grid, mu, inst.qois, store).gradients;
  return out;
}

inline Vector primal_qoi_values(const RunConfig& cfg, const Vector& mu) {
  const ProblemInstance inst = instantiate(cfg, mu);
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);
  IntegrateOptions iopts;
  iopts.newton = cfg.newton;
  MemoryCheckpointStore store;
  return integrate(*inst.sys, tab, grid, mu, inst.qois, store, iopts).qoi_values;
}

}  // namespace detail

inline int cmd_simulate(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  const Vector mu0 = cfg.mapping.signal.knot_values;

  const ProblemInstance inst = instantiate(cfg, mu0);
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);

  FileCheckpointStore store(ctx.out_dir / "primal.ckpt");
  std::ofstream progress(ctx.out_dir / "progress.log");
  progress << "# config_hash=" << cfg.config_hash << "\n";
  IntegrateOptions iopts;
  iopts.newton = cfg.newton;
  iopts.progress = [&](const StepLog& log) {
    progress << log.step << "," << detail::fmt(log.t) << "," << log.newton_iterations;
    for (double f : log.qoi_running) progress << "," << detail::fmt(f);
    progress << "\n";
    if (ctx.log_level >= 2) std::cerr << "step " << log.step << " t=" << log.t << "\n";
  };

  const PrimalResult res = integrate(*inst.sys, tab, grid, mu0, inst.qois, store, iopts);

  {
    detail::CsvWriter csv(ctx.out_dir / "qoi_history.csv", cfg.config_hash);
    std::vector<std::string> cols = {"t"};
    for (const auto& n : inst.qoi_names) {
      cols.push_back("f_" + n);
      cols.push_back("F_" + n);
    }
    csv.header(cols);
    for (const auto& row : res.history) {
      std::vector<std::string> cells = {detail::fmt(row.t)};
      for (std::size_t q = 0; q < inst.qoi_names.size(); ++q) {
        cells.push_back(detail::fmt(row.instantaneous[q]));
        cells.push_back(detail::fmt(row.running[q]));
      }
      csv.row(cells);
    }
  }

  // solution snapshots (X, x, u) read back from the checkpoint file
  if (cfg.snapshot_every > 0) {
    auto reader = store.open_forward(make_layout(*inst.sys, tab, grid));
    const Mesh1d& mesh = inst.sys->mesh();
    auto snap = [&](int n, const Vector& state) {
      char name[32];
      std::snprintf(name, sizeof name, "snap_%04d.csv", n);
      detail::CsvWriter csv(ctx.out_dir / name, cfg.config_hash);
      csv.header({"X", "x", "u"});
      const double t = grid.time(n);
      const Vector w = inst.sys->physical_from_conserved(state, mu0, t);
      const Vector x = inst.sys->physical_nodes(mu0, t);
      for (int g = 0; g < inst.sys->dim(); ++g) {
        const int e = g / mesh.nodes_per_element();
        const int j = g % mesh.nodes_per_element();
        csv.row({detail::fmt(mesh.node_coord(e, j)), detail::fmt(x[g]), detail::fmt(w[g])});
      }
    };
    snap(0, reader->initial_state());
    for (int n = 1; n <= grid.steps(); ++n) {
      const Vector state = reader->read_state(n);
      if (n % cfg.snapshot_every == 0 || n == grid.steps()) snap(n, state);
    }
  }

  json summary;
  summary["config_hash"] = cfg.config_hash;
  summary["newton_iterations"] = res.total_newton_iterations;
  for (std::size_t q = 0; q < inst.qoi_names.size(); ++q)
    summary["qoi"][inst.qoi_names[q]] = res.qoi_values[q];
  detail::write_json(ctx.out_dir / "run.json", summary);
  if (ctx.log_level >= 1)
    std::cerr << "simulate: " << grid.steps() << " steps, " << res.total_newton_iterations
              << " newton iterations\n";
  return 0;
}

inline int cmd_adjoint(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  const Vector mu0 = cfg.mapping.signal.knot_values;
  const ProblemInstance inst = instantiate(cfg, mu0);
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);

  FileCheckpointStore store(ctx.out_dir / "primal.ckpt");
  if (!fs::exists(store.path())) {
    IntegrateOptions iopts;
    iopts.newton = cfg.newton;
    integrate(*inst.sys, tab, grid, mu0, inst.qois, store, iopts);
  }

  const auto duals = adjoint_sweep(*inst.sys, tab, grid, mu0, inst.qois, store);
  const auto grads =
      reconstruct_gradient(*inst.sys, tab, grid, mu0, inst.qois, duals, store);

  json out;
  out["config_hash"] = cfg.config_hash;
  json report;
  report["config_hash"] = cfg.config_hash;
  for (std::size_t q = 0; q < inst.qois.size(); ++q) {
    json rec;
    for (int j = 0; j < inst.sys->num_params(); ++j) {
      json g;
      g["param"] = j;
      g["value"] = grads[q].value[j];
      g["partial_term"] = grads[q].breakdown.partial_term[j];
      g["ic_term"] = grads[q].breakdown.ic_term[j];
      g["stage_term"] = grads[q].breakdown.stage_term[j];
      rec.push_back(g);
    }
    out["gradients"][inst.qoi_names[q]] = rec;

    const auto lr =
        lagrangian_residuals(*inst.sys, tab, grid, mu0, inst.qois[q], duals[q], store);
    json lrj;
    lrj["max_state_residual"] = lr.max_state;
    lrj["max_stage_residual"] = lr.max_stage;
    lrj["lambda_inf"] = lr.lambda_inf;
    report["lagrangian"][inst.qoi_names[q]] = lrj;

    // persist the dual trajectory in the checkpoint record scheme
    FileCheckpointStore dual_store(ctx.out_dir / ("dual_" + inst.qoi_names[q] + ".ckpt"));
    auto w = dual_store.open_write(make_layout(*inst.sys, tab, grid));
    w->write_initial(duals[q].lambda[0]);
    for (int n = 1; n <= grid.steps(); ++n) {
      for (int i = 1; i <= tab.stages; ++i) w->write_stage(n, i, duals[q].kappa[n - 1][i - 1]);
      w->write_state(n, duals[q].lambda[n]);
    }
    w->finish();
  }
  detail::write_json(ctx.out_dir / "gradient.json", out);
  detail::write_json(ctx.out_dir / "dual_report.json", report);
  return 0;
}

inline int cmd_grad_check(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  const Vector mu0 = cfg.mapping.signal.knot_values;
  const int n_mu = static_cast<int>(mu0.size());
  if (n_mu == 0) throw ConfigError("grad-check needs a parametrized mapping");

  std::size_t qoi_index = 0;
  if (!cfg.grad_check.qoi.empty()) {
    qoi_index = cfg.qois.size();
    for (std::size_t q = 0; q < cfg.qois.size(); ++q)
      if (cfg.qois[q].name == cfg.grad_check.qoi) qoi_index = q;
    if (qoi_index == cfg.qois.size())
      throw ConfigError("grad_check.qoi '" + cfg.grad_check.qoi + "' is not registered");
  }

  MemoryCheckpointStore store;
  const detail::FullEval eval = detail::evaluate_full(cfg, mu0, store);
  const Vector& adj = eval.gradients[qoi_index].value;

  detail::CsvWriter csv(ctx.out_dir / "grad_check.csv", cfg.config_hash);
  std::vector<std::string> cols = {"tau", "max_rel_error"};
  for (int j = 0; j < n_mu; ++j) cols.push_back("rel_error_" + std::to_string(j));
  csv.header(cols);

  double best = 1e300;
  for (double tau : cfg.grad_check.fd_steps) {
    double worst = 0.0;
    std::vector<double> rels(n_mu, std::nan(""));
    bool ok = true;
    try {
      for (int j = 0; j < n_mu; ++j) {
        auto f = [&](double x) {
          Vector m = mu0;
          m[j] = x;
          return detail::primal_qoi_values(cfg, m)[qoi_index];
        };
        const double fd = (-f(mu0[j] + 2 * tau) + 8 * f(mu0[j] + tau) - 8 * f(mu0[j] - tau) +
                           f(mu0[j] - 2 * tau)) /
                          (12 * tau);
        const double rel = std::abs(adj[j] - fd) / std::max(std::abs(fd), 1e-300);
        rels[j] = rel;
        worst = std::max(worst, rel);
      }
    } catch (const std::exception& e) {
      // a perturbation of this size broke the solve (degenerate map etc);
      // record the tau as unusable and keep sweeping
      ok = false;
      if (ctx.log_level >= 1) std::cerr << "grad-check tau=" << tau << " failed: " << e.what() << "\n";
    }
    if (ok) best = std::min(best, worst);
    std::vector<std::string> cells = {detail::fmt(tau), ok ? detail::fmt(worst) : "nan"};
    for (int j = 0; j < n_mu; ++j) cells.push_back(ok ? detail::fmt(rels[j]) : "nan");
    csv.row(cells);
    if (ctx.log_level >= 1 && ok)
      std::cerr << "grad-check tau=" << tau << " max rel error " << worst << "\n";
  }

  json out;
  out["config_hash"] = cfg.config_hash;
  out["qoi"] = cfg.qois[qoi_index].name;
  out["min_over_tau_rel_error"] = best;
  detail::write_json(ctx.out_dir / "grad_check.json", out);
  std::cout << "grad-check min-over-tau relative error: " << best << "\n";
  return best <= 1e-6 ? 0 : 1;
}

inline int cmd_order_study(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  json summary;
  summary["config_hash"] = cfg.config_hash;

  if (cfg.order_study.axis == OrderStudyConfig::Axis::temporal) {
    // smooth scalar problem u' = -u, closed-form reference
    detail::CsvWriter csv(ctx.out_dir / "order_temporal.csv", cfg.config_hash);
    csv.header({"scheme", "steps", "dt", "error"});
    const double t_end = cfg.t_final;
    const double exact = std::exp(-t_end);
    for (auto kind : {DirkScheme::dirk1, DirkScheme::dirk2, DirkScheme::dirk3}) {
      const auto tab = make_tableau(kind);
      ScalarDecaySystem sys;
      std::vector<double> hs, errs;
      for (int r = 0; r < cfg.order_study.refinements; ++r) {
        const int steps = cfg.order_study.base_steps << r;
        const auto grid = TimeGrid::uniform(0.0, t_end, steps);
        MemoryCheckpointStore store;
        const auto res = integrate(sys, tab, grid, {1.0}, {}, store);
        const double err = std::abs(res.final_state[0] - exact);
        hs.push_back(t_end / steps);
        errs.push_back(err);
        csv.row({to_string(kind), std::to_string(steps), detail::fmt(t_end / steps),
                 detail::fmt(err)});
      }
      summary["slopes"][to_string(kind)] = detail::fit_slope(hs, errs);
    }
  } else {
    if (cfg.problem.flux != FluxKind::advection_diffusion || cfg.problem.viscosity != 0.0)
      throw ConfigError(
          "spatial order study requires flux=advection_diffusion with zero viscosity");
    detail::CsvWriter csv(ctx.out_dir / "order_spatial.csv", cfg.config_hash);
    csv.header({"order", "elements", "h", "l2_error"});
    const double t_end = cfg.t_final;
    const double a = cfg.problem.advection_speed;

    struct Case {
      int p, k;
      double err = 0.0;
    };
    std::vector<Case> cases;
    for (int p : {1, 2, 3})
      for (int r = 0; r < cfg.order_study.refinements; ++r)
        cases.push_back({p, cfg.order_study.base_elements << r});

    auto run_case = [&](Case& c) {
      Dg1dOptions opts = cfg.problem;
      opts.elements = c.k;
      opts.order = c.p;
      opts.bc.left_kind = opts.bc.right_kind = DirichletBc::Kind::advection_sine;
      opts.bc.wavenumber = 1.0;
      opts.bc.speed = a;
      opts.ic.kind = InitialSpec::Kind::sine;
      opts.ic.value = 0.0;
      opts.ic.amplitude = 1.0;
      opts.ic.wavenumber = 1.0;
      opts.gcl = GclMode::off;
      auto sys = std::make_shared<Dg1dSystem>(opts, std::make_shared<StaticMapping>(0));
      const auto tab = make_tableau(cfg.scheme);
      const auto grid = TimeGrid::uniform(0.0, t_end, cfg.order_study.time_steps);
      MemoryCheckpointStore store;
      IntegrateOptions iopts;
      iopts.newton = cfg.newton;
      const auto res = integrate(*sys, tab, grid, {}, {}, store, iopts);
      c.err = sys->l2_error(res.final_state, {}, t_end, [&](double x) {
        return std::sin(2.0 * M_PI * (x - a * t_end));
      });
    };

    // fan out over worker threads with disjoint cases
    const int workers = std::max(1, ctx.threads);
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex m;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t mine;
          {
            std::lock_guard<std::mutex> lock(m);
            if (next >= cases.size()) return;
            mine = next++;
          }
          run_case(cases[mine]);
        }
      });
    for (auto& th : pool) th.join();

    for (int p : {1, 2, 3}) {
      std::vector<double> hs, errs;
      for (const Case& c : cases)
        if (c.p == p) {
          hs.push_back(1.0 / c.k);
          errs.push_back(c.err);
          csv.row({std::to_string(c.p), std::to_string(c.k), detail::fmt(1.0 / c.k),
                   detail::fmt(c.err)});
        }
      summary["slopes"]["p" + std::to_string(p)] = detail::fit_slope(hs, errs);
    }
  }
  detail::write_json(ctx.out_dir / "order_study.json", summary);
  std::cout << "order-study slopes: " << summary["slopes"].dump() << "\n";
  return 0;
}

inline int cmd_gcl_check(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  if (cfg.problem.ic.kind != InitialSpec::Kind::constant ||
      cfg.problem.bc.left_kind != DirichletBc::Kind::constant ||
      cfg.problem.bc.right_kind != DirichletBc::Kind::constant ||
      cfg.problem.bc.left_value != cfg.problem.ic.value ||
      cfg.problem.bc.right_value != cfg.problem.ic.value)
    throw ConfigError("gcl-check needs a constant initial state matching both boundary values");

  const double freestream = cfg.problem.ic.value;
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);
  const Vector mu0 = cfg.mapping.signal.knot_values;

  detail::CsvWriter csv(ctx.out_dir / "gcl_check.csv", cfg.config_hash);
  csv.header({"gcl", "step", "t", "max_error"});

  double err_on = 0.0, err_off = 0.0;
  for (bool gcl : {true, false}) {
    RunConfig variant = cfg;
    variant.mapping.gcl = gcl;
    variant.problem.gcl = gcl ? GclMode::on : GclMode::off;
    const ProblemInstance inst = instantiate(variant, mu0);
    MemoryCheckpointStore store;
    IntegrateOptions iopts;
    iopts.newton = cfg.newton;
    integrate(*inst.sys, tab, grid, mu0, inst.qois, store, iopts);
    auto reader = store.open_forward(make_layout(*inst.sys, tab, grid));
    double worst = 0.0;
    for (int n = 1; n <= grid.steps(); ++n) {
      reader->read_step_forward(n);
      const Vector state = reader->read_state(n);
      const Vector w = inst.sys->physical_from_conserved(state, mu0, grid.time(n));
      double e = 0.0;
      for (double v : w) e = std::max(e, std::abs(v - freestream));
      worst = std::max(worst, e);
      csv.row({gcl ? "on" : "off", std::to_string(n), detail::fmt(grid.time(n)),
               detail::fmt(e)});
    }
    (gcl ? err_on : err_off) = worst;
  }

  json out;
  out["config_hash"] = cfg.config_hash;
  out["freestream_error_gcl_on"] = err_on;
  out["freestream_error_gcl_off"] = err_off;
  detail::write_json(ctx.out_dir / "gcl_check.json", out);
  std::cout << "gcl-check: freestream error on=" << err_on << " off=" << err_off << "\n";
  return err_on <= 1e-12 ? 0 : 1;
}

inline int cmd_optimize(const RunConfig& cfg, const CommandContext& ctx) {
  namespace fs = std::filesystem;
  fs::create_directories(ctx.out_dir);
  if (!cfg.optimize) throw ConfigError("config has no optimize block");
  const OptimizeConfig& oc = *cfg.optimize;

  int obj_idx = -1, con_idx = -1;
  for (std::size_t q = 0; q < cfg.qois.size(); ++q) {
    if (cfg.qois[q].name == oc.objective) obj_idx = static_cast<int>(q);
    if (!oc.constraint_qoi.empty() && cfg.qois[q].name == oc.constraint_qoi)
      con_idx = static_cast<int>(q);
  }
  if (obj_idx < 0) throw ConfigError("objective qoi '" + oc.objective + "' is not registered");
  if (!oc.constraint_qoi.empty() && con_idx < 0)
    throw ConfigError("constraint qoi '" + oc.constraint_qoi + "' is not registered");

  OptProblem prob;
  prob.dim = cfg.num_params();
  prob.initial = cfg.mapping.signal.knot_values;
  prob.lower = Vector(prob.dim, oc.lower);
  prob.upper = Vector(prob.dim, oc.upper);
  prob.has_constraint = con_idx >= 0;
  prob.constraint_target = oc.constraint_target;
  prob.evaluate = [&](const Vector& mu) {
    MemoryCheckpointStore store;
    const detail::FullEval ev = detail::evaluate_full(cfg, mu, store);
    OptEval out;
    out.objective = ev.primal.qoi_values[obj_idx];
    out.objective_gradient = ev.gradients[obj_idx].value;
    if (con_idx >= 0) {
      out.constraint = ev.primal.qoi_values[con_idx];
      out.constraint_gradient = ev.gradients[con_idx].value;
    }
    return out;
  };

  OptOptions opts;
  opts.max_iterations = oc.max_iterations;
  opts.grad_tolerance = oc.grad_tolerance;
  opts.constraint_tolerance = oc.constraint_tolerance;

  const OptResult result = minimize(prob, opts);

  detail::CsvWriter csv(ctx.out_dir / "opt_trace.csv", cfg.config_hash);
  std::vector<std::string> cols = {"outer", "iter", "objective", "merit",
                                   "constraint_violation", "projected_grad_norm", "step",
                                   "evaluations"};
  for (int j = 0; j < prob.dim; ++j) cols.push_back("mu_" + std::to_string(j));
  csv.header(cols);
  for (const auto& row : result.trace.rows) {
    std::vector<std::string> cells = {std::to_string(row.outer), std::to_string(row.iter),
                                      detail::fmt(row.objective), detail::fmt(row.merit),
                                      detail::fmt(row.constraint_violation),
                                      detail::fmt(row.projected_grad_norm),
                                      detail::fmt(row.step), std::to_string(row.evaluations)};
    for (int j = 0; j < prob.dim; ++j) cells.push_back(detail::fmt(row.mu[j]));
    csv.row(cells);
  }

  json out;
  out["config_hash"] = cfg.config_hash;
  out["status"] = to_string(result.status);
  out["objective"] = result.objective;
  out["constraint_value"] = result.constraint_value;
  out["constraint_violation"] = result.constraint_violation;
  out["evaluations"] = result.total_evaluations;
  out["mu"] = result.mu;
  detail::write_json(ctx.out_dir / "opt_result.json", out);

  // final-iterate primal retained for post-mortem adjoint replay
  {
    RunConfig final_cfg = cfg;
    final_cfg.mapping.signal.knot_values = result.mu;
    CommandContext sub = ctx;
    sub.out_dir = ctx.out_dir / "final";
    cmd_simulate(final_cfg, sub);
  }

  std::cout << "optimize: " << to_string(result.status) << " objective=" << result.objective
            << " violation=" << result.constraint_violation << " evals="
            << result.total_evaluations << "\n";
  return result.status == OptStatus::converged ? 0 : 1;
}

inline int run_command(const std::string& command, const RunConfig& cfg,
                       const CommandContext& ctx) {
  if (command == "simulate") return cmd_simulate(cfg, ctx);
  if (command == "adjoint") return cmd_adjoint(cfg, ctx);
  if (command == "grad-check") return cmd_grad_check(cfg, ctx);
  if (command == "order-study") return cmd_order_study(cfg, ctx);
  if (command == "gcl-check") return cmd_gcl_check(cfg, ctx);
  if (command == "optimize") return cmd_optimize(cfg, ctx);
  throw ConfigError("unknown command: " + command);
}

}  // namespace adjflow
