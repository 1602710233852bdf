// Run configuration: a strict JSON schema (unknown keys rejected) describing
// the problem, domain motion, time discretization, QoIs, and the optional
// optimize / grad-check / order-study / gcl-check blocks. Every emitted
// artifact carries the FNV-1a hash of the raw config bytes, so outputs are
// traceable to their exact inputs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adjflow/dg1d.hpp"
#include "adjflow/primal.hpp"
#include "adjflow/tableau.hpp"

namespace adjflow {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

template <class T>
T get_req(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError(where + " is missing required key '" + key + "'");
  return j.at(key).get<T>();
}

}  // namespace detail

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct SignalConfig {
  enum class Kind { clamped, mirrored_periodic, sine, none };
  Kind kind = Kind::none;
  Vector knot_values;   // clamped interior values / mirrored free values
  double end_value0 = 0.0, end_value1 = 0.0;
  double end_slope0 = 0.0, end_slope1 = 0.0;
  bool temporal_blend = false;
  double amplitude = 0.0, omega = 0.0;  // sine
};

struct MappingConfig {
  enum class Kind { static_mesh, blended_translation, dilation };
  Kind kind = Kind::static_mesh;
  double center = 0.0;
  double inner_radius = 0.25;
  double annulus_width = 0.5;
  BlendKind blend = BlendKind::quintic;
  SignalConfig signal;
  double dilation_rate = 0.0;
  bool gcl = false;
};

struct QoiConfig {
  std::string name;
  ModelQoi kind = ModelQoi::domain_energy;
  BoundarySide side = BoundarySide::left;
  double t_star = -1.0;  // terminal_state_norm; < 0 means "final time"
};

struct OptimizeConfig {
  std::string objective;
  std::string constraint_qoi;  // empty => unconstrained
  double constraint_target = 0.0;
  double lower = -1e30, upper = 1e30;
  int max_iterations = 100;
  double grad_tolerance = 1e-9;
  double constraint_tolerance = 1e-8;
};

struct GradCheckConfig {
  std::string qoi;
  std::vector<double> fd_steps = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
};

struct OrderStudyConfig {
  enum class Axis { temporal, spatial };
  Axis axis = Axis::temporal;
  int refinements = 4;
  int base_steps = 4;
  int base_elements = 4;
  int time_steps = 200;  // spatial study: fixed fine time discretization
};

struct RunConfig {
  Dg1dOptions problem;
  MappingConfig mapping;
  double t_start = 0.0;
  double t_final = 1.0;
  int steps = 20;
  DirkScheme scheme = DirkScheme::dirk3;
  NewtonOptions newton;
  std::vector<QoiConfig> qois;
  std::optional<OptimizeConfig> optimize;
  GradCheckConfig grad_check;
  OrderStudyConfig order_study;
  int snapshot_every = 1;
  std::string run_dir = "run";
  std::string config_hash;

  int num_params() const {
    return mapping.signal.kind == SignalConfig::Kind::clamped ||
                   mapping.signal.kind == SignalConfig::Kind::mirrored_periodic
               ? static_cast<int>(mapping.signal.knot_values.size())
               : 0;
  }
};

inline RunConfig parse_config(const json& j, const std::string& raw_bytes) {
  using detail::get_or;
  using detail::get_req;
  using detail::require_keys;

  require_keys(j, "config",
               {"problem", "mapping", "time", "qois", "newton", "optimize", "grad_check",
                "order_study", "paths", "snapshots"});
  RunConfig cfg;
  cfg.config_hash = fnv1a_hex(raw_bytes);

  {
    const json& p = j.at("problem");
    require_keys(p, "problem",
                 {"flux", "viscosity", "advection_speed", "elements", "order", "boundary",
                  "initial"});
    const std::string flux = get_req<std::string>(p, "problem", "flux");
    if (flux == "burgers")
      cfg.problem.flux = FluxKind::burgers;
    else if (flux == "advection_diffusion")
      cfg.problem.flux = FluxKind::advection_diffusion;
    else
      throw ConfigError("unknown flux kind: " + flux);
    cfg.problem.viscosity = get_or(p, "viscosity", 0.0);
    cfg.problem.advection_speed = get_or(p, "advection_speed", 1.0);
    cfg.problem.elements = get_req<int>(p, "problem", "elements");
    cfg.problem.order = get_req<int>(p, "problem", "order");
    if (cfg.problem.elements < 1 || cfg.problem.order < 1)
      throw ConfigError("problem.elements and problem.order must be positive");

    if (p.contains("boundary")) {
      const json& b = p.at("boundary");
      require_keys(b, "problem.boundary", {"left", "right", "wavenumber"});
      auto parse_side = [&](const char* key, DirichletBc::Kind& kind, double& value) {
        if (!b.contains(key)) return;
        const json& s = b.at(key);
        require_keys(s, std::string("problem.boundary.") + key, {"kind", "value"});
        const std::string k = get_or<std::string>(s, "kind", "constant");
        if (k == "constant")
          kind = DirichletBc::Kind::constant;
        else if (k == "wall")
          kind = DirichletBc::Kind::wall;
        else if (k == "advection_sine")
          kind = DirichletBc::Kind::advection_sine;
        else
          throw ConfigError("unknown boundary kind: " + k);
        value = get_or(s, "value", 0.0);
      };
      parse_side("left", cfg.problem.bc.left_kind, cfg.problem.bc.left_value);
      parse_side("right", cfg.problem.bc.right_kind, cfg.problem.bc.right_value);
      cfg.problem.bc.wavenumber = get_or(b, "wavenumber", 1.0);
      cfg.problem.bc.speed = cfg.problem.advection_speed;
    }
    if (p.contains("initial")) {
      const json& ic = p.at("initial");
      require_keys(ic, "problem.initial", {"kind", "value", "amplitude", "wavenumber", "time"});
      const std::string kind = get_or<std::string>(ic, "kind", "constant");
      if (kind == "constant")
        cfg.problem.ic.kind = InitialSpec::Kind::constant;
      else if (kind == "sine")
        cfg.problem.ic.kind = InitialSpec::Kind::sine;
      else if (kind == "steady")
        cfg.problem.ic.kind = InitialSpec::Kind::steady;
      else
        throw ConfigError("unknown initial kind: " + kind);
      cfg.problem.ic.value = get_or(ic, "value", 1.0);
      cfg.problem.ic.amplitude = get_or(ic, "amplitude", 1.0);
      cfg.problem.ic.wavenumber = get_or(ic, "wavenumber", 1.0);
      cfg.problem.ic.time = get_or(ic, "time", 0.0);
    }
  }

  {
    const json& m = j.at("mapping");
    require_keys(m, "mapping",
                 {"kind", "center", "inner_radius", "annulus_width", "blend", "signal",
                  "dilation_rate", "gcl"});
    const std::string kind = get_req<std::string>(m, "mapping", "kind");
    if (kind == "static")
      cfg.mapping.kind = MappingConfig::Kind::static_mesh;
    else if (kind == "blended_translation")
      cfg.mapping.kind = MappingConfig::Kind::blended_translation;
    else if (kind == "dilation")
      cfg.mapping.kind = MappingConfig::Kind::dilation;
    else
      throw ConfigError("unknown mapping kind: " + kind);
    cfg.mapping.center = get_or(m, "center", 0.0);
    cfg.mapping.inner_radius = get_or(m, "inner_radius", 0.25);
    cfg.mapping.annulus_width = get_or(m, "annulus_width", 0.5);
    cfg.mapping.blend = blend_kind_from_string(get_or<std::string>(m, "blend", "quintic"));
    cfg.mapping.dilation_rate = get_or(m, "dilation_rate", 0.0);
    cfg.mapping.gcl = get_or(m, "gcl", false);
    cfg.problem.gcl = cfg.mapping.gcl ? GclMode::on : GclMode::off;

    if (m.contains("signal")) {
      const json& s = m.at("signal");
      require_keys(s, "mapping.signal",
                   {"kind", "interior_values", "values", "end_values", "end_slopes",
                    "temporal_blend", "amplitude", "omega"});
      const std::string sk = get_req<std::string>(s, "mapping.signal", "kind");
      if (sk == "clamped") {
        cfg.mapping.signal.kind = SignalConfig::Kind::clamped;
        cfg.mapping.signal.knot_values =
            get_req<std::vector<double>>(s, "mapping.signal", "interior_values");
        if (s.contains("end_values")) {
          const auto ev = s.at("end_values").get<std::vector<double>>();
          if (ev.size() != 2) throw ConfigError("end_values must have two entries");
          cfg.mapping.signal.end_value0 = ev[0];
          cfg.mapping.signal.end_value1 = ev[1];
        }
        if (s.contains("end_slopes")) {
          const auto es = s.at("end_slopes").get<std::vector<double>>();
          if (es.size() != 2) throw ConfigError("end_slopes must have two entries");
          cfg.mapping.signal.end_slope0 = es[0];
          cfg.mapping.signal.end_slope1 = es[1];
        }
      } else if (sk == "mirrored_periodic") {
        cfg.mapping.signal.kind = SignalConfig::Kind::mirrored_periodic;
        cfg.mapping.signal.knot_values = get_req<std::vector<double>>(s, "mapping.signal", "values");
      } else if (sk == "sine") {
        cfg.mapping.signal.kind = SignalConfig::Kind::sine;
        cfg.mapping.signal.amplitude = get_or(s, "amplitude", 0.1);
        cfg.mapping.signal.omega = get_or(s, "omega", 2.0 * M_PI);
      } else {
        throw ConfigError("unknown signal kind: " + sk);
      }
      cfg.mapping.signal.temporal_blend = get_or(s, "temporal_blend", false);
    }
  }

  {
    const json& t = j.at("time");
    require_keys(t, "time", {"start", "final", "steps", "scheme"});
    cfg.t_start = get_or(t, "start", 0.0);
    cfg.t_final = get_req<double>(t, "time", "final");
    cfg.steps = get_req<int>(t, "time", "steps");
    if (cfg.steps < 1) throw ConfigError("time.steps must be positive");
    cfg.scheme = dirk_scheme_from_string(get_or<std::string>(t, "scheme", "dirk3"));
  }

  if (j.contains("newton")) {
    const json& nw = j.at("newton");
    require_keys(nw, "newton", {"tolerance", "max_iterations", "reuse_jacobian"});
    cfg.newton.tolerance = get_or(nw, "tolerance", 1e-11);
    cfg.newton.max_iterations = get_or(nw, "max_iterations", 20);
    cfg.newton.reuse_jacobian = get_or(nw, "reuse_jacobian", false);
  }

  if (j.contains("qois")) {
    for (const json& q : j.at("qois")) {
      require_keys(q, "qois[]", {"name", "kind", "side", "t_star"});
      QoiConfig qc;
      qc.name = get_req<std::string>(q, "qois[]", "name");
      qc.kind = model_qoi_from_string(get_req<std::string>(q, "qois[]", "kind"));
      const std::string side = get_or<std::string>(q, "side", "left");
      qc.side = side == "right" ? BoundarySide::right : BoundarySide::left;
      qc.t_star = get_or(q, "t_star", -1.0);
      cfg.qois.push_back(qc);
    }
  }

  if (j.contains("optimize")) {
    const json& o = j.at("optimize");
    require_keys(o, "optimize",
                 {"objective", "constraint", "lower", "upper", "max_iterations",
                  "grad_tolerance", "constraint_tolerance"});
    OptimizeConfig oc;
    oc.objective = get_req<std::string>(o, "optimize", "objective");
    if (o.contains("constraint")) {
      const json& c = o.at("constraint");
      require_keys(c, "optimize.constraint", {"qoi", "target"});
      oc.constraint_qoi = get_req<std::string>(c, "optimize.constraint", "qoi");
      oc.constraint_target = get_req<double>(c, "optimize.constraint", "target");
    }
    oc.lower = get_or(o, "lower", -1e30);
    oc.upper = get_or(o, "upper", 1e30);
    oc.max_iterations = get_or(o, "max_iterations", 100);
    oc.grad_tolerance = get_or(o, "grad_tolerance", 1e-9);
    oc.constraint_tolerance = get_or(o, "constraint_tolerance", 1e-8);
    cfg.optimize = oc;
  }

  if (j.contains("grad_check")) {
    const json& g = j.at("grad_check");
    require_keys(g, "grad_check", {"qoi", "fd_steps"});
    cfg.grad_check.qoi = get_or<std::string>(g, "qoi", "");
    if (g.contains("fd_steps"))
      cfg.grad_check.fd_steps = g.at("fd_steps").get<std::vector<double>>();
  }

  if (j.contains("order_study")) {
    const json& o = j.at("order_study");
    require_keys(o, "order_study",
                 {"axis", "refinements", "base_steps", "base_elements", "time_steps"});
    const std::string axis = get_or<std::string>(o, "axis", "temporal");
    cfg.order_study.axis =
        axis == "spatial" ? OrderStudyConfig::Axis::spatial : OrderStudyConfig::Axis::temporal;
    if (axis != "spatial" && axis != "temporal")
      throw ConfigError("order_study.axis must be temporal or spatial");
    cfg.order_study.refinements = get_or(o, "refinements", 4);
    cfg.order_study.base_steps = get_or(o, "base_steps", 4);
    cfg.order_study.base_elements = get_or(o, "base_elements", 4);
    cfg.order_study.time_steps = get_or(o, "time_steps", 200);
  }

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, "paths", {"run_dir"});
    cfg.run_dir = get_or<std::string>(p, "run_dir", "run");
  }
  if (j.contains("snapshots")) {
    const json& s = j.at("snapshots");
    require_keys(s, "snapshots", {"every"});
    cfg.snapshot_every = get_or(s, "every", 1);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string raw = ss.str();
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return parse_config(j, raw);
}

/// Builds the mapping and (when GCL is on) the gbar field for one parameter
/// vector, then the system and its registered QoIs. Systems are immutable,
/// so evaluators rebuild per mu.
struct ProblemInstance {
  std::shared_ptr<const Dg1dSystem> sys;
  std::vector<DiscreteQoi> qois;
  std::vector<std::string> qoi_names;
};

inline std::shared_ptr<const DomainMapping> build_mapping(const RunConfig& cfg) {
  const MappingConfig& m = cfg.mapping;
  const int n_mu = cfg.num_params();
  switch (m.kind) {
    case MappingConfig::Kind::static_mesh:
      return std::make_shared<StaticMapping>(n_mu);
    case MappingConfig::Kind::dilation:
      return std::make_shared<DilationMapping>(m.dilation_rate, false, n_mu);
    case MappingConfig::Kind::blended_translation: {
      std::shared_ptr<const TimeSignal> sig;
      const SignalConfig& s = m.signal;
      if (s.kind == SignalConfig::Kind::sine) {
        sig = std::make_shared<SineSignal>(s.amplitude, s.omega, 0);
      } else if (s.kind == SignalConfig::Kind::clamped) {
        const double horizon = cfg.t_final;
        const double ev0 = s.end_value0, ev1 = s.end_value1;
        const double es0 = s.end_slope0, es1 = s.end_slope1;
        auto builder = [horizon, ev0, ev1, es0, es1](const Vector& knots) {
          return SplineSignal::clamped(horizon, knots, ev0, ev1, es0, es1);
        };
        sig = std::make_shared<SplineTimeSignal>(builder, 0, n_mu, n_mu, s.temporal_blend);
      } else if (s.kind == SignalConfig::Kind::mirrored_periodic) {
        const double horizon = cfg.t_final;
        auto builder = [horizon](const Vector& knots) {
          return SplineSignal::mirrored_periodic(horizon, knots);
        };
        sig = std::make_shared<SplineTimeSignal>(builder, 0, n_mu, n_mu, s.temporal_blend);
      } else {
        throw ConfigError("blended_translation mapping needs a signal block");
      }
      return std::make_shared<BlendedRigidMotion>(m.center, m.inner_radius, m.annulus_width,
                                                  m.blend, sig);
    }
  }
  throw ConfigError("unreachable mapping kind");
}

inline TimeGrid build_grid(const RunConfig& cfg) {
  return TimeGrid::uniform(cfg.t_start, cfg.t_final, cfg.steps);
}

inline ProblemInstance instantiate(const RunConfig& cfg, const Vector& mu) {
  ProblemInstance inst;
  auto mapping = build_mapping(cfg);
  const auto tab = make_tableau(cfg.scheme);
  const auto grid = build_grid(cfg);
  std::shared_ptr<const GclField> field;
  if (cfg.mapping.gcl)
    field = std::make_shared<GclField>(gcl_integrate(
        *mapping, Mesh1d(cfg.problem.elements, cfg.problem.order), tab, grid, mu,
        /*with_sensitivity=*/cfg.num_params() > 0));
  inst.sys = std::make_shared<Dg1dSystem>(cfg.problem, mapping, field);
  for (const QoiConfig& q : cfg.qois) {
    const double t_star = q.t_star < 0.0 ? cfg.t_final : q.t_star;
    inst.qois.emplace_back(model_qoi(inst.sys, q.kind, q.name, t_star, q.side), grid, tab);
    inst.qoi_names.push_back(q.name);
  }
  return inst;
}

}  // namespace adjflow
