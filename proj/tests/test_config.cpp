#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "adjflow/config.hpp"

using namespace adjflow;

namespace {

json minimal_config() {
  return json::parse(R"({
    "problem": {"flux": "burgers", "viscosity": 0.05, "elements": 4, "order": 2,
                "boundary": {"left": {"kind": "constant", "value": 1.0},
                             "right": {"kind": "constant", "value": 1.0}},
                "initial": {"kind": "constant", "value": 1.0}},
    "mapping": {"kind": "blended_translation", "center": 0.0, "inner_radius": 0.25,
                "annulus_width": 0.5, "blend": "quintic",
                "signal": {"kind": "clamped", "interior_values": [0.05, 0.1]}, "gcl": true},
    "time": {"final": 1.0, "steps": 5, "scheme": "dirk3"},
    "qois": [{"name": "work", "kind": "boundary_work", "side": "left"}]
  })");
}

}  // namespace

TEST_CASE("minimal config parses and counts parameters") {
  const RunConfig cfg = parse_config(minimal_config(), "raw");
  CHECK(cfg.problem.flux == FluxKind::burgers);
  CHECK(cfg.num_params() == 2);
  CHECK(cfg.mapping.gcl);
  CHECK(cfg.scheme == DirkScheme::dirk3);
  CHECK(cfg.qois.size() == 1);
  CHECK(cfg.config_hash.size() == 16);
}

TEST_CASE("unknown keys are rejected at every level") {
  json j = minimal_config();
  j["problem"]["typo_key"] = 1;
  CHECK_THROWS_AS(parse_config(j, ""), ConfigError);

  json j2 = minimal_config();
  j2["mystery"] = {};
  CHECK_THROWS_AS(parse_config(j2, ""), ConfigError);

  json j3 = minimal_config();
  j3["mapping"]["signal"]["bogus"] = 3;
  CHECK_THROWS_AS(parse_config(j3, ""), ConfigError);
}

TEST_CASE("missing required keys are reported") {
  json j = minimal_config();
  j["time"].erase("final");
  CHECK_THROWS_AS(parse_config(j, ""), ConfigError);
}

TEST_CASE("hash is deterministic in the raw bytes") {
  CHECK(fnv1a_hex("abc") == fnv1a_hex("abc"));
  CHECK(fnv1a_hex("abc") != fnv1a_hex("abd"));
}

TEST_CASE("instantiate builds a runnable gcl system") {
  const RunConfig cfg = parse_config(minimal_config(), "raw");
  const Vector mu = cfg.mapping.signal.knot_values;
  const ProblemInstance inst = instantiate(cfg, mu);
  CHECK(inst.sys->dim() == 4 * 3);
  CHECK(inst.sys->num_params() == 2);
  CHECK(inst.qois.size() == 1);
  // residual callable at a stage time
  const auto grid = build_grid(cfg);
  const auto tab = make_tableau(cfg.scheme);
  const Vector u(inst.sys->dim(), 1.0);
  CHECK_NOTHROW(inst.sys->residual(u, mu, grid.stage_time(1, tab, 1)));
}

TEST_CASE("shipped configs parse") {
  for (const char* name :
       {"control.json", "gcl_check.json", "order_temporal.json", "order_spatial.json",
        "optimize_bounds.json", "optimize_constrained.json"}) {
    const auto path = std::filesystem::path(ADJFLOW_CONFIG_DIR) / name;
    CHECK_NOTHROW(load_config(path));
  }
}
