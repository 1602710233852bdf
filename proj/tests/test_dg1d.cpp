#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "adjflow/adjoint.hpp"
#include "adjflow/dg1d.hpp"
#include "adjflow/primal.hpp"

using namespace adjflow;

namespace {

std::shared_ptr<const DomainMapping> piston_mapping(int n_params) {
  auto builder = [](const Vector& knots) { return SplineSignal::clamped(1.0, knots); };
  auto sig = std::make_shared<SplineTimeSignal>(builder, 0, n_params, n_params);
  return std::make_shared<BlendedRigidMotion>(0.0, 0.25, 0.5, BlendKind::quintic, sig);
}

struct Dg1dSetup {
  std::shared_ptr<const DomainMapping> mapping;
  std::shared_ptr<const Dg1dSystem> sys;
  ButcherTableau tab = make_tableau(DirkScheme::dirk3);
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
  Vector mu;

  Dg1dSetup(Dg1dOptions opts, int n_params) {
    mapping = piston_mapping(n_params);
    mu = Vector(n_params, 0.0);
    for (int j = 0; j < n_params; ++j) mu[j] = 0.05 + 0.02 * j;
    std::shared_ptr<const GclField> field;
    if (opts.gcl == GclMode::on)
      field = std::make_shared<GclField>(
          gcl_sensitivity(*mapping, Mesh1d(opts.elements, opts.order), tab, grid, mu));
    sys = std::make_shared<Dg1dSystem>(opts, mapping, field);
  }
};

Vector random_state_near(const Dg1dSystem& sys, const Vector& mu, double t, double base,
                         double amp, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  Vector w(sys.dim());
  for (double& v : w) v = base + d(rng);
  return sys.conserved_from_physical(w, mu, t);
}

}  // namespace

TEST_CASE("constant state on a static mesh is a discrete steady solution") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.08;
  opts.elements = 5;
  opts.order = 3;
  opts.bc.left_value = opts.bc.right_value = 1.0;
  auto sys = std::make_shared<Dg1dSystem>(opts, std::make_shared<StaticMapping>(0));
  const Vector u(sys->dim(), 1.0);
  const Vector r = sys->residual(u, {}, 0.3);
  CHECK(norm_inf(r) <= 1e-13);
}

TEST_CASE("discrete conservation: residual sums to the boundary fluxes only") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.0;
  opts.elements = 8;
  opts.order = 2;
  opts.bc.left_value = opts.bc.right_value = 0.0;
  opts.ic.kind = InitialSpec::Kind::sine;
  auto sys = std::make_shared<Dg1dSystem>(opts, std::make_shared<StaticMapping>(0));
  // compactly supported bump: zero at both boundaries, like the zero BC data
  Vector w(sys->dim());
  for (int e = 0; e < opts.elements; ++e)
    for (int j = 0; j <= opts.order; ++j) {
      const double X = sys->mesh().node_coord(e, j);
      w[sys->mesh().node_index(e, j)] = std::sin(M_PI * X) * std::sin(M_PI * X);
    }
  const Vector u = sys->conserved_from_physical(w, {}, 0.0);
  const Vector r = sys->residual(u, {}, 0.0);
  double total = 0.0;
  for (double v : r) total += v;
  CHECK(std::abs(total) <= 1e-12);
}

TEST_CASE("analytic Jacobians match finite differences, plain ALE") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.05;
  opts.elements = 4;
  opts.order = 3;
  opts.gcl = GclMode::off;
  Dg1dSetup setup(opts, 3);
  const double t = setup.grid.stage_time(2, setup.tab, 2);
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 9u, 10u}) {
    const Vector u = random_state_near(*setup.sys, setup.mu, t, 1.0, 0.3, seed);
    const auto rep = verify_derivatives(*setup.sys, u, setup.mu, t, 1e-5);
    CHECK(rep.jac_state_error <= 1e-6);
    CHECK(rep.jac_param_error <= 1e-6);
  }
}

TEST_CASE("analytic Jacobians match finite differences, GCL on, with QoIs") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.05;
  opts.elements = 4;
  opts.order = 3;
  opts.gcl = GclMode::on;
  Dg1dSetup setup(opts, 3);
  const double t = setup.grid.stage_time(3, setup.tab, 1);

  auto factory = [&](const Vector& mup) -> std::shared_ptr<const SemiDiscreteSystem> {
    auto field = std::make_shared<GclField>(gcl_sensitivity(
        *setup.mapping, Mesh1d(opts.elements, opts.order), setup.tab, setup.grid, mup));
    return std::make_shared<Dg1dSystem>(opts, setup.mapping, field);
  };
  auto qoi_factory = [&](const Vector& mup) {
    auto sysp = std::static_pointer_cast<const Dg1dSystem>(factory(mup));
    std::map<std::string, std::shared_ptr<const QoiIntegrand>> qois;
    qois["work"] = model_qoi(sysp, ModelQoi::boundary_work, "work").integrand;
    qois["energy"] = model_qoi(sysp, ModelQoi::domain_energy, "energy").integrand;
    return qois;
  };

  const Vector u = random_state_near(*setup.sys, setup.mu, t, 1.0, 0.25, 42);
  const auto rep =
      verify_derivatives(*setup.sys, u, setup.mu, t, 1e-5, qoi_factory(setup.mu), factory,
                         qoi_factory);
  CHECK(rep.jac_state_error <= 1e-6);
  CHECK(rep.jac_param_error <= 1e-6);
  CHECK(rep.qoi_state_errors.at("work") <= 1e-6);
  CHECK(rep.qoi_state_errors.at("energy") <= 1e-6);
  CHECK(rep.qoi_param_errors.at("work") <= 1e-6);
  CHECK(rep.qoi_param_errors.at("energy") <= 1e-6);
}

TEST_CASE("moving-wall boundary chains verify against finite differences") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.1;
  opts.elements = 4;
  opts.order = 3;
  opts.bc.left_kind = DirichletBc::Kind::wall;
  opts.bc.right_kind = DirichletBc::Kind::constant;
  opts.bc.right_value = 0.0;
  opts.gcl = GclMode::on;
  Dg1dSetup setup(opts, 3);
  const double t = setup.grid.stage_time(2, setup.tab, 3);

  auto factory = [&](const Vector& mup) -> std::shared_ptr<const SemiDiscreteSystem> {
    auto field = std::make_shared<GclField>(gcl_sensitivity(
        *setup.mapping, Mesh1d(opts.elements, opts.order), setup.tab, setup.grid, mup));
    return std::make_shared<Dg1dSystem>(opts, setup.mapping, field);
  };
  auto qoi_factory = [&](const Vector& mup) {
    auto sysp = std::static_pointer_cast<const Dg1dSystem>(factory(mup));
    std::map<std::string, std::shared_ptr<const QoiIntegrand>> qois;
    qois["work"] = model_qoi(sysp, ModelQoi::boundary_work, "work").integrand;
    return qois;
  };

  const Vector u = random_state_near(*setup.sys, setup.mu, t, 0.2, 0.3, 17);
  const auto rep = verify_derivatives(*setup.sys, u, setup.mu, t, 1e-5, qoi_factory(setup.mu),
                                      factory, qoi_factory);
  CHECK(rep.jac_state_error <= 1e-6);
  CHECK(rep.jac_param_error <= 1e-6);
  CHECK(rep.qoi_state_errors.at("work") <= 1e-6);
  CHECK(rep.qoi_param_errors.at("work") <= 1e-6);
}

TEST_CASE("newton converges quadratically on a burgers stage") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.02;
  opts.elements = 6;
  opts.order = 2;
  Dg1dSetup setup(opts, 2);
  const InitialCondition ic = setup.sys->initial(setup.mu);
  NewtonOptions nopts;
  nopts.tolerance = 1e-13;
  std::vector<double> history;
  int iters = 0;
  solve_stage(*setup.sys, setup.tab, ic.value, {}, 1, 0.0, setup.grid.dt(1), setup.mu, nopts, 1,
              &iters, &history);
  REQUIRE(history.size() >= 3);
  // quadratic contraction near the root: successive residual ratios <= 0.1
  for (std::size_t i = 1; i + 1 < history.size(); ++i)
    CHECK(history[i + 1] <= 0.1 * history[i] + 1e-15);
}

TEST_CASE("p=1 mass block matches hand integration and is mu independent") {
  Dg1dOptions opts;
  opts.elements = 1;
  opts.order = 1;
  auto sys = std::make_shared<Dg1dSystem>(opts, std::make_shared<StaticMapping>(0));
  const Matrix& m1 = sys->mass();
  CHECK(m1(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(m1(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  const Matrix& m2 = sys->mass();
  CHECK(&m1 == &m2);
}

TEST_CASE("spatial convergence of smooth advection is at least order p + 1/2") {
  for (int p : {1, 2}) {
    std::vector<double> errors, hs;
    for (int k_elems : {4, 8, 16}) {
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
      const double t_end = 0.4;
      const auto grid = TimeGrid::uniform(0.0, t_end, 80);
      MemoryCheckpointStore store;
      const auto res = integrate(*sys, tab, grid, {}, {}, store);
      errors.push_back(sys->l2_error(res.final_state, {}, t_end, [&](double x) {
        return std::sin(2.0 * M_PI * (x - t_end));
      }));
      hs.push_back(1.0 / k_elems);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int m = static_cast<int>(errors.size());
    for (int i = 0; i < m; ++i) {
      sx += std::log(hs[i]);
      sy += std::log(errors[i]);
      sxx += std::log(hs[i]) * std::log(hs[i]);
      sxy += std::log(hs[i]) * std::log(errors[i]);
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope >= p + 0.5);
  }
}

TEST_CASE("steady initial condition solves the frozen residual") {
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.1;
  opts.elements = 5;
  opts.order = 2;
  opts.ic.kind = InitialSpec::Kind::steady;
  opts.bc.left_value = 1.0;
  opts.bc.right_value = 0.6;
  Dg1dSetup setup(opts, 2);
  const InitialCondition ic = setup.sys->initial(setup.mu);
  CHECK(ic.kind == InitialCondition::Kind::steady);
  CHECK(norm2(setup.sys->residual(ic.value, setup.mu, 0.0)) <= 1e-11);
}

TEST_CASE("steady-IC sensitivity contribution matches finite differences of the IC solve") {
  // anchor the steady solve where the motion (and its mu-derivative) is
  // nonzero so du_0/dmu is nontrivial
  Dg1dOptions opts;
  opts.flux = FluxKind::burgers;
  opts.viscosity = 0.1;
  opts.elements = 5;
  opts.order = 2;
  opts.ic.kind = InitialSpec::Kind::steady;
  opts.ic.time = 0.3;
  opts.bc.left_value = 1.0;
  opts.bc.right_value = 0.6;
  opts.gcl = GclMode::on;

  auto builder = [](const Vector& knots) { return SplineSignal::clamped(1.3, knots); };
  auto sig = std::make_shared<SplineTimeSignal>(builder, 0, 2, 2);
  auto mapping =
      std::make_shared<BlendedRigidMotion>(0.0, 0.25, 0.5, BlendKind::quintic, sig);
  const Vector mu = {0.07, 0.04};
  const auto tab = make_tableau(DirkScheme::dirk3);
  const auto grid = TimeGrid::uniform(0.3, 1.3, 4);

  auto build = [&](const Vector& m) {
    auto field = std::make_shared<GclField>(
        gcl_sensitivity(*mapping, Mesh1d(opts.elements, opts.order), tab, grid, m));
    return std::make_shared<Dg1dSystem>(opts, mapping, field);
  };

  auto sys = build(mu);
  const InitialCondition ic = sys->initial(mu);
  REQUIRE(ic.kind == InitialCondition::Kind::steady);

  Vector lambda0(sys->dim());
  for (int g = 0; g < sys->dim(); ++g) lambda0[g] = std::sin(1.3 * g) + 0.2;
  const Vector contrib = ic_sensitivity_contribution(ic, lambda0);

  const double h = 1e-6;
  for (int d = 0; d < 2; ++d) {
    Vector mp = mu, mm = mu;
    mp[d] += h;
    mm[d] -= h;
    const Vector up = build(mp)->initial(mp).value;
    const Vector um = build(mm)->initial(mm).value;
    double fd = 0.0;
    for (int g = 0; g < sys->dim(); ++g) fd += lambda0[g] * (up[g] - um[g]) / (2.0 * h);
    CHECK(std::abs(contrib[d] - fd) <= 1e-7 * (1.0 + std::abs(fd)));
  }
}
