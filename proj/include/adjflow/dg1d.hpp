// Nodal DG discretization of a 1D scalar viscous conservation law in ALE
// form on a deforming interval. The geometry is isoparametric: the residual
// is a function of the nodal mesh positions x(mu, t) and velocities
// xdot(mu, t) sampled from the mapping, so dr/dmu is exactly the chain
// dr/dx dx/dmu + dr/dxdot dxdot/dmu (+ dr/dgbar dgbar/dmu with GCL). The
// conserved unknown is sigma * u with sigma = g (plain ALE) or the discrete
// gbar (GCL augmentation); the two formulations share one code path that
// differs only in the scaling field. Convective faces use the exact scalar
// Riemann (Godunov) flux of the ALE flux f(u) - v u; viscous terms use
// LDG-style alternating traces of the physical state and its reference
// gradient. In 1D g G^{-1} = 1 pointwise, which together with single-valued
// physical traces makes a constant state an exact discrete solution of the
// GCL-augmented scheme under any motion.
#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/ale.hpp"
#include "adjflow/gcl.hpp"
#include "adjflow/linalg.hpp"
#include "adjflow/mesh.hpp"
#include "adjflow/qoi.hpp"
#include "adjflow/system.hpp"

namespace adjflow {

enum class FluxKind { burgers, advection_diffusion };
enum class GclMode { off, on };
enum class BoundarySide { left, right };

// Dirichlet data in physical coordinates, pulled back through the mapping.
// `wall` is the moving-wall condition u = xdot_b: the boundary motion drives
// the fluid, the 1D analog of a no-slip body surface.
struct DirichletBc {
  enum class Kind { constant, advection_sine, wall };
  Kind left_kind = Kind::constant;
  Kind right_kind = Kind::constant;
  double left_value = 1.0;
  double right_value = 1.0;
  // advection_sine: u(x, t) = sin(2 pi k (x - a t)), the exact advection
  // profile used by manufactured-solution studies
  double wavenumber = 1.0;
  double speed = 1.0;

  Kind kind(BoundarySide side) const {
    return side == BoundarySide::left ? left_kind : right_kind;
  }
  double value(double x, double t, BoundarySide side, double xdot_b) const {
    switch (kind(side)) {
      case Kind::constant: return side == BoundarySide::left ? left_value : right_value;
      case Kind::wall: return xdot_b;
      case Kind::advection_sine:
        return std::sin(2.0 * M_PI * wavenumber * (x - speed * t));
    }
    return 0.0;
  }
  double dvalue_dx(double x, double t, BoundarySide side) const {
    if (kind(side) != Kind::advection_sine) return 0.0;
    return 2.0 * M_PI * wavenumber * std::cos(2.0 * M_PI * wavenumber * (x - speed * t));
  }
  double dvalue_dxdot(BoundarySide side) const { return kind(side) == Kind::wall ? 1.0 : 0.0; }
};

struct InitialSpec {
  enum class Kind { constant, sine, steady };
  Kind kind = Kind::constant;
  double value = 1.0;       // constant profile / steady Newton start
  double amplitude = 1.0;   // sine profile amplitude
  double wavenumber = 1.0;  // sine: u_0(x) = value + amplitude sin(2 pi k x)
  double time = 0.0;        // anchor time of the initial condition
};

struct Dg1dOptions {
  FluxKind flux = FluxKind::burgers;
  double viscosity = 0.0;
  double advection_speed = 1.0;
  int elements = 8;
  int order = 2;
  DirichletBc bc;
  InitialSpec ic;
  GclMode gcl = GclMode::off;
};

class Dg1dSystem final : public SemiDiscreteSystem,
                         public std::enable_shared_from_this<Dg1dSystem> {
 public:
  Dg1dSystem(Dg1dOptions opts, std::shared_ptr<const DomainMapping> mapping,
             std::shared_ptr<const GclField> gcl_field = nullptr)
      : opts_(opts), mesh_(opts.elements, opts.order), mapping_(std::move(mapping)),
        gcl_(std::move(gcl_field)) {
    if (opts_.gcl == GclMode::on && !gcl_)
      throw std::invalid_argument("GCL mode requires a precomputed GclField");
    mass_ = assemble_mass(mesh_);
  }

  int dim() const override { return mesh_.num_nodes(); }
  int num_params() const override { return mapping_->num_params(); }
  const Matrix& mass() const override { return mass_; }
  const Mesh1d& mesh() const { return mesh_; }
  const Dg1dOptions& options() const { return opts_; }
  const DomainMapping& mapping() const { return *mapping_; }
  const GclField* gcl_field() const { return gcl_.get(); }

  Vector residual(const Vector& u, const Vector& mu, double t) const override {
    Assembly a;
    assemble(u, mu, t, false, false, nullptr, a);
    return std::move(a.r);
  }

  Matrix jac_state(const Vector& u, const Vector& mu, double t) const override {
    Assembly a;
    assemble(u, mu, t, true, false, nullptr, a);
    Matrix j(std::move(a.dr_dw));  // dr/dU = dr/dw diag(1/sigma)
    for (int row = 0; row < j.rows(); ++row)
      for (int col = 0; col < j.cols(); ++col) j(row, col) /= a.sigma[col];
    return j;
  }

  struct ResidualPartials {
    Matrix dr_dx;     // N x N nodal positions (sigma chain folded when gcl off)
    Matrix dr_dxdot;  // N x N nodal velocities
    Matrix dr_dgbar;  // N x N nodal gbar (empty when gcl off)
  };

  ResidualPartials residual_partials(const Vector& u, const Vector& mu, double t) const {
    Assembly a;
    assemble(u, mu, t, true, true, nullptr, a);
    ResidualPartials out;
    Matrix dr_dsigma = sigma_chain(a, u);
    out.dr_dx = std::move(a.dr_dx);
    if (opts_.gcl == GclMode::on)
      out.dr_dgbar = std::move(dr_dsigma);
    else
      fold_sigma_into_x(dr_dsigma, out.dr_dx);
    out.dr_dxdot = std::move(a.dr_dxdot);
    return out;
  }

  Matrix jac_param(const Vector& u, const Vector& mu, double t) const override {
    const ResidualPartials parts = residual_partials(u, mu, t);
    const int n = dim();
    const int n_mu = num_params();
    Matrix dx(n, n_mu), dxdot(n, n_mu);
    nodal_param_derivatives(mu, t, dx, dxdot);
    Matrix j = parts.dr_dx.matmul(dx);
    j.add_scaled(1.0, parts.dr_dxdot.matmul(dxdot));
    if (opts_.gcl == GclMode::on && n_mu > 0)
      j.add_scaled(1.0, parts.dr_dgbar.matmul(gcl_->sensitivity_at_time(t)));
    return j;
  }

  InitialCondition initial(const Vector& mu) const override {
    return initial_at(mu, opts_.ic.time);
  }

  InitialCondition initial_at(const Vector& mu, double t0) const {
    const int n = dim();
    const int n_mu = num_params();
    InitialCondition ic;

    if (opts_.ic.kind == InitialSpec::Kind::steady) {
      Vector u = conserved_from_physical(Vector(n, opts_.ic.value), mu, t0);
      for (int it = 0;; ++it) {
        Vector r = residual(u, mu, t0);
        if (norm2(r) <= 1e-12 * std::sqrt(static_cast<double>(n))) break;
        if (it == 50) throw std::runtime_error("steady initial condition did not converge");
        const LuSolver lu(jac_state(u, mu, t0));
        scale(-1.0, r);
        axpy(1.0, lu.solve(std::move(r)), u);
      }
      ic.kind = InitialCondition::Kind::steady;
      ic.value = u;
      ic.steady_jac_state = jac_state(u, mu, t0);
      ic.steady_jac_param = jac_param(u, mu, t0);
      return ic;
    }

    Assembly geom;
    build_geometry(mu, t0, geom);
    Vector profile(n, 0.0), dprofile_dx(n, 0.0);
    for (int g = 0; g < n; ++g) {
      if (opts_.ic.kind == InitialSpec::Kind::constant) {
        profile[g] = opts_.ic.value;
      } else {
        const double arg = 2.0 * M_PI * opts_.ic.wavenumber * geom.x[g];
        profile[g] = opts_.ic.value + opts_.ic.amplitude * std::sin(arg);
        dprofile_dx[g] = opts_.ic.amplitude * 2.0 * M_PI * opts_.ic.wavenumber * std::cos(arg);
      }
    }

    ic.kind = InitialCondition::Kind::analytic;
    ic.value = Vector(n);
    for (int g = 0; g < n; ++g) ic.value[g] = geom.sigma[g] * profile[g];

    Matrix dx(n, n_mu), dxdot(n, n_mu);
    nodal_param_derivatives(mu, t0, dx, dxdot);
    Matrix dsigma(n, n_mu);
    if (n_mu > 0)
      dsigma = opts_.gcl == GclMode::on ? gcl_->sensitivity_at_time(t0)
                                        : sigma_x_chain_matrix().matmul(dx);
    ic.du_dmu = Matrix(n, n_mu);
    for (int g = 0; g < n; ++g)
      for (int d = 0; d < n_mu; ++d)
        ic.du_dmu(g, d) = dsigma(g, d) * profile[g] + geom.sigma[g] * dprofile_dx[g] * dx(g, d);
    return ic;
  }

  /// sigma(mu, t) * w for a nodal physical profile w.
  Vector conserved_from_physical(const Vector& w, const Vector& mu, double t) const {
    Assembly geom;
    build_geometry(mu, t, geom);
    Vector u(w.size());
    for (std::size_t g = 0; g < w.size(); ++g) u[g] = geom.sigma[g] * w[g];
    return u;
  }

  /// Physical nodal state w = U / sigma.
  Vector physical_from_conserved(const Vector& u, const Vector& mu, double t) const {
    Assembly geom;
    build_geometry(mu, t, geom);
    Vector w(u.size());
    for (std::size_t g = 0; g < u.size(); ++g) w[g] = u[g] / geom.sigma[g];
    return w;
  }

  /// Physical node positions x(X, mu, t).
  Vector physical_nodes(const Vector& mu, double t) const {
    Assembly geom;
    build_geometry(mu, t, geom);
    return geom.x;
  }

  /// Quadrature L2 norm of (u/sigma - exact(x)) over the domain.
  template <class ExactFn>
  double l2_error(const Vector& u, const Vector& mu, double t, ExactFn&& exact) const {
    Assembly geom;
    build_geometry(mu, t, geom);
    const auto& ref = mesh_.ref();
    const int pp = mesh_.nodes_per_element();
    double acc = 0.0;
    for (int e = 0; e < mesh_.elements(); ++e)
      for (std::size_t q = 0; q < ref.qpoints.size(); ++q) {
        double wq = 0.0, xq = 0.0;
        for (int j = 0; j < pp; ++j) {
          const int g = mesh_.node_index(e, j);
          wq += ref.phi_q(q, j) * u[g] / geom.sigma[g];
          xq += ref.phi_q(q, j) * geom.x[g];
        }
        const double diff = wq - exact(xq);
        acc += mesh_.h() * ref.qweights[q] * diff * diff;
      }
    return std::sqrt(acc);
  }

  // --- solver-consistent QoI evaluations (shared by the integrand objects) --

  void domain_energy_eval(const Vector& u, const Vector& mu, double t, double* value,
                          Vector* jac_u, Vector* jac_mu) const {
    Assembly geom;
    build_geometry(mu, t, geom);
    const auto& ref = mesh_.ref();
    const int pp = mesh_.nodes_per_element();
    const int n = dim();
    double acc = 0.0;
    Vector df_dw(n, 0.0);
    for (int e = 0; e < mesh_.elements(); ++e)
      for (std::size_t q = 0; q < ref.qpoints.size(); ++q) {
        double wq = 0.0;
        for (int j = 0; j < pp; ++j) {
          const int g = mesh_.node_index(e, j);
          wq += ref.phi_q(q, j) * u[g] / geom.sigma[g];
        }
        acc += mesh_.h() * ref.qweights[q] * wq * wq;
        for (int j = 0; j < pp; ++j)
          df_dw[mesh_.node_index(e, j)] += 2.0 * mesh_.h() * ref.qweights[q] * wq * ref.phi_q(q, j);
      }
    if (value) *value = acc;
    if (jac_u) {
      *jac_u = Vector(n);
      for (int g = 0; g < n; ++g) (*jac_u)[g] = df_dw[g] / geom.sigma[g];
    }
    if (jac_mu) {
      Vector df_dsigma(n);
      for (int g = 0; g < n; ++g) df_dsigma[g] = -df_dw[g] * u[g] / (geom.sigma[g] * geom.sigma[g]);
      *jac_mu = param_chain(Vector(n, 0.0), Vector(n, 0.0), df_dsigma, mu, t);
    }
  }

  /// Numerical flux trace at a domain boundary, optionally weighted by the
  /// boundary velocity (the 1D power analog f = xdot_b * Fhat).
  void boundary_flux_eval(const Vector& u, const Vector& mu, double t, BoundarySide side,
                          bool velocity_weight, double* value, Vector* jac_u,
                          Vector* jac_mu) const {
    const bool with_jac = jac_u != nullptr || jac_mu != nullptr;
    Assembly a;
    assemble(u, mu, t, with_jac, jac_mu != nullptr, &side, a);
    const int n = dim();
    const int bnode = side == BoundarySide::left
                          ? mesh_.node_index(0, 0)
                          : mesh_.node_index(mesh_.elements() - 1, mesh_.order());
    const double xdot_b = a.xdot[bnode];
    const double weight = velocity_weight ? xdot_b : 1.0;
    if (value) *value = weight * a.probe_flux;
    if (jac_u) {
      *jac_u = Vector(n);
      for (int g = 0; g < n; ++g) (*jac_u)[g] = weight * a.probe_dflux_dw[g] / a.sigma[g];
    }
    if (jac_mu) {
      Vector df_dx(n, 0.0), df_dxdot(n, 0.0), df_dsigma(n, 0.0);
      for (int g = 0; g < n; ++g) {
        df_dx[g] = weight * a.probe_dflux_dx[g];
        df_dxdot[g] = weight * a.probe_dflux_dxdot[g];
        df_dsigma[g] = -weight * a.probe_dflux_dw[g] * u[g] / (a.sigma[g] * a.sigma[g]);
      }
      if (velocity_weight) df_dxdot[bnode] += a.probe_flux;
      *jac_mu = param_chain(std::move(df_dx), df_dxdot, df_dsigma, mu, t);
    }
  }

  /// df/dmu from nodal-geometry partials: df/dx dx/dmu + df/dxdot dxdot/dmu
  /// plus the scaling-field chain (gbar sensitivity, or sigma(x) folding).
  Vector param_chain(Vector df_dx, const Vector& df_dxdot, const Vector& df_dsigma,
                     const Vector& mu, double t) const {
    const int n = dim();
    const int n_mu = num_params();
    Matrix dx(n, n_mu), dxdot(n, n_mu);
    nodal_param_derivatives(mu, t, dx, dxdot);
    Vector out(n_mu, 0.0);
    if (opts_.gcl == GclMode::on) {
      const Matrix& ds = gcl_->sensitivity_at_time(t);
      for (int g = 0; g < n; ++g)
        if (df_dsigma[g] != 0.0) axpy(df_dsigma[g], ds.row(g), out);
    } else {
      const auto& dn = mesh_.ref().deriv_nodes;
      const int pp = mesh_.nodes_per_element();
      for (int e = 0; e < mesh_.elements(); ++e)
        for (int i = 0; i < pp; ++i) {
          const double c = df_dsigma[mesh_.node_index(e, i)];
          if (c == 0.0) continue;
          for (int j = 0; j < pp; ++j) df_dx[mesh_.node_index(e, j)] += c * dn(i, j) / mesh_.h();
        }
    }
    for (int g = 0; g < n; ++g) {
      if (df_dx[g] != 0.0) axpy(df_dx[g], dx.row(g), out);
      if (df_dxdot[g] != 0.0) axpy(df_dxdot[g], dxdot.row(g), out);
    }
    return out;
  }

 private:
  struct Assembly {
    Vector r;
    Vector x, xdot, sigma;  // nodal geometry and scaling
    Vector w;               // physical nodal state
    Vector tau;             // LDG reference gradient of w
    Matrix dr_dw;           // tau and boundary-data chains folded in
    Matrix dr_dx;           // sigma chain NOT folded (caller decides)
    Matrix dr_dxdot;
    // boundary-flux probe for QoIs
    double probe_flux = 0.0;
    Vector probe_dflux_dw, probe_dflux_dx, probe_dflux_dxdot;
  };

  struct FaceFlux {
    double value = 0.0;
    double du_left = 0.0;
    double du_right = 0.0;
    double dv = 0.0;
  };

  double flux_inv(double u) const {
    return opts_.flux == FluxKind::burgers ? 0.5 * u * u : opts_.advection_speed * u;
  }
  double dflux_inv(double u) const {
    return opts_.flux == FluxKind::burgers ? u : opts_.advection_speed;
  }

  // exact scalar Riemann flux for zeta(u) = f_inv(u) - v u
  FaceFlux godunov(double u_left, double u_right, double v) const {
    FaceFlux out;
    if (opts_.flux == FluxKind::advection_diffusion) {
      const double c = opts_.advection_speed - v;
      if (c >= 0.0) {
        out.value = c * u_left;
        out.du_left = c;
        out.dv = -u_left;
      } else {
        out.value = c * u_right;
        out.du_right = c;
        out.dv = -u_right;
      }
      return out;
    }
    auto zeta = [&](double u) { return 0.5 * u * u - v * u; };
    if (u_left <= u_right) {  // min over [u_left, u_right]; critical point u = v
      if (v <= u_left) {
        out.value = zeta(u_left);
        out.du_left = u_left - v;
        out.dv = -u_left;
      } else if (v >= u_right) {
        out.value = zeta(u_right);
        out.du_right = u_right - v;
        out.dv = -u_right;
      } else {
        out.value = -0.5 * v * v;
        out.dv = -v;
      }
    } else {  // max over [u_right, u_left]: convex, attained at an endpoint
      const double zl = zeta(u_left), zr = zeta(u_right);
      if (zl >= zr) {
        out.value = zl;
        out.du_left = u_left - v;
        out.dv = -u_left;
      } else {
        out.value = zr;
        out.du_right = u_right - v;
        out.dv = -u_right;
      }
    }
    return out;
  }

  void build_geometry(const Vector& mu, double t, Assembly& a) const {
    const int n = dim();
    const int pp = mesh_.nodes_per_element();
    a.x.resize(n);
    a.xdot.resize(n);
    a.sigma.resize(n);
    for (int e = 0; e < mesh_.elements(); ++e)
      for (int j = 0; j < pp; ++j) {
        const int g = mesh_.node_index(e, j);
        const double X = mesh_.node_coord(e, j);
        a.x[g] = mapping_->map(X, mu, t);
        a.xdot[g] = mapping_->velocity(X, mu, t);
      }
    if (opts_.gcl == GclMode::on) {
      if (!gcl_->matches_mu(mu))
        throw std::invalid_argument("GCL field was built for a different parameter vector");
      a.sigma = gcl_->at_time(t);
    } else {
      const auto& dn = mesh_.ref().deriv_nodes;
      for (int e = 0; e < mesh_.elements(); ++e)
        for (int i = 0; i < pp; ++i) {
          double g = 0.0;
          for (int j = 0; j < pp; ++j) g += dn(i, j) * a.x[mesh_.node_index(e, j)];
          a.sigma[mesh_.node_index(e, i)] = g / mesh_.h();
        }
    }
    for (int g = 0; g < n; ++g)
      if (!(a.sigma[g] > 0.0)) throw MappingDegeneracyError(mesh_.node_coord(0, 0), t, a.sigma[g]);
  }

  // dsigma/dx block matrix (gcl off)
  Matrix sigma_x_chain_matrix() const {
    const int n = dim();
    const int pp = mesh_.nodes_per_element();
    const auto& dn = mesh_.ref().deriv_nodes;
    Matrix m(n, n);
    for (int e = 0; e < mesh_.elements(); ++e)
      for (int i = 0; i < pp; ++i)
        for (int j = 0; j < pp; ++j)
          m(mesh_.node_index(e, i), mesh_.node_index(e, j)) = dn(i, j) / mesh_.h();
    return m;
  }

  // dr/dsigma = dr/dw diag(-u/sigma^2)
  Matrix sigma_chain(const Assembly& a, const Vector& u) const {
    Matrix m = a.dr_dw;
    for (int row = 0; row < m.rows(); ++row)
      for (int col = 0; col < m.cols(); ++col)
        m(row, col) *= -u[col] / (a.sigma[col] * a.sigma[col]);
    return m;
  }

  void fold_sigma_into_x(const Matrix& dr_dsigma, Matrix& dr_dx) const {
    const int pp = mesh_.nodes_per_element();
    const auto& dn = mesh_.ref().deriv_nodes;
    for (int row = 0; row < dr_dsigma.rows(); ++row)
      for (int e = 0; e < mesh_.elements(); ++e)
        for (int i = 0; i < pp; ++i) {
          const double c = dr_dsigma(row, mesh_.node_index(e, i));
          if (c == 0.0) continue;
          for (int j = 0; j < pp; ++j)
            dr_dx(row, mesh_.node_index(e, j)) += c * dn(i, j) / mesh_.h();
        }
  }

  void nodal_param_derivatives(const Vector& mu, double t, Matrix& dx, Matrix& dxdot) const {
    const int pp = mesh_.nodes_per_element();
    for (int e = 0; e < mesh_.elements(); ++e)
      for (int j = 0; j < pp; ++j) {
        const int g = mesh_.node_index(e, j);
        const double X = mesh_.node_coord(e, j);
        const Vector dmap = mapping_->dmap_dmu(X, mu, t);
        const Vector dvel = mapping_->dvel_dmu(X, mu, t);
        for (int d = 0; d < num_params(); ++d) {
          dx(g, d) = dmap[d];
          dxdot(g, d) = dvel[d];
        }
      }
  }

  // The single source of truth for the discretization: residual plus, on
  // request, the state/geometry Jacobians and a boundary-flux probe.
  void assemble(const Vector& u, const Vector& mu, double t, bool want_state, bool want_geom,
                const BoundarySide* probe, Assembly& a) const {
    const int n = dim();
    const int pp = mesh_.nodes_per_element();
    const int k_elems = mesh_.elements();
    const int p = mesh_.order();
    const auto& ref = mesh_.ref();
    const int nq = static_cast<int>(ref.qpoints.size());
    const bool viscous = opts_.viscosity > 0.0;
    const double nu = opts_.viscosity;

    build_geometry(mu, t, a);
    a.w.resize(n);
    for (int g = 0; g < n; ++g) a.w[g] = u[g] / a.sigma[g];

    // boundary data in physical coordinates, pulled back through the mapping
    const int left_node = mesh_.node_index(0, 0);
    const int right_node = mesh_.node_index(k_elems - 1, p);
    const double ud[2] = {
        opts_.bc.value(a.x[left_node], t, BoundarySide::left, a.xdot[left_node]),
        opts_.bc.value(a.x[right_node], t, BoundarySide::right, a.xdot[right_node])};
    const double dud_dx[2] = {opts_.bc.dvalue_dx(a.x[left_node], t, BoundarySide::left),
                              opts_.bc.dvalue_dx(a.x[right_node], t, BoundarySide::right)};
    const double dud_dxdot[2] = {opts_.bc.dvalue_dxdot(BoundarySide::left),
                                 opts_.bc.dvalue_dxdot(BoundarySide::right)};

    // LDG value trace: left-element value at interior faces, data at the
    // domain boundaries
    auto u_hat = [&](int f) {
      if (f == 0) return ud[0];
      if (f == k_elems) return ud[1];
      return a.w[mesh_.node_index(f - 1, p)];
    };

    a.tau.assign(n, 0.0);
    if (viscous) {
      Vector rhs(pp);
      for (int e = 0; e < k_elems; ++e) {
        for (int i = 0; i < pp; ++i) {
          double acc = 0.0;
          for (int j = 0; j < pp; ++j) acc += ref.stiff(i, j) * a.w[mesh_.node_index(e, j)];
          rhs[i] = -acc;
        }
        rhs[pp - 1] += u_hat(e + 1);
        rhs[0] -= u_hat(e);
        for (int i = 0; i < pp; ++i) {
          double ti = 0.0;
          for (int m = 0; m < pp; ++m) ti += ref.mass_inv(i, m) * rhs[m];
          a.tau[mesh_.node_index(e, i)] = ti / mesh_.h();
        }
      }
    }

    // face data: traces, velocity, one-sided metric of the flux-side element
    struct FaceRec {
      FaceFlux inv;
      double vis = 0.0;
      double g_face = 1.0;
      double tau_hat = 0.0;
      int ul_col = -1, ur_col = -1;  // w columns; -1 => boundary data
      int v_col = 0;                 // xdot column
      int ve = 0, vn = 0;            // viscous-side element and node
      double total() const { return inv.value + vis; }
    };
    std::vector<FaceRec> face(k_elems + 1);
    for (int f = 0; f <= k_elems; ++f) {
      FaceRec& fr = face[f];
      fr.ul_col = f == 0 ? -1 : mesh_.node_index(f - 1, p);
      fr.ur_col = f == k_elems ? -1 : mesh_.node_index(f, 0);
      fr.v_col = f == 0 ? left_node : mesh_.node_index(f - 1, p);
      fr.ve = f < k_elems ? f : k_elems - 1;
      fr.vn = f < k_elems ? 0 : p;
      const double ul = fr.ul_col < 0 ? ud[0] : a.w[fr.ul_col];
      const double ur = fr.ur_col < 0 ? ud[1] : a.w[fr.ur_col];
      fr.inv = godunov(ul, ur, a.xdot[fr.v_col]);
      if (viscous) {
        double gf = 0.0;
        for (int j = 0; j < pp; ++j)
          gf += ref.deriv_nodes(fr.vn, j) * a.x[mesh_.node_index(fr.ve, j)];
        fr.g_face = gf / mesh_.h();
        fr.tau_hat = a.tau[mesh_.node_index(fr.ve, fr.vn)];
        fr.vis = -nu * fr.tau_hat / fr.g_face;
      }
    }

    // volume terms and residual
    a.r.assign(n, 0.0);
    std::vector<Vector> uq_all(k_elems), vq_all(k_elems), gq_all(k_elems), tq_all(k_elems);
    for (int e = 0; e < k_elems; ++e) {
      Vector& uq = uq_all[e];
      Vector& vq = vq_all[e];
      Vector& gq = gq_all[e];
      Vector& tq = tq_all[e];
      uq.assign(nq, 0.0);
      vq.assign(nq, 0.0);
      gq.assign(nq, 0.0);
      tq.assign(nq, 0.0);
      for (int q = 0; q < nq; ++q) {
        for (int j = 0; j < pp; ++j) {
          const int g = mesh_.node_index(e, j);
          uq[q] += ref.phi_q(q, j) * a.w[g];
          vq[q] += ref.phi_q(q, j) * a.xdot[g];
          gq[q] += ref.dphi_q(q, j) * a.x[g];
          if (viscous) tq[q] += ref.phi_q(q, j) * a.tau[g];
        }
        gq[q] /= mesh_.h();
        const double ftilde =
            flux_inv(uq[q]) - uq[q] * vq[q] - (viscous ? nu * tq[q] / gq[q] : 0.0);
        for (int i = 0; i < pp; ++i)
          a.r[mesh_.node_index(e, i)] += ref.qweights[q] * ref.dphi_q(q, i) * ftilde;
      }
      a.r[mesh_.node_index(e, p)] -= face[e + 1].total();
      a.r[mesh_.node_index(e, 0)] += face[e].total();
    }

    if (probe) {
      const int f = *probe == BoundarySide::left ? 0 : k_elems;
      a.probe_flux = face[f].total();
    }

    if (!want_state && !want_geom) return;  // value (and probe value) only

    // --- Jacobian assembly -------------------------------------------------
    Matrix dr_dw(n, n), dr_dtau(viscous ? n : 0, viscous ? n : 0), dr_dud(n, 2);
    a.dr_dxdot = Matrix(n, n);
    if (want_geom) a.dr_dx = Matrix(n, n);

    for (int e = 0; e < k_elems; ++e) {
      const Vector& uq = uq_all[e];
      const Vector& vq = vq_all[e];
      const Vector& gq = gq_all[e];
      const Vector& tq = tq_all[e];
      for (int q = 0; q < nq; ++q) {
        const double dinv = dflux_inv(uq[q]) - vq[q];
        for (int i = 0; i < pp; ++i) {
          const double wi = ref.qweights[q] * ref.dphi_q(q, i);
          const int row = mesh_.node_index(e, i);
          for (int j = 0; j < pp; ++j) {
            const int col = mesh_.node_index(e, j);
            dr_dw(row, col) += wi * dinv * ref.phi_q(q, j);
            a.dr_dxdot(row, col) += wi * (-uq[q]) * ref.phi_q(q, j);
            if (viscous) {
              dr_dtau(row, col) += wi * (-nu / gq[q]) * ref.phi_q(q, j);
              if (want_geom)
                a.dr_dx(row, col) += wi * (nu * tq[q] / (gq[q] * gq[q])) * ref.dphi_q(q, j) / mesh_.h();
            }
          }
        }
      }
    }

    // face contributions: row (f-1, p) with sign -1; row (f, 0) with sign +1
    auto face_jacobian = [&](int f, int row, double sign) {
      const FaceRec& fr = face[f];
      if (fr.ul_col >= 0)
        dr_dw(row, fr.ul_col) += sign * fr.inv.du_left;
      else
        dr_dud(row, 0) += sign * fr.inv.du_left;
      if (fr.ur_col >= 0)
        dr_dw(row, fr.ur_col) += sign * fr.inv.du_right;
      else
        dr_dud(row, 1) += sign * fr.inv.du_right;
      a.dr_dxdot(row, fr.v_col) += sign * fr.inv.dv;
      if (viscous) {
        dr_dtau(row, mesh_.node_index(fr.ve, fr.vn)) += sign * (-nu / fr.g_face);
        if (want_geom) {
          const double c = sign * (nu * fr.tau_hat / (fr.g_face * fr.g_face));
          for (int j = 0; j < pp; ++j)
            a.dr_dx(row, mesh_.node_index(fr.ve, j)) += c * ref.deriv_nodes(fr.vn, j) / mesh_.h();
        }
      }
    };
    for (int f = 0; f <= k_elems; ++f) {
      if (f >= 1) face_jacobian(f, mesh_.node_index(f - 1, p), -1.0);
      if (f <= k_elems - 1) face_jacobian(f, mesh_.node_index(f, 0), 1.0);
    }

    // tau chains: dtau/dw and dtau/dud
    if (viscous) {
      Matrix dtau_dw(n, n), dtau_dud(n, 2);
      for (int e = 0; e < k_elems; ++e) {
        for (int i = 0; i < pp; ++i) {
          const int row = mesh_.node_index(e, i);
          for (int j = 0; j < pp; ++j) {
            double ms = 0.0;
            for (int m = 0; m < pp; ++m) ms += ref.mass_inv(i, m) * ref.stiff(m, j);
            dtau_dw(row, mesh_.node_index(e, j)) -= ms / mesh_.h();
          }
          if (e < k_elems - 1)
            dtau_dw(row, mesh_.node_index(e, p)) += ref.mass_inv(i, pp - 1) / mesh_.h();
          else
            dtau_dud(row, 1) += ref.mass_inv(i, pp - 1) / mesh_.h();
          if (e > 0)
            dtau_dw(row, mesh_.node_index(e - 1, p)) -= ref.mass_inv(i, 0) / mesh_.h();
          else
            dtau_dud(row, 0) -= ref.mass_inv(i, 0) / mesh_.h();
        }
      }
      dr_dw.add_scaled(1.0, dr_dtau.matmul(dtau_dw));
      dr_dud.add_scaled(1.0, dr_dtau.matmul(dtau_dud));

      if (probe) {
        // boundary-flux probe rows share the same chains
        const int f = *probe == BoundarySide::left ? 0 : k_elems;
        const FaceRec& fr = face[f];
        a.probe_dflux_dw.assign(n, 0.0);
        a.probe_dflux_dx.assign(n, 0.0);
        a.probe_dflux_dxdot.assign(n, 0.0);
        Vector dflux_dtau(n, 0.0), dflux_dud(2, 0.0);
        if (fr.ul_col >= 0)
          a.probe_dflux_dw[fr.ul_col] += fr.inv.du_left;
        else
          dflux_dud[0] += fr.inv.du_left;
        if (fr.ur_col >= 0)
          a.probe_dflux_dw[fr.ur_col] += fr.inv.du_right;
        else
          dflux_dud[1] += fr.inv.du_right;
        a.probe_dflux_dxdot[fr.v_col] += fr.inv.dv;
        dflux_dtau[mesh_.node_index(fr.ve, fr.vn)] += -nu / fr.g_face;
        const double c = nu * fr.tau_hat / (fr.g_face * fr.g_face);
        for (int j = 0; j < pp; ++j)
          a.probe_dflux_dx[mesh_.node_index(fr.ve, j)] += c * ref.deriv_nodes(fr.vn, j) / mesh_.h();
        // tau chain
        for (int g = 0; g < n; ++g) {
          const double cg = dflux_dtau[g];
          if (cg == 0.0) continue;
          axpy(cg, dtau_dw.row(g), a.probe_dflux_dw);
          dflux_dud[0] += cg * dtau_dud(g, 0);
          dflux_dud[1] += cg * dtau_dud(g, 1);
        }
        a.probe_dflux_dx[left_node] += dflux_dud[0] * dud_dx[0];
        a.probe_dflux_dx[right_node] += dflux_dud[1] * dud_dx[1];
        a.probe_dflux_dxdot[left_node] += dflux_dud[0] * dud_dxdot[0];
        a.probe_dflux_dxdot[right_node] += dflux_dud[1] * dud_dxdot[1];
      }
    } else if (probe) {
      const int f = *probe == BoundarySide::left ? 0 : k_elems;
      const FaceRec& fr = face[f];
      a.probe_dflux_dw.assign(n, 0.0);
      a.probe_dflux_dx.assign(n, 0.0);
      a.probe_dflux_dxdot.assign(n, 0.0);
      if (fr.ul_col >= 0) {
        a.probe_dflux_dw[fr.ul_col] += fr.inv.du_left;
      } else {
        a.probe_dflux_dx[left_node] += fr.inv.du_left * dud_dx[0];
        a.probe_dflux_dxdot[left_node] += fr.inv.du_left * dud_dxdot[0];
      }
      if (fr.ur_col >= 0) {
        a.probe_dflux_dw[fr.ur_col] += fr.inv.du_right;
      } else {
        a.probe_dflux_dx[right_node] += fr.inv.du_right * dud_dx[1];
        a.probe_dflux_dxdot[right_node] += fr.inv.du_right * dud_dxdot[1];
      }
      a.probe_dflux_dxdot[fr.v_col] += fr.inv.dv;
    }

    // boundary-data chains into the nodal geometry
    if (want_geom) {
      for (int row = 0; row < n; ++row) {
        a.dr_dx(row, left_node) += dr_dud(row, 0) * dud_dx[0];
        a.dr_dx(row, right_node) += dr_dud(row, 1) * dud_dx[1];
      }
    }
    for (int row = 0; row < n; ++row) {
      if (dud_dxdot[0] != 0.0) a.dr_dxdot(row, left_node) += dr_dud(row, 0) * dud_dxdot[0];
      if (dud_dxdot[1] != 0.0) a.dr_dxdot(row, right_node) += dr_dud(row, 1) * dud_dxdot[1];
    }
    a.dr_dw = std::move(dr_dw);
  }

  Dg1dOptions opts_;
  Mesh1d mesh_;
  std::shared_ptr<const DomainMapping> mapping_;
  std::shared_ptr<const GclField> gcl_;
  Matrix mass_;
};

// --- QoI integrands ----------------------------------------------------------

class Dg1dDomainEnergy final : public QoiIntegrand {
 public:
  explicit Dg1dDomainEnergy(std::shared_ptr<const Dg1dSystem> sys) : sys_(std::move(sys)) {}
  double value(const Vector& u, const Vector& mu, double t) const override {
    double v;
    sys_->domain_energy_eval(u, mu, t, &v, nullptr, nullptr);
    return v;
  }
  Vector jac_state(const Vector& u, const Vector& mu, double t) const override {
    Vector j;
    sys_->domain_energy_eval(u, mu, t, nullptr, &j, nullptr);
    return j;
  }
  Vector jac_param(const Vector& u, const Vector& mu, double t) const override {
    Vector j;
    sys_->domain_energy_eval(u, mu, t, nullptr, nullptr, &j);
    return j;
  }

 private:
  std::shared_ptr<const Dg1dSystem> sys_;
};

class Dg1dBoundaryWork final : public QoiIntegrand {
 public:
  Dg1dBoundaryWork(std::shared_ptr<const Dg1dSystem> sys, BoundarySide side, bool velocity_weight)
      : sys_(std::move(sys)), side_(side), weight_(velocity_weight) {}
  double value(const Vector& u, const Vector& mu, double t) const override {
    double v;
    sys_->boundary_flux_eval(u, mu, t, side_, weight_, &v, nullptr, nullptr);
    return v;
  }
  Vector jac_state(const Vector& u, const Vector& mu, double t) const override {
    Vector j;
    sys_->boundary_flux_eval(u, mu, t, side_, weight_, nullptr, &j, nullptr);
    return j;
  }
  Vector jac_param(const Vector& u, const Vector& mu, double t) const override {
    Vector j;
    sys_->boundary_flux_eval(u, mu, t, side_, weight_, nullptr, nullptr, &j);
    return j;
  }

 private:
  std::shared_ptr<const Dg1dSystem> sys_;
  BoundarySide side_;
  bool weight_;
};

enum class ModelQoi { boundary_work, domain_energy, terminal_state_norm };

inline ModelQoi model_qoi_from_string(const std::string& s) {
  if (s == "boundary_work") return ModelQoi::boundary_work;
  if (s == "domain_energy") return ModelQoi::domain_energy;
  if (s == "terminal_state_norm") return ModelQoi::terminal_state_norm;
  throw std::invalid_argument("unknown qoi kind: " + s);
}

/// Solver-consistent model QoIs: boundary_work is the 1D power analog
/// (boundary velocity times the numerical flux trace at the moving end),
/// domain_energy integrates u^2 with the DG quadrature, terminal_state_norm
/// is the same integrand under a time impulse at t*.
inline QoiSpec model_qoi(std::shared_ptr<const Dg1dSystem> sys, ModelQoi kind,
                         const std::string& name, double t_star = 0.0,
                         BoundarySide side = BoundarySide::left) {
  QoiSpec spec;
  spec.name = name;
  switch (kind) {
    case ModelQoi::boundary_work:
      spec.weight = QoiWeight::space_point;
      spec.x_star = side == BoundarySide::left ? 0.0 : 1.0;
      spec.integrand = std::make_shared<Dg1dBoundaryWork>(sys, side, true);
      break;
    case ModelQoi::domain_energy:
      spec.weight = QoiWeight::uniform;
      spec.integrand = std::make_shared<Dg1dDomainEnergy>(sys);
      break;
    case ModelQoi::terminal_state_norm:
      spec.weight = QoiWeight::time_impulse;
      spec.t_star = t_star;
      spec.integrand = std::make_shared<Dg1dDomainEnergy>(sys);
      break;
  }
  return spec;
}

}  // namespace adjflow
