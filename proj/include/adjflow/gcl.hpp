// The geometric conservation law auxiliary field: gbar solves
//   d gbar/dt - d/dX (g G^{-1} v_G) = 0
// element-locally (the flux is continuous, so the physical flux serves as
// the numerical flux and no neighbor data is needed), integrated with the
// same DIRK tableau and grid as the state equation. In 1D the flux reduces
// to the interpolated nodal mesh velocity. Because the right side is
// independent of gbar, every stage is a single mass solve, and the
// parameter sensitivity d gbar/d mu integrates the same way with rhs
// d r_gbar / d xdot * d xdot / d mu. Both fields are sampled at every stage
// and step time up front; primal, adjoint and tangent passes all read the
// same cache.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "adjflow/ale.hpp"
#include "adjflow/linalg.hpp"
#include "adjflow/mesh.hpp"
#include "adjflow/tableau.hpp"
#include "adjflow/time_grid.hpp"

namespace adjflow {

class GclField {
 public:
  GclField() = default;

  const Vector& mu() const { return mu_; }
  bool has_sensitivity() const { return !sens_.empty(); }

  bool matches_mu(const Vector& mu) const { return mu == mu_; }

  /// Nodal gbar at a cached time; throws on a time that was never sampled.
  const Vector& at_time(double t) const { return gbar_[index_of(t)]; }

  /// Nodal d gbar / d mu (num_nodes x N_mu) at a cached time.
  const Matrix& sensitivity_at_time(double t) const {
    if (sens_.empty()) throw std::logic_error("GclField built without sensitivities");
    return sens_[index_of(t)];
  }

  double min_value() const {
    double m = gbar_.empty() ? 1.0 : gbar_.front().front();
    for (const auto& g : gbar_)
      for (double v : g) m = std::min(m, v);
    return m;
  }

 private:
  friend GclField gcl_integrate(const DomainMapping&, const Mesh1d&, const ButcherTableau&,
                                const TimeGrid&, const Vector&, bool);

  std::size_t index_of(double t) const {
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    std::size_t best = times_.size();
    double dist = 1e300;
    if (it != times_.end()) {
      best = static_cast<std::size_t>(it - times_.begin());
      dist = std::abs(*it - t);
    }
    if (it != times_.begin()) {
      const auto prev = it - 1;
      if (std::abs(*prev - t) < dist) {
        best = static_cast<std::size_t>(prev - times_.begin());
        dist = std::abs(*prev - t);
      }
    }
    if (best == times_.size() || dist > 1e-9 * (1.0 + std::abs(t)))
      throw std::invalid_argument("gbar requested at an unsampled time t=" + std::to_string(t));
    return best;
  }

  void push(double t, Vector gbar, Matrix sens, bool with_sens) {
    if (!times_.empty() && t <= times_.back() + 1e-14 * (1.0 + std::abs(t))) {
      // stiffly accurate tableaus revisit the step endpoint; values coincide
      return;
    }
    times_.push_back(t);
    gbar_.push_back(std::move(gbar));
    if (with_sens) sens_.push_back(std::move(sens));
  }

  Vector mu_;
  std::vector<double> times_;
  std::vector<Vector> gbar_;
  std::vector<Matrix> sens_;
};

namespace detail {

// face-minus-volume operator C with r_gbar,e = C * xdot_e:
// C(i,j) = delta_ip delta_jp - delta_i0 delta_j0 - stiff(i,j)
inline Matrix gbar_rhs_operator(const ReferenceElement1d& ref) {
  const int pp = ref.p + 1;
  Matrix c(pp, pp);
  for (int i = 0; i < pp; ++i)
    for (int j = 0; j < pp; ++j) c(i, j) = -ref.stiff(i, j);
  c(pp - 1, pp - 1) += 1.0;
  c(0, 0) -= 1.0;
  return c;
}

}  // namespace detail

/// Integrates the gbar ODE (optionally with its mu-sensitivity) over all
/// stage and step times of (tab, grid). gbar(., 0) is initialized to the
/// interpolated metric determinant g(., mu, 0), so the GCL-scaled state
/// equals the plain ALE state at t = 0.
inline GclField gcl_integrate(const DomainMapping& mapping, const Mesh1d& mesh,
                              const ButcherTableau& tab, const TimeGrid& grid, const Vector& mu,
                              bool with_sensitivity = false) {
  const int pp = mesh.nodes_per_element();
  const int n = mesh.num_nodes();
  const int n_mu = mapping.num_params();
  const int s = tab.stages;
  const ReferenceElement1d& ref = mesh.ref();
  const Matrix c_op = detail::gbar_rhs_operator(ref);

  GclField field;
  field.mu_ = mu;

  // rhs of M_e k = dt C xdot_e, i.e. k = (dt/h) Minv C xdot_e per element
  auto eval_k = [&](double t, double dt, Vector& k, Matrix& k_sens) {
    k.assign(n, 0.0);
    if (with_sensitivity) k_sens = Matrix(n, n_mu);
    Vector xdot(pp);
    std::vector<Vector> dvel(pp);
    for (int e = 0; e < mesh.elements(); ++e) {
      for (int j = 0; j < pp; ++j) {
        const double X = mesh.node_coord(e, j);
        xdot[j] = mapping.velocity(X, mu, t);
        if (with_sensitivity) dvel[j] = mapping.dvel_dmu(X, mu, t);
      }
      // tmp = C xdot; k_e = (dt/h) Minv tmp
      Vector tmp(pp, 0.0);
      for (int i = 0; i < pp; ++i)
        for (int j = 0; j < pp; ++j) tmp[i] += c_op(i, j) * xdot[j];
      for (int i = 0; i < pp; ++i) {
        double ki = 0.0;
        for (int m = 0; m < pp; ++m) ki += ref.mass_inv(i, m) * tmp[m];
        k[mesh.node_index(e, i)] = dt / mesh.h() * ki;
      }
      if (with_sensitivity) {
        for (int d = 0; d < n_mu; ++d) {
          Vector tmps(pp, 0.0);
          for (int i = 0; i < pp; ++i)
            for (int j = 0; j < pp; ++j) tmps[i] += c_op(i, j) * dvel[j][d];
          for (int i = 0; i < pp; ++i) {
            double ki = 0.0;
            for (int m = 0; m < pp; ++m) ki += ref.mass_inv(i, m) * tmps[m];
            k_sens(mesh.node_index(e, i), d) = dt / mesh.h() * ki;
          }
        }
      }
    }
  };

  // gbar(0) = interpolated g at the nodes; sensitivity via the nodal chain
  Vector gbar(n, 0.0);
  Matrix sens(with_sensitivity ? n : 0, with_sensitivity ? n_mu : 0);
  {
    Vector x(pp);
    std::vector<Vector> dx(pp);
    for (int e = 0; e < mesh.elements(); ++e) {
      for (int j = 0; j < pp; ++j) {
        const double X = mesh.node_coord(e, j);
        x[j] = mapping.map(X, mu, grid.t_initial());
        if (with_sensitivity) dx[j] = mapping.dmap_dmu(X, mu, grid.t_initial());
      }
      for (int i = 0; i < pp; ++i) {
        double g = 0.0;
        for (int j = 0; j < pp; ++j) g += ref.deriv_nodes(i, j) * x[j];
        gbar[mesh.node_index(e, i)] = g / mesh.h();
        if (with_sensitivity)
          for (int d = 0; d < n_mu; ++d) {
            double gs = 0.0;
            for (int j = 0; j < pp; ++j) gs += ref.deriv_nodes(i, j) * dx[j][d];
            sens(mesh.node_index(e, i), d) = gs / mesh.h();
          }
      }
    }
  }
  field.push(grid.t_initial(), gbar, sens, with_sensitivity);

  std::vector<Vector> k(s);
  std::vector<Matrix> k_sens(s);
  for (int nstep = 1; nstep <= grid.steps(); ++nstep) {
    const double dt = grid.dt(nstep);
    for (int i = 1; i <= s; ++i) {
      eval_k(grid.stage_time(nstep, tab, i), dt, k[i - 1], k_sens[i - 1]);
      Vector stage = gbar;
      Matrix stage_sens = sens;
      for (int j = 1; j <= i; ++j) {
        axpy(tab.a(i - 1, j - 1), k[j - 1], stage);
        if (with_sensitivity) stage_sens.add_scaled(tab.a(i - 1, j - 1), k_sens[j - 1]);
      }
      field.push(grid.stage_time(nstep, tab, i), std::move(stage), std::move(stage_sens),
                 with_sensitivity);
    }
    for (int i = 0; i < s; ++i) {
      axpy(tab.b[i], k[i], gbar);
      if (with_sensitivity) sens.add_scaled(tab.b[i], k_sens[i]);
    }
    field.push(grid.time(nstep), gbar, sens, with_sensitivity);
  }

  if (field.min_value() <= 0.0)
    throw MappingDegeneracyError(0.0, grid.t_final(), field.min_value());
  return field;
}

/// gbar with its parameter sensitivity (direct differentiation of the gbar
/// ODE, same DIRK discretization).
inline GclField gcl_sensitivity(const DomainMapping& mapping, const Mesh1d& mesh,
                                const ButcherTableau& tab, const TimeGrid& grid, const Vector& mu) {
  return gcl_integrate(mapping, mesh, tab, grid, mu, true);
}

}  // namespace adjflow
