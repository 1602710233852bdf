// 1D nodal DG machinery on the fixed reference domain: Gauss-Lobatto nodal
// basis per element, Gauss-Legendre volume quadrature (order 3p+1 to bound
// aliasing of nonlinear fluxes), and the block-diagonal reference mass
// matrix. Reference elements never move; the ALE mapping carries all motion.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "adjflow/linalg.hpp"

namespace adjflow {

namespace detail {

// Legendre P_n(x) and derivative by recurrence.
inline void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0);
}

}  // namespace detail

/// Gauss-Legendre nodes/weights on [-1, 1].
inline void gauss_legendre(int n, Vector& nodes, Vector& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p, dp;
      detail::legendre(n, x, p, dp);
      const double dx = -p / dp;
      x += dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p, dp;
    detail::legendre(n, x, p, dp);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

/// Gauss-Lobatto nodes on [-1, 1] (p+1 points, includes the endpoints).
inline Vector gauss_lobatto(int p) {
  const int n = p + 1;
  Vector x(n);
  x[0] = -1.0;
  x[n - 1] = 1.0;
  for (int i = 1; i < n - 1; ++i) {
    // interior roots of P'_p; Chebyshev-Lobatto initial guess
    double z = -std::cos(M_PI * i / p);
    for (int it = 0; it < 100; ++it) {
      double pm, dpm;
      detail::legendre(p, z, pm, dpm);
      // Newton on f = dP_p/dx: f' from the Legendre ODE
      const double d2 = (2.0 * z * dpm - p * (p + 1.0) * pm) / (1.0 - z * z);
      const double dz = -dpm / d2;
      z += dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = z;
  }
  return x;
}

/// Nodal reference element on [0, 1]: Lobatto nodes, Lagrange basis sampled
/// at the quadrature points, exact mass and "stiffness" integrals.
struct ReferenceElement1d {
  int p = 1;
  Vector nodes;       // p+1 Lobatto nodes on [0,1]
  Vector qpoints;     // volume quadrature on [0,1]
  Vector qweights;
  Matrix phi_q;       // nq x (p+1), basis values at quadrature points
  Matrix dphi_q;      // nq x (p+1), d/dxi at quadrature points
  Matrix deriv_nodes; // (p+1)^2, dphi_j/dxi at node i
  Matrix mass;        // \int phi_i phi_j
  Matrix mass_inv;
  Matrix stiff;       // \int phi_i' phi_j

  explicit ReferenceElement1d(int order) : p(order) {
    if (p < 1) throw std::invalid_argument("polynomial order must be >= 1");
    const Vector lob = gauss_lobatto(p);
    nodes.resize(p + 1);
    for (int i = 0; i <= p; ++i) nodes[i] = 0.5 * (lob[i] + 1.0);

    Vector gl_nodes, gl_weights;
    const int nq = (3 * p + 2) / 2 + 1;  // exact for degree 3p+1
    gauss_legendre(nq, gl_nodes, gl_weights);
    qpoints.resize(nq);
    qweights.resize(nq);
    for (int q = 0; q < nq; ++q) {
      qpoints[q] = 0.5 * (gl_nodes[q] + 1.0);
      qweights[q] = 0.5 * gl_weights[q];
    }

    phi_q = Matrix(nq, p + 1);
    dphi_q = Matrix(nq, p + 1);
    for (int q = 0; q < nq; ++q)
      for (int j = 0; j <= p; ++j) {
        phi_q(q, j) = lagrange(j, qpoints[q]);
        dphi_q(q, j) = lagrange_deriv(j, qpoints[q]);
      }

    deriv_nodes = Matrix(p + 1, p + 1);
    for (int i = 0; i <= p; ++i)
      for (int j = 0; j <= p; ++j) deriv_nodes(i, j) = lagrange_deriv(j, nodes[i]);

    mass = Matrix(p + 1, p + 1);
    stiff = Matrix(p + 1, p + 1);
    for (int i = 0; i <= p; ++i)
      for (int j = 0; j <= p; ++j) {
        double m = 0.0, s = 0.0;
        for (int q = 0; q < nq; ++q) {
          m += qweights[q] * phi_q(q, i) * phi_q(q, j);
          s += qweights[q] * dphi_q(q, i) * phi_q(q, j);
        }
        mass(i, j) = m;
        stiff(i, j) = s;
      }
    mass_inv = LuSolver(mass).solve_matrix(Matrix::identity(p + 1));
  }

  double lagrange(int j, double x) const {
    double v = 1.0;
    for (int m = 0; m <= p; ++m) {
      if (m == j) continue;
      v *= (x - nodes[m]) / (nodes[j] - nodes[m]);
    }
    return v;
  }

  double lagrange_deriv(int j, double x) const {
    double sum = 0.0;
    for (int k = 0; k <= p; ++k) {
      if (k == j) continue;
      double prod = 1.0 / (nodes[j] - nodes[k]);
      for (int m = 0; m <= p; ++m) {
        if (m == j || m == k) continue;
        prod *= (x - nodes[m]) / (nodes[j] - nodes[m]);
      }
      sum += prod;
    }
    return sum;
  }
};

/// Uniform 1D reference mesh with K elements on [x_left, x_right]; elements
/// stay fixed for all (mu, t).
class Mesh1d {
 public:
  Mesh1d(int elements, int order, double x_left = 0.0, double x_right = 1.0)
      : k_(elements), ref_(order), x_left_(x_left), x_right_(x_right) {
    if (elements < 1) throw std::invalid_argument("mesh needs at least one element");
    h_ = (x_right - x_left) / elements;
  }

  int elements() const { return k_; }
  int order() const { return ref_.p; }
  int nodes_per_element() const { return ref_.p + 1; }
  int num_nodes() const { return k_ * (ref_.p + 1); }
  double h() const { return h_; }
  double x_left() const { return x_left_; }
  double x_right() const { return x_right_; }
  const ReferenceElement1d& ref() const { return ref_; }

  int node_index(int elem, int j) const { return elem * (ref_.p + 1) + j; }
  double node_coord(int elem, int j) const { return x_left_ + (elem + ref_.nodes[j]) * h_; }
  double element_left(int elem) const { return x_left_ + elem * h_; }

 private:
  int k_;
  ReferenceElement1d ref_;
  double x_left_, x_right_;
  double h_;
};

/// Reference-element mass integrals, block diagonal over elements; exact for
/// degree 2p, symmetric positive definite.
inline Matrix assemble_mass(const Mesh1d& mesh) {
  const int n = mesh.num_nodes();
  const int pp = mesh.nodes_per_element();
  Matrix m(n, n);
  for (int e = 0; e < mesh.elements(); ++e)
    for (int i = 0; i < pp; ++i)
      for (int j = 0; j < pp; ++j)
        m(mesh.node_index(e, i), mesh.node_index(e, j)) = mesh.h() * mesh.ref().mass(i, j);
  return m;
}

}  // namespace adjflow
