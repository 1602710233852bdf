// Diagonally implicit Runge-Kutta tableaus: a lower-triangular (A, b, c) with
// stages solved in sequence, each a nonlinear system of the base dimension.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "adjflow/linalg.hpp"

namespace adjflow {

enum class DirkScheme { dirk1, dirk2, dirk3 };

inline const char* to_string(DirkScheme k) {
  switch (k) {
    case DirkScheme::dirk1: return "dirk1";
    case DirkScheme::dirk2: return "dirk2";
    case DirkScheme::dirk3: return "dirk3";
  }
  return "?";
}

inline DirkScheme dirk_scheme_from_string(const std::string& s) {
  if (s == "dirk1") return DirkScheme::dirk1;
  if (s == "dirk2") return DirkScheme::dirk2;
  if (s == "dirk3") return DirkScheme::dirk3;
  throw std::invalid_argument("unknown DIRK scheme: " + s);
}

struct ButcherTableau {
  int stages = 0;
  Matrix a;  // stages x stages, lower triangular
  Vector b;
  Vector c;
};

/// dirk1: backward Euler. dirk2: the 2-stage, A-stable, stiffly accurate
/// scheme with alpha = 1 - sqrt(2)/2. dirk3: the 3-stage, 3rd-order scheme
/// with alpha = 0.435866521508459; the remaining weights follow from
/// gamma = -(6a^2 - 16a + 1)/4 and omega = (6a^2 - 20a + 5)/4.
inline ButcherTableau make_tableau(DirkScheme kind) {
  ButcherTableau tab;
  switch (kind) {
    case DirkScheme::dirk1: {
      tab.stages = 1;
      tab.a = Matrix(1, 1);
      tab.a(0, 0) = 1.0;
      tab.b = {1.0};
      tab.c = {1.0};
      break;
    }
    case DirkScheme::dirk2: {
      const double alpha = 1.0 - std::sqrt(2.0) / 2.0;
      tab.stages = 2;
      tab.a = Matrix(2, 2);
      tab.a(0, 0) = alpha;
      tab.a(1, 0) = 1.0 - alpha;
      tab.a(1, 1) = alpha;
      tab.b = {1.0 - alpha, alpha};
      tab.c = {alpha, 1.0};
      break;
    }
    case DirkScheme::dirk3: {
      const double alpha = 0.435866521508459;
      const double gamma = -(6.0 * alpha * alpha - 16.0 * alpha + 1.0) / 4.0;
      const double omega = (6.0 * alpha * alpha - 20.0 * alpha + 5.0) / 4.0;
      tab.stages = 3;
      tab.a = Matrix(3, 3);
      tab.a(0, 0) = alpha;
      tab.a(1, 0) = (1.0 + alpha) / 2.0 - alpha;
      tab.a(1, 1) = alpha;
      tab.a(2, 0) = gamma;
      tab.a(2, 1) = omega;
      tab.a(2, 2) = alpha;
      tab.b = {gamma, omega, alpha};
      tab.c = {alpha, (1.0 + alpha) / 2.0, 1.0};
      break;
    }
  }
  return tab;
}

struct TableauCheck {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct TableauValidation {
  std::vector<TableauCheck> checks;

  bool structural_pass() const {
    for (const auto& c : checks)
      if (!c.pass && (c.name == "lower_triangular" || c.name == "row_sum" || c.name == "b_sum"))
        return false;
    return true;
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Structural invariants plus the order conditions up to 3. Reports, never
/// throws: a tableau failing an order condition is simply lower order.
inline TableauValidation validate(const ButcherTableau& tab) {
  TableauValidation v;
  const int s = tab.stages;

  double upper = 0.0;
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j) upper = std::max(upper, std::abs(tab.a(i, j)));
  v.checks.push_back({"lower_triangular", upper, 0.0, upper == 0.0});

  double row_sum = 0.0;
  for (int i = 0; i < s; ++i) {
    double r = -tab.c[i];
    for (int j = 0; j <= i; ++j) r += tab.a(i, j);
    row_sum = std::max(row_sum, std::abs(r));
  }
  v.checks.push_back({"row_sum", row_sum, 1e-14, row_sum <= 1e-14});

  double bs = -1.0;
  for (int i = 0; i < s; ++i) bs += tab.b[i];
  v.checks.push_back({"b_sum", std::abs(bs), 1e-14, std::abs(bs) <= 1e-14});

  double o2 = -0.5, o3a = -1.0 / 3.0, o3b = -1.0 / 6.0;
  for (int i = 0; i < s; ++i) {
    o2 += tab.b[i] * tab.c[i];
    o3a += tab.b[i] * tab.c[i] * tab.c[i];
    for (int j = 0; j <= i; ++j) o3b += tab.b[i] * tab.a(i, j) * tab.c[j];
  }
  v.checks.push_back({"order2_bc", std::abs(o2), 1e-13, std::abs(o2) <= 1e-13});
  v.checks.push_back({"order3_bcc", std::abs(o3a), 1e-13, std::abs(o3a) <= 1e-13});
  v.checks.push_back({"order3_bac", std::abs(o3b), 1e-13, std::abs(o3b) <= 1e-13});
  return v;
}

}  // namespace adjflow
