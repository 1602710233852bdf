// Cubic-spline parametrization of the time signals driving the domain
// motion. Knot values are the optimization parameters, so evaluation carries
// derivatives with respect to them alongside the time derivatives. Two
// boundary treatments: clamped (pinned end values and slopes) and
// mirrored-periodic, s(t) = -s(t + T/2).
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "adjflow/linalg.hpp"

namespace adjflow {

struct SplineEval {
  double value = 0.0;
  double rate = 0.0;       // d(value)/dt
  double curvature = 0.0;  // d^2(value)/dt^2
  Vector dvalue_dknots;    // linear: independent of the knot values
  Vector drate_dknots;
};

namespace detail {

// Cubic Hermite on [0,h] from endpoint values/slopes, with derivatives.
inline void hermite(double y0, double y1, double s0, double s1, double h, double u,
                    double& val, double& rate, double& curv) {
  const double z = u / h;
  const double z2 = z * z, z3 = z2 * z;
  const double h00 = 2.0 * z3 - 3.0 * z2 + 1.0;
  const double h10 = z3 - 2.0 * z2 + z;
  const double h01 = -2.0 * z3 + 3.0 * z2;
  const double h11 = z3 - z2;
  val = h00 * y0 + h * h10 * s0 + h01 * y1 + h * h11 * s1;
  const double d00 = (6.0 * z2 - 6.0 * z) / h;
  const double d10 = 3.0 * z2 - 4.0 * z + 1.0;
  const double d01 = (-6.0 * z2 + 6.0 * z) / h;
  const double d11 = 3.0 * z2 - 2.0 * z;
  rate = d00 * y0 + d10 * s0 + d01 * y1 + d11 * s1;
  const double c00 = (12.0 * z - 6.0) / (h * h);
  const double c10 = (6.0 * z - 4.0) / h;
  const double c01 = (-12.0 * z + 6.0) / (h * h);
  const double c11 = (6.0 * z - 2.0) / h;
  curv = c00 * y0 + c10 * s0 + c01 * y1 + c11 * s1;
}

}  // namespace detail

enum class SplineBoundary { clamped, mirrored_periodic };

/// Time signal backed by a cubic spline on uniform knots. For the clamped
/// kind the free parameters are the interior knot values (ends pinned); for
/// the mirrored-periodic kind all m supplied knot values on the half-period
/// grid are free and the half shift carries the sign flip.
class SplineSignal {
 public:
  /// Clamped spline on [0, horizon] through end_value0/end_value1 with
  /// pinned end slopes; `interior` holds the free knot values.
  static SplineSignal clamped(double horizon, Vector interior, double end_value0 = 0.0,
                              double end_value1 = 0.0, double end_slope0 = 0.0,
                              double end_slope1 = 0.0) {
    SplineSignal s;
    s.boundary_ = SplineBoundary::clamped;
    s.horizon_ = horizon;
    s.m_free_ = static_cast<int>(interior.size());
    const int m = s.m_free_ + 1;  // intervals
    s.knot_count_ = m + 1;
    s.h_ = horizon / m;
    s.values_ = Vector(s.knot_count_);
    s.values_.front() = end_value0;
    s.values_.back() = end_value1;
    for (int j = 0; j < s.m_free_; ++j) s.values_[j + 1] = interior[j];
    s.end_slope0_ = end_slope0;
    s.end_slope1_ = end_slope1;
    s.build();
    return s;
  }

  /// Mirrored-periodic spline with period `horizon`: the m free values sit
  /// on the uniform half-period grid and s(t + horizon/2) = -s(t) exactly.
  static SplineSignal mirrored_periodic(double horizon, Vector free_values) {
    if (free_values.empty()) throw std::invalid_argument("mirrored spline needs at least one knot");
    SplineSignal s;
    s.boundary_ = SplineBoundary::mirrored_periodic;
    s.horizon_ = horizon;
    s.m_free_ = static_cast<int>(free_values.size());
    s.knot_count_ = 2 * s.m_free_;  // full period
    s.h_ = horizon / s.knot_count_;
    s.values_ = Vector(s.knot_count_);
    for (int j = 0; j < s.m_free_; ++j) {
      s.values_[j] = free_values[j];
      s.values_[j + s.m_free_] = -free_values[j];
    }
    s.build();
    return s;
  }

  double horizon() const { return horizon_; }
  int num_free_knots() const { return m_free_; }
  SplineBoundary boundary() const { return boundary_; }

  SplineEval eval(double t) const {
    double tq = t;
    if (boundary_ == SplineBoundary::mirrored_periodic) {
      tq = std::fmod(t, horizon_);
      if (tq < 0.0) tq += horizon_;
    } else if (t < 0.0 || t > horizon_ * (1.0 + 1e-12)) {
      throw std::domain_error("spline evaluated outside [0, T]");
    }

    SplineEval out;
    out.dvalue_dknots = Vector(m_free_, 0.0);
    out.drate_dknots = Vector(m_free_, 0.0);

    const int intervals = (boundary_ == SplineBoundary::clamped) ? knot_count_ - 1 : knot_count_;
    int k = static_cast<int>(std::floor(tq / h_));
    k = std::max(0, std::min(k, intervals - 1));
    const double u = tq - k * h_;

    auto piece = [&](const Vector& vals, const Vector& slopes, double& val, double& rate,
                     double& curv) {
      const double y0 = vals[k];
      const double y1 = (k + 1 < static_cast<int>(vals.size())) ? vals[k + 1] : wrap_value(vals, k + 1);
      const double s0 = slopes[k];
      const double s1 = (k + 1 < static_cast<int>(slopes.size())) ? slopes[k + 1] : wrap_value(slopes, k + 1);
      detail::hermite(y0, y1, s0, s1, h_, u, val, rate, curv);
    };

    piece(values_, slopes_, out.value, out.rate, out.curvature);
    for (int j = 0; j < m_free_; ++j) {
      double v, r, c;
      piece(basis_values_[j], basis_slopes_[j], v, r, c);
      out.dvalue_dknots[j] = v;
      out.drate_dknots[j] = r;
    }
    return out;
  }

 private:
  double wrap_value(const Vector& v, int idx) const {
    // mirrored-periodic wrap: index knot_count_ aliases knot 0 (full period).
    return v[idx % knot_count_];
  }

  void build() {
    slopes_ = solve_slopes(values_, end_slope0_, end_slope1_);
    basis_values_.assign(m_free_, Vector(knot_count_, 0.0));
    basis_slopes_.resize(m_free_);
    for (int j = 0; j < m_free_; ++j) {
      Vector e(knot_count_, 0.0);
      if (boundary_ == SplineBoundary::clamped) {
        e[j + 1] = 1.0;
      } else {
        e[j] = 1.0;
        e[j + m_free_] = -1.0;
      }
      basis_values_[j] = e;
      // basis responses hold the pinned end slopes fixed
      basis_slopes_[j] = solve_slopes(e, 0.0, 0.0);
    }
  }

  // C2 continuity on uniform knots: s_{k-1} + 4 s_k + s_{k+1} = 3 (y_{k+1} - y_{k-1}) / h.
  Vector solve_slopes(const Vector& y, double d0, double d1) const {
    const int n = knot_count_;
    if (boundary_ == SplineBoundary::clamped) {
      Matrix a(n, n);
      Vector rhs(n, 0.0);
      a(0, 0) = 1.0;
      rhs[0] = d0;
      a(n - 1, n - 1) = 1.0;
      rhs[n - 1] = d1;
      for (int k = 1; k < n - 1; ++k) {
        a(k, k - 1) = 1.0;
        a(k, k) = 4.0;
        a(k, k + 1) = 1.0;
        rhs[k] = 3.0 * (y[k + 1] - y[k - 1]) / h_;
      }
      return LuSolver(std::move(a)).solve(std::move(rhs));
    }
    // Antiperiodic reduced system: s_{k + m} = -s_k, solved on the first m
    // slopes; wrap of index m hits 0 with a sign flip.
    const int m = m_free_;
    Matrix a(m, m);
    Vector rhs(m, 0.0);
    auto yv = [&](int idx) {
      idx = ((idx % n) + n) % n;
      return y[idx];
    };
    for (int k = 0; k < m; ++k) {
      a(k, k) += 4.0;
      const int km = k - 1, kp = k + 1;
      if (km >= 0) a(k, km) += 1.0; else a(k, (km + m) % m) -= 1.0;
      if (kp < m) a(k, kp) += 1.0; else a(k, kp % m) -= 1.0;
      rhs[k] = 3.0 * (yv(k + 1) - yv(k - 1)) / h_;
    }
    const Vector half = LuSolver(std::move(a)).solve(std::move(rhs));
    Vector full(n);
    for (int k = 0; k < m; ++k) {
      full[k] = half[k];
      full[k + m] = -half[k];
    }
    return full;
  }

  SplineBoundary boundary_ = SplineBoundary::clamped;
  double horizon_ = 1.0;
  double h_ = 1.0;
  int knot_count_ = 0;
  int m_free_ = 0;
  double end_slope0_ = 0.0, end_slope1_ = 0.0;
  Vector values_;
  Vector slopes_;
  std::vector<Vector> basis_values_;
  std::vector<Vector> basis_slopes_;
};

/// Startup blend b(t) = 1 - exp(-t^2): kills the initial transient of a
/// periodic signal (b(0) = db/dt(0) = 0) and approaches 1 rapidly.
inline double temporal_blend_value(double t) { return 1.0 - std::exp(-t * t); }
inline double temporal_blend_rate(double t) { return 2.0 * t * std::exp(-t * t); }

/// b(t) s(t) with chain-rule derivatives in t and in the knot values.
inline SplineEval temporal_blend(const SplineEval& s, double t) {
  const double b = temporal_blend_value(t);
  const double bdot = temporal_blend_rate(t);
  SplineEval out;
  out.value = b * s.value;
  out.rate = bdot * s.value + b * s.rate;
  out.dvalue_dknots = s.dvalue_dknots;
  out.drate_dknots = s.drate_dknots;
  for (std::size_t j = 0; j < out.dvalue_dknots.size(); ++j) {
    const double dv = s.dvalue_dknots[j];
    out.dvalue_dknots[j] = b * dv;
    out.drate_dknots[j] = bdot * dv + b * s.drate_dknots[j];
  }
  return out;
}

}  // namespace adjflow
