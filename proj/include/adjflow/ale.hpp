// Time-dependent parametrized domain mappings and the ALE state/flux
// transformations. All computation happens on a fixed reference domain; the
// mapping carries the deformation and its analytic derivatives, including
// the parameter sensitivities the gradient reconstruction needs.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>

#include "adjflow/linalg.hpp"
#include "adjflow/spline.hpp"

namespace adjflow {

enum class BlendKind { cubic, quintic };

inline BlendKind blend_kind_from_string(const std::string& s) {
  if (s == "cubic") return BlendKind::cubic;
  if (s == "quintic") return BlendKind::quintic;
  throw std::invalid_argument("unknown blend kind: " + s);
}

/// Blend b(s): 0 below the inner radius offset, 1 beyond r1, polynomial ramp
/// between. Cubic ramp is C1 at the ends, quintic C2.
inline double blend(double s, double r1, BlendKind kind) {
  if (s <= 0.0) return 0.0;
  if (s >= r1) return 1.0;
  const double z = s / r1;
  if (kind == BlendKind::cubic) return z * z * (3.0 - 2.0 * z);
  return z * z * z * (10.0 + z * (-15.0 + 6.0 * z));
}

inline double blend_derivative(double s, double r1, BlendKind kind) {
  if (s <= 0.0 || s >= r1) return 0.0;
  const double z = s / r1;
  if (kind == BlendKind::cubic) return (6.0 * z - 6.0 * z * z) / r1;
  return (30.0 * z * z + z * z * z * (-60.0 + 30.0 * z)) / r1;
}

struct MappingDegeneracyError : std::runtime_error {
  MappingDegeneracyError(double X, double t, double g)
      : std::runtime_error("mapping degenerate (g <= 0) at X=" + std::to_string(X) +
                           ", t=" + std::to_string(t) + ", g=" + std::to_string(g)) {}
};

/// Time-dependent diffeomorphism between reference and physical coordinates,
/// 1D specialization (G, g, v_G scalars).
class DomainMapping {
 public:
  virtual ~DomainMapping() = default;
  virtual int num_params() const = 0;

  virtual double map(double X, const Vector& mu, double t) const = 0;
  virtual double grad(double X, const Vector& mu, double t) const = 0;  // G = dx/dX
  virtual double velocity(double X, const Vector& mu, double t) const = 0;
  virtual Vector dmap_dmu(double X, const Vector& mu, double t) const = 0;
  virtual Vector dvel_dmu(double X, const Vector& mu, double t) const = 0;

  double det(double X, const Vector& mu, double t) const { return grad(X, mu, t); }
};

struct MapBundle {
  double x, grad, det, velocity;
  Vector dx_dmu;
  Vector dvel_dmu;
};

/// All six mapping quantities at one point; fails on a degenerate mapping.
inline MapBundle map_bundle(const DomainMapping& m, double X, const Vector& mu, double t) {
  MapBundle b;
  b.x = m.map(X, mu, t);
  b.grad = m.grad(X, mu, t);
  b.det = b.grad;
  if (!(b.det > 0.0)) throw MappingDegeneracyError(X, t, b.det);
  b.velocity = m.velocity(X, mu, t);
  b.dx_dmu = m.dmap_dmu(X, mu, t);
  b.dvel_dmu = m.dvel_dmu(X, mu, t);
  return b;
}

// --- state and flux transformations ---------------------------------------

/// U = scale * u, with scale either g or the GCL auxiliary gbar.
inline double transform_state(double u_physical, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("transform_state: nonpositive determinant");
  return scale * u_physical;
}

inline double inverse_transform_state(double u_transformed, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("transform_state: nonpositive determinant");
  return u_transformed / scale;
}

struct TransformedFlux {
  double inviscid = 0.0;
  double viscous = 0.0;
  double total() const { return inviscid + viscous; }
};

using ScalarFluxFn = std::function<double(double)>;            // F_inv(u)
using ScalarViscousFluxFn = std::function<double(double, double)>;  // F_vis(u, du/dx)

/// Transformed fluxes of the scalar conservation law. `scale` is g for the
/// plain ALE form and gbar for the GCL-augmented one; the state and the
/// viscous gradient recovery use `scale`, the metric factors stay g. The
/// mesh-motion term carries the physical state times g v_G / G, which
/// reduces to the textbook -U_X v_G / G when scale == g and keeps a constant
/// state an exact solution when scale is the discrete gbar.
inline TransformedFlux transform_fluxes(double u_transformed, double grad_u_transformed, double G,
                                        double g, double v_G, double scale, double dscale_dX,
                                        const ScalarFluxFn& f_inv,
                                        const ScalarViscousFluxFn& f_vis) {
  if (!(g > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("transform_fluxes: nonpositive determinant");
  const double u = u_transformed / scale;
  TransformedFlux out;
  out.inviscid = g * f_inv(u) / G - (g / scale) * u_transformed * v_G / G;
  if (f_vis) {
    const double du_dx = (grad_u_transformed - u * dscale_dX) / (scale * G);
    out.viscous = g * f_vis(u, du_dx) / G;
  }
  return out;
}

// --- time signals ----------------------------------------------------------

/// Scalar signal of (mu, t) with analytic time and parameter derivatives.
class TimeSignal {
 public:
  virtual ~TimeSignal() = default;
  virtual int num_params() const = 0;
  virtual double value(const Vector& mu, double t) const = 0;
  virtual double rate(const Vector& mu, double t) const = 0;
  virtual Vector dvalue_dmu(const Vector& mu, double t) const = 0;
  virtual Vector drate_dmu(const Vector& mu, double t) const = 0;
};

class ZeroSignal final : public TimeSignal {
 public:
  explicit ZeroSignal(int n_params = 0) : np_(n_params) {}
  int num_params() const override { return np_; }
  double value(const Vector&, double) const override { return 0.0; }
  double rate(const Vector&, double) const override { return 0.0; }
  Vector dvalue_dmu(const Vector&, double) const override { return Vector(np_, 0.0); }
  Vector drate_dmu(const Vector&, double) const override { return Vector(np_, 0.0); }

 private:
  int np_;
};

/// amplitude * sin(omega t); parameter-independent, for freestream tests.
class SineSignal final : public TimeSignal {
 public:
  SineSignal(double amplitude, double omega, int n_params = 0)
      : amp_(amplitude), omega_(omega), np_(n_params) {}
  int num_params() const override { return np_; }
  double value(const Vector&, double t) const override { return amp_ * std::sin(omega_ * t); }
  double rate(const Vector&, double t) const override { return amp_ * omega_ * std::cos(omega_ * t); }
  Vector dvalue_dmu(const Vector&, double) const override { return Vector(np_, 0.0); }
  Vector drate_dmu(const Vector&, double) const override { return Vector(np_, 0.0); }

 private:
  double amp_, omega_;
  int np_;
};

/// Spline-backed signal whose free knot values live in a contiguous slice of
/// the parameter vector; rebuilds the spline per evaluation (knot counts are
/// tiny). Optional startup blend b(t) = 1 - exp(-t^2).
class SplineTimeSignal final : public TimeSignal {
 public:
  using Builder = std::function<SplineSignal(const Vector& knot_values)>;

  SplineTimeSignal(Builder builder, int param_offset, int knot_count, int total_params,
                   bool startup_blend = false)
      : builder_(std::move(builder)), offset_(param_offset), knots_(knot_count),
        np_(total_params), blend_(startup_blend) {}

  int num_params() const override { return np_; }

  double value(const Vector& mu, double t) const override { return eval(mu, t).value; }
  double rate(const Vector& mu, double t) const override { return eval(mu, t).rate; }

  Vector dvalue_dmu(const Vector& mu, double t) const override {
    return scatter(eval(mu, t).dvalue_dknots);
  }
  Vector drate_dmu(const Vector& mu, double t) const override {
    return scatter(eval(mu, t).drate_dknots);
  }

 private:
  SplineEval eval(const Vector& mu, double t) const {
    Vector knots(knots_);
    for (int j = 0; j < knots_; ++j) knots[j] = mu[offset_ + j];
    const SplineSignal s = builder_(knots);
    SplineEval e = s.eval(t);
    if (blend_) e = temporal_blend(e, t);
    return e;
  }

  Vector scatter(const Vector& dknots) const {
    Vector d(np_, 0.0);
    for (int j = 0; j < knots_; ++j) d[offset_ + j] = dknots[j];
    return d;
  }

  Builder builder_;
  int offset_, knots_, np_;
  bool blend_;
};

// --- mappings ---------------------------------------------------------------

class StaticMapping final : public DomainMapping {
 public:
  explicit StaticMapping(int n_params = 0) : np_(n_params) {}
  int num_params() const override { return np_; }
  double map(double X, const Vector&, double) const override { return X; }
  double grad(double, const Vector&, double) const override { return 1.0; }
  double velocity(double, const Vector&, double) const override { return 0.0; }
  Vector dmap_dmu(double, const Vector&, double) const override { return Vector(np_, 0.0); }
  Vector dvel_dmu(double, const Vector&, double) const override { return Vector(np_, 0.0); }

 private:
  int np_;
};

/// x = (1 + (rate + mu_0) t) X; the gbar ODE has the exact solution 1 + rt.
class DilationMapping final : public DomainMapping {
 public:
  DilationMapping(double base_rate, bool rate_from_mu0, int n_params)
      : base_(base_rate), use_mu_(rate_from_mu0), np_(n_params) {}

  int num_params() const override { return np_; }
  double map(double X, const Vector& mu, double t) const override { return (1.0 + rate_of(mu) * t) * X; }
  double grad(double, const Vector& mu, double t) const override { return 1.0 + rate_of(mu) * t; }
  double velocity(double X, const Vector& mu, double) const override { return rate_of(mu) * X; }
  Vector dmap_dmu(double X, const Vector&, double t) const override {
    Vector d(np_, 0.0);
    if (use_mu_ && np_ > 0) d[0] = t * X;
    return d;
  }
  Vector dvel_dmu(double X, const Vector&, double) const override {
    Vector d(np_, 0.0);
    if (use_mu_ && np_ > 0) d[0] = X;
    return d;
  }

 private:
  double rate_of(const Vector& mu) const { return base_ + (use_mu_ && !mu.empty() ? mu[0] : 0.0); }
  double base_;
  bool use_mu_;
  int np_;
};

/// Blended rigid motion, 1D: the body region within R_0 of the center moves
/// exactly by the translation signal plus an optional Gaussian-profile
/// deformation; the motion decays to identity across the annulus [R_0,
/// R_0+R_1] through the blend. The 2D rotation degenerates to identity.
class BlendedRigidMotion final : public DomainMapping {
 public:
  struct Deformation {
    std::shared_ptr<const TimeSignal> amplitude;  // c(t)
    double profile_center = 0.5;
    double profile_width = 0.15;  // gaussian: exp(-((X-c)/w)^2)
  };

  BlendedRigidMotion(double center, double r0, double r1, BlendKind kind,
                     std::shared_ptr<const TimeSignal> translation,
                     std::shared_ptr<const Deformation> deformation = nullptr)
      : center_(center), r0_(r0), r1_(r1), kind_(kind), translation_(std::move(translation)),
        deformation_(std::move(deformation)) {
    if (!(r0_ > 0.0) || !(r1_ > 0.0)) throw std::invalid_argument("blend radii must be positive");
  }

  int num_params() const override { return translation_->num_params(); }

  double map(double X, const Vector& mu, double t) const override {
    return X + (1.0 - b_of(X)) * displacement(X, mu, t);
  }
  double grad(double X, const Vector& mu, double t) const override {
    return 1.0 - db_dX(X) * displacement(X, mu, t) + (1.0 - b_of(X)) * ddisp_dX(X, mu, t);
  }
  double velocity(double X, const Vector& mu, double t) const override {
    return (1.0 - b_of(X)) * displacement_rate(X, mu, t);
  }
  Vector dmap_dmu(double X, const Vector& mu, double t) const override {
    Vector d = translation_->dvalue_dmu(mu, t);
    if (deformation_) {
      const double p = profile(X);
      axpy(p, deformation_->amplitude->dvalue_dmu(mu, t), d);
    }
    scale(1.0 - b_of(X), d);
    return d;
  }
  Vector dvel_dmu(double X, const Vector& mu, double t) const override {
    Vector d = translation_->drate_dmu(mu, t);
    if (deformation_) {
      const double p = profile(X);
      axpy(p, deformation_->amplitude->drate_dmu(mu, t), d);
    }
    scale(1.0 - b_of(X), d);
    return d;
  }

 private:
  double dist(double X) const { return std::abs(X - center_) - r0_; }
  double b_of(double X) const { return blend(dist(X), r1_, kind_); }
  double db_dX(double X) const {
    const double sgn = (X >= center_) ? 1.0 : -1.0;
    return blend_derivative(dist(X), r1_, kind_) * sgn;
  }
  double profile(double X) const {
    const double z = (X - deformation_->profile_center) / deformation_->profile_width;
    return std::exp(-z * z);
  }
  double dprofile_dX(double X) const {
    const double w = deformation_->profile_width;
    const double z = (X - deformation_->profile_center) / w;
    return -2.0 * z / w * std::exp(-z * z);
  }

  double displacement(double X, const Vector& mu, double t) const {
    double d = translation_->value(mu, t);
    if (deformation_) d += deformation_->amplitude->value(mu, t) * profile(X);
    return d;
  }
  double displacement_rate(double X, const Vector& mu, double t) const {
    double d = translation_->rate(mu, t);
    if (deformation_) d += deformation_->amplitude->rate(mu, t) * profile(X);
    return d;
  }
  double ddisp_dX(double X, const Vector& mu, double t) const {
    if (!deformation_) return 0.0;
    return deformation_->amplitude->value(mu, t) * dprofile_dX(X);
  }

  double center_, r0_, r1_;
  BlendKind kind_;
  std::shared_ptr<const TimeSignal> translation_;
  std::shared_ptr<const Deformation> deformation_;
};

}  // namespace adjflow
