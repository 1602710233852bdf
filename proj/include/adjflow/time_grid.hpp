#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "adjflow/tableau.hpp"

namespace adjflow {

/// Strictly increasing time points t_0 < ... < t_{N_t}. Step n (1-based)
/// spans [t_{n-1}, t_n].
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> points) : t_(std::move(points)) {
    if (t_.size() < 2) throw std::invalid_argument("time grid needs at least one step");
    for (std::size_t n = 1; n < t_.size(); ++n)
      if (!(t_[n] > t_[n - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  }

  static TimeGrid uniform(double t0, double t1, int steps) {
    if (steps < 1) throw std::invalid_argument("time grid needs at least one step");
    std::vector<double> pts(steps + 1);
    for (int n = 0; n <= steps; ++n) pts[n] = t0 + (t1 - t0) * static_cast<double>(n) / steps;
    pts[steps] = t1;
    return TimeGrid(std::move(pts));
  }

  int steps() const { return static_cast<int>(t_.size()) - 1; }
  double time(int n) const { return t_[n]; }
  double dt(int n) const { return t_[n] - t_[n - 1]; }
  double t_initial() const { return t_.front(); }
  double t_final() const { return t_.back(); }
  std::span<const double> points() const { return t_; }

  /// t_{n-1} + c_i dt_n for the 1-based stage i; the single definition every
  /// engine uses, so cached geometric quantities keyed by time are hit
  /// bit-exactly.
  double stage_time(int n, const ButcherTableau& tab, int i) const {
    return t_[n - 1] + tab.c[i - 1] * dt(n);
  }

 private:
  std::vector<double> t_;
};

}  // namespace adjflow
