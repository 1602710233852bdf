// Dense linear algebra for desk-scale problems: vectors, row-major matrices,
// and a pivoted LU factorization with transpose solves (the adjoint stage
// systems are exact transposes of the primal ones).
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace adjflow {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

inline Vector scaled(double alpha, const Vector& x) {
  Vector y(x);
  scale(alpha, y);
  return y;
}

inline Vector add(const Vector& a, const Vector& b) {
  Vector c(a);
  axpy(1.0, b, c);
  return c;
}

inline Vector subtract(const Vector& a, const Vector& b) {
  Vector c(a);
  axpy(-1.0, b, c);
  return c;
}

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  std::span<double> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int i) const { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Vector matvec(std::span<const double> x) const {
    assert(static_cast<int>(x.size()) == cols_);
    Vector y(rows_, 0.0);
    for (int i = 0; i < rows_; ++i) y[i] = dot(row(i), x);
    return y;
  }

  /// y = A^T x without forming the transpose.
  Vector matvec_transpose(std::span<const double> x) const {
    assert(static_cast<int>(x.size()) == rows_);
    Vector y(cols_, 0.0);
    for (int i = 0; i < rows_; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      axpy(xi, row(i), y);
    }
    return y;
  }

  Matrix matmul(const Matrix& b) const {
    assert(cols_ == b.rows());
    Matrix c(rows_, b.cols());
    for (int i = 0; i < rows_; ++i)
      for (int k = 0; k < cols_; ++k) {
        const double aik = (*this)(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  void add_scaled(double alpha, const Matrix& b) {
    assert(rows_ == b.rows() && cols_ == b.cols());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * b.data_[i];
  }

  double norm_inf_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

struct SingularMatrixError : std::runtime_error {
  explicit SingularMatrixError(int pivot)
      : std::runtime_error("singular matrix: zero pivot at column " + std::to_string(pivot)),
        column(pivot) {}
  int column;
};

/// LU factorization with partial pivoting (LAPACK getrf layout). Supports
/// solves with A and A^T from the same factorization.
class LuSolver {
 public:
  LuSolver() = default;
  explicit LuSolver(Matrix a) { factor(std::move(a)); }

  void factor(Matrix a) {
    assert(a.rows() == a.cols());
    const int n = a.rows();
    lu_ = std::move(a);
    piv_.resize(n);
    for (int k = 0; k < n; ++k) {
      int p = k;
      double best = std::abs(lu_(k, k));
      for (int i = k + 1; i < n; ++i) {
        const double v = std::abs(lu_(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      piv_[k] = p;
      if (best == 0.0) throw SingularMatrixError(k);
      if (p != k)
        for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
      const double inv = 1.0 / lu_(k, k);
      for (int i = k + 1; i < n; ++i) {
        lu_(i, k) *= inv;
        const double lik = lu_(i, k);
        if (lik == 0.0) continue;
        for (int j = k + 1; j < n; ++j) lu_(i, j) -= lik * lu_(k, j);
      }
    }
  }

  int dim() const { return lu_.rows(); }

  Vector solve(Vector b) const {
    const int n = dim();
    assert(static_cast<int>(b.size()) == n);
    for (int k = 0; k < n; ++k)
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < i; ++j) b[i] -= lu_(i, j) * b[j];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) b[i] -= lu_(i, j) * b[j];
      b[i] /= lu_(i, i);
    }
    return b;
  }

  /// Solve A^T x = b reusing the factorization of A.
  Vector solve_transpose(Vector b) const {
    const int n = dim();
    assert(static_cast<int>(b.size()) == n);
    // A = P^T L U  =>  A^T = U^T L^T P; solve U^T y = b, L^T z = y, x = P^T z.
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) b[i] -= lu_(j, i) * b[j];
      b[i] /= lu_(i, i);
    }
    for (int i = n - 1; i >= 0; --i)
      for (int j = i + 1; j < n; ++j) b[i] -= lu_(j, i) * b[j];
    for (int k = n - 1; k >= 0; --k)
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    return b;
  }

  Matrix solve_matrix(const Matrix& b) const {
    Matrix x(b.rows(), b.cols());
    Vector col(b.rows());
    for (int j = 0; j < b.cols(); ++j) {
      for (int i = 0; i < b.rows(); ++i) col[i] = b(i, j);
      Vector s = solve(col);
      for (int i = 0; i < b.rows(); ++i) x(i, j) = s[i];
    }
    return x;
  }

 private:
  Matrix lu_;
  std::vector<int> piv_;
};

}  // namespace adjflow
