#pragma once

// Small dense matrices (d up to a few dozen) for the vector schemes.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace corrlink::linalg {

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  /// Single row (1 x n) or single column (n x 1) from a vector.
  static Matrix row(std::span<const double> values);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  double frobenius_norm() const;
  double trace() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// y = A x.
std::vector<double> multiply(const Matrix& a, std::span<const double> x);
/// y = x^T A (row vector times matrix).
std::vector<double> multiply(std::span<const double> x, const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);

/// Symmetric, unit diagonal, entries in [-1, 1], positive definite.
/// Construction validates and throws ConfigError on violation.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Matrix m);
  static CorrelationMatrix identity(std::size_t d);
  /// All off-diagonal entries equal to r.
  static CorrelationMatrix equicorrelated(std::size_t d, double r);

  std::size_t dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

 private:
  Matrix m_;
};

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns are eigenvectors
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
EigenDecomposition symmetric_eigen(const Matrix& m);

/// Principal square root of a positive definite matrix.
Matrix sym_sqrt(const Matrix& m);
Matrix sym_sqrt(const CorrelationMatrix& m);
/// Inverse principal square root of a positive definite matrix.
Matrix sym_inv_sqrt(const Matrix& m);
Matrix sym_inv_sqrt(const CorrelationMatrix& m);
/// Square root of a positive semidefinite matrix; eigenvalues down to -tol
/// are clamped to zero.
Matrix psd_sqrt(const Matrix& m, double tol = 1e-12);

/// Inverse by partially pivoted LU with one step of iterative refinement.
/// Throws SingularMatrixError carrying the 1-norm condition estimate when it
/// exceeds max_condition.
Matrix invert(const Matrix& m, double max_condition = 1e12);

/// 1-norm condition number estimate (Hager's method).
double condition_estimate(const Matrix& m);

/// Johnson's lower bound on the smallest singular value; may be negative.
double johnson_smin_bound(const Matrix& m);

/// Singular values (descending) via the eigenvalues of M^T M.
std::vector<double> singular_values(const Matrix& m);

}  // namespace corrlink::linalg
