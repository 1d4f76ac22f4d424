#include "corrlink/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "corrlink/errors.hpp"

namespace corrlink::linalg {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::row(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::trace() const {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
  return s;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ConfigError("Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ConfigError("Matrix -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ConfigError("Matrix *: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

std::vector<double> multiply(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ConfigError("multiply: shape mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

std::vector<double> multiply(std::span<const double> x, const Matrix& a) {
  if (a.rows() != x.size()) throw ConfigError("multiply: shape mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += x[i] * a(i, j);
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

namespace {

void require_square(const Matrix& m, const char* who) {
  if (!m.square() || m.rows() == 0) {
    throw ConfigError(std::string(who) + ": matrix must be square and non-empty");
  }
}

void require_symmetric(const Matrix& m, const char* who) {
  require_square(m, who);
  double scale = 0.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(1.0, scale)) {
        throw ConfigError(std::string(who) + ": matrix is not symmetric");
      }
}

Matrix from_eigen(const EigenDecomposition& eig, double (*fn)(double)) {
  const std::size_t n = eig.values.size();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = fn(eig.values[k]);
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = eig.vectors(i, k) * w;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vik * eig.vectors(j, k);
    }
  }
  // exact symmetry
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (out(i, j) + out(j, i));
      out(i, j) = out(j, i) = avg;
    }
  return out;
}

EigenDecomposition positive_definite_eigen(const Matrix& m, const char* who) {
  require_symmetric(m, who);
  EigenDecomposition eig = symmetric_eigen(m);
  const double largest = std::max(1.0, std::abs(eig.values.back()));
  if (eig.values.front() <= 1e-14 * largest) {
    throw SingularMatrixError(std::string(who) + ": matrix is not positive definite (eigenvalue " +
                                  std::to_string(eig.values.front()) + ")",
                              std::numeric_limits<double>::infinity());
  }
  return eig;
}

// PA = LU with unit lower L stored below the diagonal.
struct Lu {
  Matrix lu;
  std::vector<std::size_t> perm;  // row i of PA is row perm[i] of A

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = lu.rows();
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
      x[i] = s / lu(i, i);
    }
    return x;
  }

  // Solves A^T z = c, with A^T = U^T L^T P.
  std::vector<double> solve_transpose(std::span<const double> c) const {
    const std::size_t n = lu.rows();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = c[i];
      for (std::size_t j = 0; j < i; ++j) s -= lu(j, i) * w[j];
      w[i] = s / lu(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = w[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu(j, i) * w[j];
      w[i] = s;
    }
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[perm[i]] = w[i];
    return z;
  }
};

Lu lu_factor(const Matrix& m) {
  require_square(m, "lu");
  const std::size_t n = m.rows();
  Lu f{m, std::vector<std::size_t>(n)};
  std::iota(f.perm.begin(), f.perm.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(f.lu(i, k)) > std::abs(f.lu(piv, k))) piv = i;
    if (f.lu(piv, k) == 0.0) {
      throw SingularMatrixError("invert: matrix is exactly singular",
                                std::numeric_limits<double>::infinity());
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = f.lu(i, k) / f.lu(k, k);
      f.lu(i, k) = l;
      for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= l * f.lu(k, j);
    }
  }
  return f;
}

double one_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

// Hager's estimate of ||A^{-1}||_1 from an LU factorization.
double inverse_one_norm_estimate(const Lu& f) {
  const std::size_t n = f.lu.rows();
  std::vector<double> x(n, 1.0 / static_cast<double>(n));
  double estimate = 0.0;
  for (int iter = 0; iter < 5; ++iter) {
    const std::vector<double> y = f.solve(x);
    estimate = 0.0;
    for (double v : y) estimate += std::abs(v);
    std::vector<double> xi(n);
    for (std::size_t i = 0; i < n; ++i) xi[i] = y[i] >= 0.0 ? 1.0 : -1.0;
    const std::vector<double> z = f.solve_transpose(xi);
    std::size_t jmax = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(z[i]) > std::abs(z[jmax])) jmax = i;
    if (std::abs(z[jmax]) <= dot(z, x)) break;
    std::fill(x.begin(), x.end(), 0.0);
    x[jmax] = 1.0;
  }
  return estimate;
}

}  // namespace

CorrelationMatrix::CorrelationMatrix(Matrix m) : m_(std::move(m)) {
  require_symmetric(m_, "CorrelationMatrix");
  for (std::size_t i = 0; i < m_.rows(); ++i) {
    if (std::abs(m_(i, i) - 1.0) > 1e-12) throw ConfigError("CorrelationMatrix: diagonal must be 1");
    for (std::size_t j = 0; j < m_.cols(); ++j)
      if (std::abs(m_(i, j)) > 1.0) throw ConfigError("CorrelationMatrix: entries must lie in [-1, 1]");
  }
  const EigenDecomposition eig = symmetric_eigen(m_);
  if (eig.values.front() <= 1e-10) {
    throw ConfigError("CorrelationMatrix: not positive definite (smallest eigenvalue " +
                      std::to_string(eig.values.front()) + ")");
  }
}

CorrelationMatrix CorrelationMatrix::identity(std::size_t d) { return CorrelationMatrix(Matrix::identity(d)); }

CorrelationMatrix CorrelationMatrix::equicorrelated(std::size_t d, double r) {
  Matrix m(d, d, r);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
  return CorrelationMatrix(std::move(m));
}

EigenDecomposition symmetric_eigen(const Matrix& m) {
  require_square(m, "symmetric_eigen");
  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

Matrix sym_sqrt(const Matrix& m) {
  return from_eigen(positive_definite_eigen(m, "sym_sqrt"), [](double x) { return std::sqrt(x); });
}

Matrix sym_sqrt(const CorrelationMatrix& m) { return sym_sqrt(m.matrix()); }

Matrix sym_inv_sqrt(const Matrix& m) {
  return from_eigen(positive_definite_eigen(m, "sym_inv_sqrt"), [](double x) { return 1.0 / std::sqrt(x); });
}

Matrix sym_inv_sqrt(const CorrelationMatrix& m) { return sym_inv_sqrt(m.matrix()); }

Matrix psd_sqrt(const Matrix& m, double tol) {
  require_symmetric(m, "psd_sqrt");
  EigenDecomposition eig = symmetric_eigen(m);
  if (eig.values.front() < -tol * std::max(1.0, std::abs(eig.values.back()))) {
    throw ConfigError("psd_sqrt: matrix is not positive semidefinite (eigenvalue " +
                      std::to_string(eig.values.front()) + ")");
  }
  for (double& v : eig.values) v = std::max(v, 0.0);
  return from_eigen(eig, [](double x) { return std::sqrt(x); });
}

double condition_estimate(const Matrix& m) {
  const Lu f = lu_factor(m);
  return one_norm(m) * inverse_one_norm_estimate(f);
}

Matrix invert(const Matrix& m, double max_condition) {
  const Lu f = lu_factor(m);
  const double cond = one_norm(m) * inverse_one_norm_estimate(f);
  if (!(cond <= max_condition)) {
    throw SingularMatrixError("invert: matrix is ill-conditioned (condition estimate " +
                                  std::to_string(cond) + ")",
                              cond);
  }
  const std::size_t n = m.rows();
  Matrix inv(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = f.solve(e);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  // One refinement step: X <- X + A^{-1}(I - A X), residual solved with the LU.
  Matrix residual = Matrix::identity(n) - m * inv;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = residual(i, j);
    const std::vector<double> corr = f.solve(r);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) += corr[i];
  }
  return inv;
}

double johnson_smin_bound(const Matrix& m) {
  require_square(m, "johnson_smin_bound");
  const std::size_t n = m.rows();
  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row += std::abs(m(i, j));
      col += std::abs(m(j, i));
    }
    bound = std::min(bound, std::abs(m(i, i)) - 0.5 * (row + col));
  }
  return bound;
}

std::vector<double> singular_values(const Matrix& m) {
  const EigenDecomposition eig = symmetric_eigen(m.transpose() * m);
  std::vector<double> out(eig.values.rbegin(), eig.values.rend());
  for (double& v : out) v = std::sqrt(std::max(v, 0.0));
  return out;
}

}  // namespace corrlink::linalg
