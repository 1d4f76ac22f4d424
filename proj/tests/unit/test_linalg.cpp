#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "corrlink/errors.hpp"
#include "corrlink/linalg.hpp"
#include "corrlink/rng.hpp"
#include "doctest.h"

using namespace corrlink;
using namespace corrlink::linalg;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix random_matrix(Rng& rng, std::size_t n) {
  Matrix m(n, n);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

// A^T A / n + I: comfortably positive definite.
Matrix random_pd(Rng& rng, std::size_t n) {
  const Matrix a = random_matrix(rng, n);
  Matrix out = a.transpose() * a;
  out *= 1.0 / static_cast<double>(n);
  return out + Matrix::identity(n);
}

double frob(const Matrix& a, const Matrix& b) { return (a - b).frobenius_norm(); }

}  // namespace

TEST_CASE("basic matrix algebra") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0, 1}, {1, 0}};
  const Matrix c = a * b;
  CHECK(c(0, 0) == 2);
  CHECK(c(1, 1) == 3);
  CHECK(a.transpose()(0, 1) == 3);
  CHECK(a.trace() == 5);
  const std::vector<double> x{1.0, -1.0};
  CHECK(multiply(a, x) == std::vector<double>{-1.0, -1.0});
  CHECK(multiply(x, a) == std::vector<double>{-2.0, -2.0});
  CHECK(dot(x, x) == 2.0);
}

TEST_CASE("correlation matrix validation") {
  CHECK_NOTHROW(CorrelationMatrix(Matrix{{1, 0.6}, {0.6, 1}}));
  CHECK_THROWS_AS(CorrelationMatrix(Matrix{{1, 0.6}, {0.5, 1}}), ConfigError);
  CHECK_THROWS_AS(CorrelationMatrix(Matrix{{1.1, 0}, {0, 1}}), ConfigError);
  CHECK_THROWS_AS(CorrelationMatrix(Matrix{{1, 1.2}, {1.2, 1}}), ConfigError);
  CHECK_THROWS_AS(CorrelationMatrix(Matrix{{1, 1}, {1, 1}}), ConfigError);
  // Entries valid but not PD.
  CHECK_THROWS_AS(CorrelationMatrix(Matrix{{1, 0.9, -0.9}, {0.9, 1, 0.9}, {-0.9, 0.9, 1}}), ConfigError);
  CHECK(CorrelationMatrix::equicorrelated(3, 0.6)(0, 2) == 0.6);
}

TEST_CASE("symmetric eigendecomposition matches Eigen") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix m = random_pd(rng, 6);
    const EigenDecomposition e = symmetric_eigen(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(to_eigen(m));
    for (std::size_t i = 0; i < 6; ++i) CHECK(e.values[i] == doctest::Approx(ref.eigenvalues()(i)).epsilon(1e-12));
    // Reconstruction V diag V^T.
    const Matrix rec = e.vectors * Matrix::diagonal(e.values) * e.vectors.transpose();
    CHECK(frob(rec, m) <= 1e-11);
  }
}

TEST_CASE("symmetric square roots") {
  CHECK(frob(sym_sqrt(CorrelationMatrix::identity(4)), Matrix::identity(4)) <= 1e-14);
  const CorrelationMatrix c(Matrix{{1, 0.6}, {0.6, 1}});
  const Matrix r = sym_sqrt(c);
  CHECK(frob(r * r, c.matrix()) <= 1e-10);
  // Closed form from eigenvalues 1 +- rho.
  const double p = std::sqrt(1.6), q = std::sqrt(0.4);
  CHECK(r(0, 0) == doctest::Approx((p + q) / 2));
  CHECK(r(0, 1) == doctest::Approx((p - q) / 2));
  const Matrix ir = sym_inv_sqrt(c);
  CHECK(frob(ir * c.matrix() * ir, Matrix::identity(2)) <= 1e-9);

  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix m = random_pd(rng, 5);
    CHECK(frob(sym_inv_sqrt(m) * sym_sqrt(m), Matrix::identity(5)) <= 1e-9);
    CHECK(frob(sym_sqrt(m) * sym_sqrt(m), m) <= 1e-10);
  }
  const Matrix sing{{1, 1}, {1, 1}};
  CHECK_THROWS_AS(sym_sqrt(sing), SingularMatrixError);
  CHECK_THROWS_AS(sym_inv_sqrt(Matrix{{1, 0}, {0, -1}}), SingularMatrixError);
  const Matrix ps = psd_sqrt(sing);
  CHECK(frob(ps * ps, sing) <= 1e-12);
}

TEST_CASE("inversion") {
  CHECK(frob(invert(Matrix::identity(3)), Matrix::identity(3)) == 0.0);
  const Matrix d = invert(Matrix{{2, 0}, {0, 4}});
  CHECK(d(0, 0) == doctest::Approx(0.5));
  CHECK(d(1, 1) == doctest::Approx(0.25));
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix m = random_matrix(rng, 4) + 4.0 * Matrix::identity(4);
    const Matrix inv = invert(m);
    CHECK(frob(m * inv, Matrix::identity(4)) <= 1e-8);
    CHECK(frob(inv, [&] {
            const Eigen::MatrixXd e = to_eigen(m).inverse();
            Matrix out(4, 4);
            for (std::size_t i = 0; i < 4; ++i)
              for (std::size_t j = 0; j < 4; ++j) out(i, j) = e(i, j);
            return out;
          }()) <= 1e-10);
  }
  try {
    invert(Matrix{{1, 2}, {2, 4.0000000000001}});
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.condition() > 1e12);
  }
  CHECK_THROWS_AS(invert(Matrix{{0, 0}, {0, 0}}), SingularMatrixError);
}

TEST_CASE("condition estimate is within a modest factor of the true 1-norm condition") {
  Rng rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const Matrix m = random_matrix(rng, 5) + 2.0 * Matrix::identity(5);
    const Eigen::MatrixXd e = to_eigen(m);
    const double truth = e.cwiseAbs().colwise().sum().maxCoeff() * e.inverse().cwiseAbs().colwise().sum().maxCoeff();
    const double est = condition_estimate(m);
    CHECK(est <= truth * (1.0 + 1e-9));
    CHECK(est >= truth / 10.0);
  }
}

TEST_CASE("Johnson lower bound on the smallest singular value") {
  CHECK(johnson_smin_bound(Matrix{{3, 1}, {1, 3}}) == doctest::Approx(2.0));
  CHECK(singular_values(Matrix{{3, 1}, {1, 3}}).back() == doctest::Approx(2.0));
  CHECK(johnson_smin_bound(Matrix{{-2, 0, 0}, {0, 5, 0}, {0, 0, 3}}) == doctest::Approx(2.0));
  Rng rng(33);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rep % 4;
    const Matrix m = random_matrix(rng, n) + (rep % 3) * Matrix::identity(n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
    const double smin = svd.singularValues().minCoeff();
    CHECK(johnson_smin_bound(m) <= smin + 1e-12);
    CHECK(singular_values(m).back() == doctest::Approx(smin).epsilon(1e-6));
  }
}

TEST_CASE("diagonally dominant stopping-set shaped matrices satisfy the a - (d-1) b bound") {
  Rng rng(44);
  const double a = 5.0, b = 0.5;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t d = 2 + rep % 3;
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        w(i, j) = i == j ? (rng.coin() ? 1 : -1) * (a + rng.exponential()) : b * (2.0 * rng.uniform() - 1.0);
    CHECK(johnson_smin_bound(w) >= a - (static_cast<double>(d) - 1.0) * b - 1e-12);
  }
}
