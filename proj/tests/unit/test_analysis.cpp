#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <vector>

#include "corrlink/analysis.hpp"
#include "corrlink/errors.hpp"
#include "corrlink/estimators.hpp"
#include "corrlink/rng.hpp"
#include "corrlink/statmath.hpp"
#include "doctest.h"

using namespace corrlink;
using namespace corrlink::analysis;
using statmath::kLn2;
using statmath::kPi;

namespace {

double frob_diff_eigen(const linalg::Matrix& a, const Eigen::MatrixXd& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += std::pow(a(i, j) - b(i, j), 2);
  return std::sqrt(s);
}

Eigen::MatrixXd to_eigen(const linalg::Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

// log density of Y | X = x, Y ~ N(rho x, 1 - rho^2).
double log_density(double rho, double x, double y) {
  const double v = 1.0 - rho * rho;
  return -0.5 * std::log(2.0 * kPi * v) - (y - rho * x) * (y - rho * x) / (2.0 * v);
}

}  // namespace

TEST_CASE("rate-distortion reference curve") {
  CHECK(zhang_berger_optimal(0.0, 10.0) == doctest::Approx(1.0 / (20.0 * kLn2)));
  CHECK(zhang_berger_optimal(0.0, 10.0) == doctest::Approx(0.07214).epsilon(1e-4));
  CHECK(zhang_berger_optimal(1.0, 10.0) == 0.0);
  // The infimum over rates approaches the zero-rate value.
  for (double rho : {0.0, 0.5, 0.9}) {
    double best = 1e300;
    for (double r = 1e-6; r < 5.0; r *= 1.05) best = std::min(best, zhang_berger_variance(rho, 10.0, r));
    CHECK(best == doctest::Approx(zhang_berger_optimal(rho, 10.0)).epsilon(1e-3));
  }
}

TEST_CASE("scalar Fisher information") {
  CHECK(fisher_scalar_given_x(0.0, 1.7) == doctest::Approx(1.7 * 1.7));
  CHECK(fisher_scalar_given_x(0.5, 0.0) == doctest::Approx(2.0 * 0.25 / (0.75 * 0.75)));
  // Finite-difference oracle: E[-d^2/drho^2 log f(Y | x)] by quadrature over Y.
  const double rho = 0.4, x = 2.0, h = 1e-4;
  const double sd = std::sqrt(1.0 - rho * rho);
  auto integrand = [&](double z) {
    const double y = rho * x + sd * z;
    const double d2 = (log_density(rho + h, x, y) - 2.0 * log_density(rho, x, y) + log_density(rho - h, x, y)) / (h * h);
    return -d2 * statmath::phi(z);
  };
  const double fd = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -12.0, 12.0, 10, 1e-12);
  CHECK(std::abs(fd - fisher_scalar_given_x(rho, x)) <= 1e-5 * fisher_scalar_given_x(rho, x) + 1e-5);

  // Max of two: E X_J^2 = 1.
  CHECK(fisher_max(0.3, 1) == doctest::Approx((0.91 + 0.18) / (0.91 * 0.91)));
  const double t = 1.3;
  CHECK(fisher_threshold(0.0, t) == doctest::Approx(1.0 + t * statmath::inverse_mills(t)));
}

TEST_CASE("exact threshold variance") {
  const double t = threshold_for_bits(20.0);
  CHECK(statmath::geometric_entropy(statmath::Q(t)) == doctest::Approx(20.0));
  const double s = statmath::inverse_mills(t);
  CHECK(exact_threshold_variance(0.0, t) == doctest::Approx(1.0 / (s * s)));
  const double s0 = std::sqrt(2.0 / kPi);
  CHECK(exact_threshold_variance(0.5, 0.0) == doctest::Approx((1.0 - 0.25 * s0 * s0) / (s0 * s0)));
  for (double rho : {-0.9, 0.0, 0.3, 0.8}) {
    for (double tt : {0.0, 1.0, 3.0, 6.0}) {
      const auto m = statmath::truncated_normal_moments(tt);
      CHECK(exact_threshold_variance(rho, tt) ==
            doctest::Approx((rho * rho * m.variance + 1.0 - rho * rho) / (m.mean * m.mean)).epsilon(1e-12));
      CHECK(additive_exact(sources::MarginalLaw::normal(), rho, tt) ==
            doctest::Approx(exact_threshold_variance(rho, tt)).epsilon(1e-12));
    }
  }
}

TEST_CASE("efficiency of the scalar schemes approaches one") {
  for (double rho : {0.0, 0.5, 0.9}) {
    double prev_th = 1e9, prev_max = 1e9;
    for (int k : {10, 20, 40, 80}) {
      const double t = threshold_for_bits(k);
      const double eff_th = exact_threshold_variance(rho, t) * fisher_threshold(rho, t);
      CHECK(eff_th >= 1.0 - 1e-12);
      CHECK(eff_th < prev_th);
      prev_th = eff_th;
      if (k <= 40) {
        const double eff_max = exact_max_variance(rho, k) * fisher_max(rho, k);
        CHECK(eff_max >= 1.0 - 1e-12);
        CHECK(eff_max < prev_max);
        prev_max = eff_max;
      }
    }
  }
}

TEST_CASE("Y-vector Fisher matrix") {
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const linalg::CorrelationMatrix sy = linalg::CorrelationMatrix::equicorrelated(3, 0.2);
  const FisherPair z = fisher_yvec(zero, sy, 4.0);
  const Eigen::MatrixXd syi = to_eigen(sy.matrix()).inverse();
  CHECK(frob_diff_eigen(z.fisher, 4.0 * syi) <= 1e-10);
  CHECK(frob_diff_eigen(z.inverse, to_eigen(sy.matrix()) / 4.0) <= 1e-10);

  // d = 1 reduces to the scalar threshold information.
  const double t = 2.5;
  const double ex2 = statmath::truncated_normal_moments(t).second_moment;
  const FisherPair one = fisher_yvec({0.6}, linalg::CorrelationMatrix::identity(1), ex2);
  CHECK(one.fisher(0, 0) == doctest::Approx(fisher_threshold(0.6, t)));

  // Sherman-Morrison inverse against LU at random feasible points.
  Rng rng(7);
  int tested = 0;
  for (int rep = 0; rep < 200 && tested < 40; ++rep) {
    std::vector<double> rho(3);
    for (double& r : rho) r = 1.6 * rng.uniform() - 0.8;
    linalg::Matrix m(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) m(i, j) = i == j ? 1.0 : rho[i] * rho[j] + 0.1 * (rng.uniform() - 0.5) * (i + j == 1);
    m(1, 0) = m(0, 1);
    try {
      const FisherPair p = fisher_yvec(rho, linalg::CorrelationMatrix(m), 1.0 + 10.0 * rng.uniform());
      const Eigen::MatrixXd inv = to_eigen(p.fisher).inverse();
      CHECK(frob_diff_eigen(p.inverse, inv) <= 1e-9 * std::max(1.0, inv.norm()));
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(p.fisher));
      CHECK(es.eigenvalues().minCoeff() > 0.0);
      ++tested;
    } catch (const ConfigError&) {
      // Sigma_Y - Rho Rho^T not PD at this draw.
    }
  }
  CHECK(tested >= 20);
}

TEST_CASE("X-vector Fisher matrix") {
  const linalg::CorrelationMatrix sx = linalg::CorrelationMatrix::equicorrelated(2, 0.4);
  const FisherPair z = fisher_xvec({0.0, 0.0}, sx, 30.0, 1.0);
  CHECK(frob_diff_eigen(z.inverse, to_eigen(sx.matrix()) / 30.0) <= 1e-12);

  const std::vector<double> rho{0.5, -0.3};
  const double sigma2 = estimators::XVecEstimator::from_budget(
                            sources::JointModel(sources::GaussianXVec{rho, sx}), 200.0)
                            .sigma2();
  for (double alpha : {5.0, 40.0, 400.0}) {
    const FisherPair p = fisher_xvec(rho, sx, alpha, sigma2);
    const Eigen::MatrixXd prod = to_eigen(p.fisher) * to_eigen(p.inverse);
    CHECK((prod - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-9);
    // Large alpha: inverse ~ (sigma^2 / alpha) Sigma_X.
    if (alpha == 400.0) CHECK(frob_diff_eigen(p.inverse, to_eigen(sx.matrix()) * sigma2 / alpha) <= 0.01 * sigma2 / alpha);
  }
}

TEST_CASE("X-vector bound and the stopping-set bracket") {
  const std::vector<double> eq{0.4, 0.4, 0.4};
  const double naive = 3.0 * 3.0 * (1.0 - 0.16) / (2.0 * 90.0 * kLn2);
  CHECK(xvec_bound(eq, 90.0) == doctest::Approx(naive));
  CHECK(xvec_bound(std::vector<double>{1.0, 0.2}, 50.0) == 0.0);
  // sigma^2 is an MMSE, so it never exceeds any single-coordinate residual.
  const sources::GaussianXVec neg{{0.5, 0.5}, linalg::CorrelationMatrix::equicorrelated(2, -0.5)};
  CHECK(sources::xvec_sigma2(neg) <= 0.75);
  CHECK(xvec_bound(neg, 50.0) == doctest::Approx(xvec_bound(neg.rho, 50.0)));

  const Bracket b = stopping_set_bracket(5.0, 0.5, 2);
  CHECK(b.lower == doctest::Approx(1.0 / 28.0));
  CHECK(b.upper == doctest::Approx(1.0 / (4.5 * 4.5)));
  const estimators::StoppingSetMoments mm =
      estimators::stopping_set_moments(protocol::make_stopping_set_params(5.0, 0.5, 2, 8), 50000, 3);
  CHECK(b.lower <= mm.beta_hat + 3.0 * mm.beta_se);
  CHECK(mm.beta_hat <= b.upper + 3.0 * mm.beta_se);
  CHECK(stopping_set_alpha(5.0, 0.5, 2) <= 28.0);
}

TEST_CASE("quantization bounds") {
  CHECK(quantization_loss_bound(6.0, 8, 2) == doctest::Approx(4096.0 * (std::exp(-18.0) + 1.0 / 256.0)));
  CHECK(quantization_loss_bound(60.0, 60, 2) < 1e-12);
  const protocol::StoppingSetParams p = protocol::make_stopping_set_params(6.0, 0.3, 2, 8);
  const double c = std::sqrt(3.0) * 6.0, e1 = 2.0 * (c - 6.0) / 256.0, e2 = 0.6 / 256.0;
  CHECK(w_quantization_mse_bound(p) ==
        doctest::Approx(16.0 * c * c * std::exp(-(c * c - 36.0) / 2.0) + 4.0 * (e1 + e2) * (e1 + e2)));
}

TEST_CASE("heavy- and light-tailed theory") {
  const ParetoTheory pt = pareto_theory(4.0, 0.6, 60.0);
  CHECK(pt.exponent == doctest::Approx(1.0 / 3.0));
  CHECK(pt.mse_bound == doctest::Approx(1.36 * std::pow(2.0, -20.0)));
  CHECK(pt.unquantized_floor == doctest::Approx(0.36 / 8.0));
  CHECK(pareto_theory(4.0, 0.8, 60.0).unquantized_floor == doctest::Approx(0.08));
  CHECK(laplace_theory(1.0, 10.0) == doctest::Approx(1.0 / (kLn2 * kLn2 * 100.0)));
  // Unquantized Pareto threshold variance approaches its floor.
  const sources::MarginalLaw par = sources::MarginalLaw::pareto(4.0);
  const double t = par.tail_inv(statmath::geometric_entropy_inv(200.0));
  CHECK(additive_exact(par, 0.8, t) == doctest::Approx(0.08).epsilon(1e-3));
}

TEST_CASE("binary examples") {
  const BinaryExample e = binary_example_theory(0.5, 10.0);
  CHECK(e.gaussianized == doctest::Approx(0.25 / (20.0 * kLn2)));
  CHECK(e.naive == doctest::Approx(0.025));
  CHECK(binary_example_theory(0.0, 10.0).naive == 0.0);
  CHECK(binary_example_theory(1.0, 10.0).gaussianized == 0.0);
  for (double p : {0.1, 0.3})
    for (double k : {5.0, 50.0}) {
      const BinaryExample b = binary_example_theory(p, k);
      CHECK(b.gaussianized / b.naive == doctest::Approx(1.0 / (2.0 * kLn2)));
    }
  // Block-sum law: crossing probability tends to the Gaussian value.
  const BinaryCltTheory c = binary_clt_theory(0.25, 20.0, 4096);
  CHECK(c.effective_bits == doctest::Approx(20.0).epsilon(0.1));
  CHECK_THROWS_AS(binary_clt_theory(0.25, 20.0, 4), ConfigError);
}

TEST_CASE("theory reports") {
  using sources::JointModel;
  for (double k : {10.0, 40.0}) {
    const TheoryReport r = theory({"threshold", JointModel(sources::GaussianScalar{0.5}), k});
    REQUIRE(r.exact_variance.has_value());
    REQUIRE(r.crlb_trace.has_value());
    CHECK(*r.exact_variance >= *r.crlb_trace);
    CHECK(r.asymptotic_variance == doctest::Approx(0.75 / (2.0 * k * kLn2)));
  }
  const std::vector<double> r4{0.9, 0.5, 0.1, -0.3};
  linalg::Matrix sy(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) sy(i, j) = i == j ? 1.0 : r4[i] * r4[j];
  const TheoryReport y = theory({"yvec", JointModel(sources::GaussianYVec{r4, linalg::CorrelationMatrix(sy)}), 40.0});
  REQUIRE(y.exact_variance.has_value());
  CHECK(*y.exact_variance >= *y.crlb_trace);
  CHECK(y.fisher.rows() == 4);

  const TheoryReport x =
      theory({"xvec", JointModel(sources::GaussianXVec{{0.95, 0.1}, linalg::CorrelationMatrix::identity(2)}), 400.0});
  CHECK(x.bound("xvec_bound").has_value());
  CHECK(x.bound("quantization_loss").has_value());
  CHECK(x.asymptotic_variance > 0.0);
  CHECK_FALSE(x.bound("no_such_label").has_value());
  CHECK(to_text(x).find("xvec") != std::string::npos);
}
