#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <vector>

#include "corrlink/errors.hpp"
#include "corrlink/sources.hpp"
#include "doctest.h"
#include "oracle.hpp"

using namespace corrlink;
using namespace corrlink::sources;

namespace {

struct Draws {
  std::vector<std::vector<double>> x, y;
};

Draws draw(const JointModel& model, std::uint64_t seed, std::size_t n) {
  SampleStream s(model, seed);
  Draws out;
  out.x.assign(model.x_dim(), std::vector<double>(n));
  out.y.assign(model.y_dim(), std::vector<double>(n));
  std::vector<double> x(model.x_dim()), y(model.y_dim());
  for (std::size_t i = 0; i < n; ++i) {
    s.next(x, y);
    for (std::size_t j = 0; j < x.size(); ++j) out.x[j][i] = x[j];
    for (std::size_t j = 0; j < y.size(); ++j) out.y[j][i] = y[j];
  }
  return out;
}

std::vector<double> product(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// Kolmogorov-Smirnov distance against the standard normal CDF.
double ks_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const boost::math::normal_distribution<double> n;
  double worst = 0.0;
  const double size = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = boost::math::cdf(n, xs[i]);
    worst = std::max({worst, std::abs(f - i / size), std::abs(f - (i + 1) / size)});
  }
  return worst;
}

}  // namespace

TEST_CASE("marginal laws are standardized") {
  const MarginalLaw pareto = MarginalLaw::pareto(4.0);
  CHECK(pareto.x0() == doctest::Approx(std::sqrt(2.0) / 2.0));
  CHECK_THROWS_AS(MarginalLaw::pareto(2.0), ConfigError);
  CHECK_THROWS_AS(MarginalLaw::from_name("cauchy"), ConfigError);

  Rng rng(3);
  for (const MarginalLaw& law : {MarginalLaw::normal(), MarginalLaw::laplace(), MarginalLaw::uniform(),
                                 MarginalLaw::rademacher(), MarginalLaw::pareto(6.0)}) {
    std::vector<double> xs(1000000), sq(1000000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = law.sample(rng);
      sq[i] = xs[i] * xs[i];
    }
    const auto m = oracle::summarize(xs);
    const auto v = oracle::summarize(sq);
    CHECK(std::abs(m.mean) <= 5.0 * m.se);
    CHECK(std::abs(v.mean - 1.0) <= 5.0 * v.se);
  }
}

TEST_CASE("tails, inverses and conditional moments") {
  const MarginalLaw lap = MarginalLaw::laplace();
  CHECK(lap.tail(1.0) == doctest::Approx(0.5 * std::exp(-std::sqrt(2.0))));
  CHECK(lap.conditional_mean(2.0) == doctest::Approx(2.0 + 1.0 / std::sqrt(2.0)));
  CHECK(lap.conditional_variance(2.0) == doctest::Approx(0.5));
  const MarginalLaw par = MarginalLaw::pareto(4.0);
  CHECK(par.conditional_mean(3.0) == doctest::Approx(4.0 * 3.0 / 3.0));
  CHECK(par.conditional_variance(3.0) == doctest::Approx(4.0 * 9.0 / (9.0 * 2.0)));
  for (const MarginalLaw& law : {MarginalLaw::normal(), lap, par}) {
    for (double p : {1e-12, 1e-6, 0.01, 0.2}) CHECK(law.tail(law.tail_inv(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  // Conditional draws respect the threshold and the conditional mean.
  Rng rng(4);
  for (const MarginalLaw& law : {MarginalLaw::normal(), lap, MarginalLaw::pareto(5.0)}) {
    std::vector<double> xs(200000);
    for (double& x : xs) {
      x = law.sample_above(2.5, rng);
      REQUIRE(x > 2.5);
    }
    const auto s = oracle::summarize(xs);
    CHECK(std::abs(s.mean - law.conditional_mean(2.5)) <= 5.0 * s.se);
  }
  CHECK(MarginalLaw::uniform().support_bound().value() == doctest::Approx(std::sqrt(3.0)));
  CHECK_FALSE(MarginalLaw::normal().support_bound().has_value());
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(JointModel(GaussianScalar{1.2}), ConfigError);
  CHECK_THROWS_AS(JointModel(AdditiveNoise{-1.5}), ConfigError);
  CHECK_THROWS_AS(JointModel(DoublySymmetricBinary{1.5}), ConfigError);
  // sigma^2 = 1 - Rho Sigma_X^-1 Rho^T < 0.
  CHECK_THROWS_AS(JointModel(GaussianXVec{{0.9, 0.9}, linalg::CorrelationMatrix::identity(2)}), ConfigError);
  CHECK_NOTHROW(JointModel(GaussianXVec{{0.9, 0.9}, linalg::CorrelationMatrix::equicorrelated(2, 0.8)}));
  // Sigma_Y - Rho Rho^T must be PD.
  CHECK_THROWS_AS(JointModel(GaussianYVec{{0.9, -0.9}, linalg::CorrelationMatrix::equicorrelated(2, 0.5)}),
                  ConfigError);
  CHECK_THROWS_AS(JointModel::block_averaged(JointModel(GaussianScalar{0.1}), 0), ConfigError);
}

TEST_CASE("true correlations") {
  CHECK(true_correlations(JointModel(GaussianScalar{0.3})) == std::vector<double>{0.3});
  CHECK(true_correlations(JointModel(DoublySymmetricBinary{0.25}))[0] == doctest::Approx(0.5));
  const JointModel inner(GaussianScalar{-0.4});
  CHECK(true_correlations(JointModel::block_averaged(inner, 64)) == std::vector<double>{-0.4});
  const std::vector<double> rho{0.7, 0.5, 0.1};
  CHECK(true_correlations(JointModel(GaussianXVec{rho, linalg::CorrelationMatrix::identity(3)})) == rho);
}

TEST_CASE("scalar streams reproduce their correlation") {
  {
    const Draws d = draw(JointModel(GaussianScalar{0.0}), 1, 1000000);
    const auto s = oracle::summarize(product(d.x[0], d.y[0]));
    CHECK(std::abs(s.mean) <= 4.0 / std::sqrt(1e6) * 1.0001);
  }
  {
    const Draws d = draw(JointModel(DoublySymmetricBinary{0.25}), 2, 1000000);
    const auto s = oracle::summarize(product(d.x[0], d.y[0]));
    CHECK(std::abs(s.mean - 0.5) <= 5.0 * s.se);
    for (double v : d.x[0]) REQUIRE(std::abs(v) == 1.0);
  }
  const MarginalLaw laws[] = {MarginalLaw::normal(), MarginalLaw::laplace(), MarginalLaw::uniform(),
                              MarginalLaw::rademacher(), MarginalLaw::pareto(5.0)};
  for (const MarginalLaw& xl : laws) {
    for (const MarginalLaw& zl : {MarginalLaw::normal(), MarginalLaw::rademacher(), MarginalLaw::laplace()}) {
      const Draws d = draw(JointModel(AdditiveNoise{0.6, xl, zl}), 3, 200000);
      const auto s = oracle::summarize(product(d.x[0], d.y[0]));
      CHECK(std::abs(s.mean - 0.6) <= 5.0 * s.se);
    }
  }
}

TEST_CASE("vector streams have the right covariance") {
  const linalg::CorrelationMatrix sx = linalg::CorrelationMatrix::equicorrelated(3, 0.4);
  const std::vector<double> rho{0.5, 0.2, -0.1};
  const JointModel m(GaussianXVec{rho, sx});
  const Draws d = draw(m, 7, 100000);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const auto s = oracle::summarize(product(d.x[i], d.x[j]));
      CHECK(std::abs(s.mean - sx(i, j)) <= 5.0 * s.se);
    }
    const auto c = oracle::summarize(product(d.x[i], d.y[0]));
    CHECK(std::abs(c.mean - rho[i]) <= 5.0 * c.se);
  }
  const auto yy = oracle::summarize(product(d.y[0], d.y[0]));
  CHECK(std::abs(yy.mean - 1.0) <= 5.0 * yy.se);

  const std::vector<double> ry{0.9, 0.5, 0.1, -0.3};
  linalg::Matrix sy(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) sy(i, j) = i == j ? 1.0 : ry[i] * ry[j] + (i + j == 1 ? 0.05 : 0.0);
  const JointModel my(GaussianYVec{ry, linalg::CorrelationMatrix(sy)});
  const Draws e = draw(my, 8, 100000);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto c = oracle::summarize(product(e.x[0], e.y[i]));
    CHECK(std::abs(c.mean - ry[i]) <= 5.0 * c.se);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto s = oracle::summarize(product(e.y[i], e.y[j]));
      CHECK(std::abs(s.mean - sy(i, j)) <= 5.0 * s.se);
    }
  }
}

TEST_CASE("block averaging preserves variance and Gaussianizes") {
  const JointModel bin(DoublySymmetricBinary{0.25});
  double prev_ks = 1.0;
  for (std::size_t m : {1u, 4u, 256u}) {
    const Draws d = draw(JointModel::block_averaged(bin, m), 11, 20000);
    const auto sq = oracle::summarize(product(d.x[0], d.x[0]));
    CHECK(std::abs(sq.mean - 1.0) <= 5.0 * sq.se + 1e-12);
    const auto c = oracle::summarize(product(d.x[0], d.y[0]));
    CHECK(std::abs(c.mean - 0.5) <= 5.0 * c.se);
    const double ks = ks_normal(d.x[0]);
    CHECK(ks < prev_ks);
    prev_ks = ks;
  }
  CHECK(x_support_bound(JointModel::block_averaged(bin, 16)).value() == doctest::Approx(4.0));
}

TEST_CASE("streams are deterministic and replayable") {
  const JointModel m(GaussianXVec{{0.3, 0.2}, linalg::CorrelationMatrix::equicorrelated(2, 0.3)});
  const Draws a = draw(m, 99, 1000), b = draw(m, 99, 1000), c = draw(m, 100, 1000);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x != c.x);

  ReplayStream r({1.0, 2.0});
  std::vector<double> x(1), y(1);
  r.next(x, y);
  CHECK(x[0] == 1.0);
  r.next(x, y);
  CHECK(x[0] == 2.0);
  CHECK_THROWS_AS(r.next(x, y), ContractError);

  SampleStream inner(m, 5);
  TransformedStream t(inner, linalg::sym_inv_sqrt(linalg::CorrelationMatrix::equicorrelated(2, 0.3)));
  std::vector<double> w(2), yy(1), xs0, xs1;
  for (int i = 0; i < 100000; ++i) {
    t.next(w, yy);
    xs0.push_back(w[0]);
    xs1.push_back(w[1]);
  }
  const auto cross = oracle::summarize(product(xs0, xs1));
  CHECK(std::abs(cross.mean) <= 5.0 * cross.se);
}
