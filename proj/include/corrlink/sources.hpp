#pragma once

// Joint laws of (X, Y) and seeded i.i.d. sample streams drawn from them.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "corrlink/linalg.hpp"
#include "corrlink/rng.hpp"

namespace corrlink::sources {

/// Zero-mean, unit-variance marginal law.
class MarginalLaw {
 public:
  enum class Kind { StdNormal, Laplace, ParetoTwoSided, Uniform, Rademacher };

  static MarginalLaw normal() { return MarginalLaw(Kind::StdNormal, 0.0); }
  /// Pr(X > x) = exp(-sqrt(2) x) / 2 for x >= 0.
  static MarginalLaw laplace() { return MarginalLaw(Kind::Laplace, 0.0); }
  /// Pr(X > x) = Pr(X < -x) = (x0/x)^alpha / 2 for x >= x0, x0 = sqrt((alpha-2)/alpha).
  static MarginalLaw pareto(double alpha);
  /// Uniform on [-sqrt(3), sqrt(3)].
  static MarginalLaw uniform() { return MarginalLaw(Kind::Uniform, 0.0); }
  static MarginalLaw rademacher() { return MarginalLaw(Kind::Rademacher, 0.0); }
  /// Parses "normal", "laplace", "pareto" (needs alpha), "uniform", "rademacher".
  static MarginalLaw from_name(const std::string& name, double alpha = 0.0);

  Kind kind() const noexcept { return kind_; }
  double alpha() const noexcept { return alpha_; }
  double x0() const noexcept { return x0_; }
  std::string name() const;

  double sample(Rng& rng) const;
  /// Pr(X > x).
  double tail(double x) const;
  /// x with Pr(X > x) = p. Throws DomainError where the tail has no such point.
  double tail_inv(double p) const;
  /// E(X | X > t) and Var(X | X > t).
  double conditional_mean(double t) const;
  double conditional_variance(double t) const;
  /// Draws X conditioned on X > t.
  double sample_above(double t, Rng& rng) const;
  /// sup |X| for bounded laws.
  std::optional<double> support_bound() const;

  bool operator==(const MarginalLaw& other) const = default;

 private:
  MarginalLaw(Kind kind, double alpha);
  Kind kind_;
  double alpha_ = 0.0;
  double x0_ = 0.0;
};

struct GaussianScalar {
  double rho = 0.0;
};

/// Y = Rho X + (Sigma_Y - Rho Rho^T)^{1/2} Z with scalar X.
struct GaussianYVec {
  std::vector<double> rho;
  linalg::CorrelationMatrix sigma_y;
};

/// Y = Rho Sigma_X^{-1} X + sigma Z with vector X ~ N(0, Sigma_X).
struct GaussianXVec {
  std::vector<double> rho;
  linalg::CorrelationMatrix sigma_x;
};

/// Y = rho X + sqrt(1 - rho^2) Z.
struct AdditiveNoise {
  double rho = 0.0;
  MarginalLaw x_law = MarginalLaw::normal();
  MarginalLaw z_law = MarginalLaw::normal();
};

/// X uniform on {0,1}, Y = X flipped with probability p; emitted as 2X-1, 2Y-1.
struct DoublySymmetricBinary {
  double p = 0.25;
};

class JointModel;

/// Block sums of m inner samples scaled by 1/sqrt(m).
struct BlockAveraged {
  std::shared_ptr<const JointModel> inner;
  std::size_t m = 1;
};

class JointModel {
 public:
  using Variant = std::variant<GaussianScalar, GaussianYVec, GaussianXVec, AdditiveNoise,
                               DoublySymmetricBinary, BlockAveraged>;

  /// Validates; throws ConfigError on invalid parameters.
  JointModel(Variant v);  // NOLINT(google-explicit-constructor)
  static JointModel block_averaged(const JointModel& inner, std::size_t m);

  const Variant& variant() const noexcept { return v_; }
  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&v_);
  }

  std::size_t x_dim() const;
  std::size_t y_dim() const;
  std::string kind_name() const;

 private:
  Variant v_;
};

/// rho (scalar models) or Rho (vector models).
std::vector<double> true_correlations(const JointModel& model);

/// sigma^2 = 1 - Rho Sigma_X^{-1} Rho^T.
double xvec_sigma2(const GaussianXVec& model);

/// sup |X| of a scalar-X model when the law of X is bounded.
std::optional<double> x_support_bound(const JointModel& model);

/// Source of (x, y) pairs. Single consumer.
class PairStream {
 public:
  virtual ~PairStream() = default;
  virtual std::size_t x_dim() const = 0;
  virtual std::size_t y_dim() const = 0;
  /// Writes the next pair into x (x_dim entries) and y (y_dim entries).
  virtual void next(std::span<double> x, std::span<double> y) = 0;
};

class SampleStream final : public PairStream {
 public:
  SampleStream(const JointModel& model, std::uint64_t seed);
  ~SampleStream() override;
  SampleStream(SampleStream&&) noexcept;

  std::size_t x_dim() const override { return x_dim_; }
  std::size_t y_dim() const override { return y_dim_; }
  void next(std::span<double> x, std::span<double> y) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t x_dim_;
  std::size_t y_dim_;
};

/// Deterministic infinite stream of i.i.d. pairs from the model.
SampleStream sample_stream(const JointModel& model, std::uint64_t seed);

/// Replays a fixed list of pairs; throws ContractError once exhausted.
class ReplayStream final : public PairStream {
 public:
  ReplayStream(std::vector<std::vector<double>> xs, std::vector<std::vector<double>> ys);
  /// Scalar convenience: y defaults to zeros.
  explicit ReplayStream(const std::vector<double>& xs);

  std::size_t x_dim() const override { return x_dim_; }
  std::size_t y_dim() const override { return y_dim_; }
  void next(std::span<double> x, std::span<double> y) override;

 private:
  std::vector<std::vector<double>> xs_;
  std::vector<std::vector<double>> ys_;
  std::size_t pos_ = 0;
  std::size_t x_dim_;
  std::size_t y_dim_;
};

/// Applies x -> T x to an inner stream (T = Sigma_X^{-1/2} for whitening).
class TransformedStream final : public PairStream {
 public:
  TransformedStream(PairStream& inner, linalg::Matrix transform);

  std::size_t x_dim() const override { return transform_.rows(); }
  std::size_t y_dim() const override { return inner_.y_dim(); }
  void next(std::span<double> x, std::span<double> y) override;

 private:
  PairStream& inner_;
  linalg::Matrix transform_;
  std::vector<double> buf_;
};

}  // namespace corrlink::sources
