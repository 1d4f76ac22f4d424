#pragma once

// Every estimator is a prepared object: the constructor validates the model
// and resolves thresholds, allocations and normalizers once; run(seed) then
// executes one independent trial.
//
// Two engines produce the selected record:
//   Scan   - Alice literally walks the sample stream (cost grows like 2^k).
//   Direct - the selected record is drawn from its exact conditional law
//            (index geometric or uniform, value from the truncated marginal),
//            so any budget runs in O(d^2) time per trial.
// Auto picks Direct whenever the law of the selected record is available.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corrlink/linalg.hpp"
#include "corrlink/protocol.hpp"
#include "corrlink/sources.hpp"

namespace corrlink::estimators {

enum class Engine { Auto, Scan, Direct };

struct RunOptions {
  protocol::LedgerMode ledger = protocol::LedgerMode::ExpectedOnly;
  Engine engine = Engine::Auto;
  /// Samples Alice may scan per index; default 2^10 ceil(1/p).
  std::optional<double> wait_cap;
  /// Charge and quantize Sigma_X for the X-vector scheme.
  bool charge_sigma_x = false;
};

struct EstimateReport {
  std::vector<double> estimate;
  double bits_expected = 0.0;
  std::optional<long long> bits_realized;
  double samples_consumed = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;  // e.g. singular W_J; estimate is empty then
  std::string failure;
};

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual EstimateReport run(std::uint64_t seed) const = 0;
  /// Budget the scheme is configured for (expected bits per trial).
  virtual double configured_bits() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string scheme() const = 0;
};

/// rho_hat = Y_J / E X_J, J the argmax of 2^k samples.
class MaxEstimator final : public Estimator {
 public:
  MaxEstimator(const sources::JointModel& model, int k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return 1; }
  std::string scheme() const override { return "max"; }
  double mean_selected() const noexcept { return mean_; }

 private:
  double rho_;
  int k_;
  double n_;
  double mean_;
  RunOptions opts_;
  sources::JointModel model_;
};

/// rho_hat = Y_J / E(X | X > t), J the first index with X > t, where
/// h_g(Pr(X > t)) = k. Accepts GaussianScalar or AdditiveNoise models.
class ThresholdEstimator final : public Estimator {
 public:
  ThresholdEstimator(const sources::JointModel& model, double k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return 1; }
  std::string scheme() const override { return "threshold"; }

  double threshold() const noexcept { return t_; }
  double crossing_probability() const noexcept { return p_; }
  /// E(X | X > t); s(t) for Gaussian X.
  double normalizer() const noexcept { return norm_; }

 private:
  sources::AdditiveNoise law_;
  double k_;
  double p_;
  double t_;
  double norm_;
  RunOptions opts_;
  bool direct_;
  sources::JointModel model_;
};

/// Y-vector scheme: Rho_hat = Y_J / s(t).
class YVecEstimator final : public Estimator {
 public:
  YVecEstimator(const sources::JointModel& model, double k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return rho_.size(); }
  std::string scheme() const override { return "yvec"; }
  double threshold() const noexcept { return t_; }

 private:
  std::vector<double> rho_;
  linalg::Matrix noise_root_;
  double k_;
  double p_;
  double t_;
  double s_;
  RunOptions opts_;
  sources::JointModel model_;
};

/// One X-vector trial with every intermediate quantity, for diagnostics.
struct XVecTrial {
  protocol::Transcript transcript;
  linalg::Matrix w;                    // W_J
  linalg::Matrix w_hat;                // quantized W_J
  std::vector<double> y;               // Y_J (row)
  std::vector<double> estimate;        // Y_J W_hat^-1 Sigma_X^{1/2}
  std::vector<double> estimate_exact;  // Y_J W_J^-1 Sigma_X^{1/2}
  bool failed = false;
  std::string failure;
};

/// X-vector scheme with stopping sets. With quantize = false the estimate uses
/// the exact W_J (not describable with finitely many bits; diagnostic only).
class XVecEstimator final : public Estimator {
 public:
  XVecEstimator(const sources::JointModel& model, const protocol::StoppingSetParams& params, bool quantize = true,
                RunOptions opts = {}, std::optional<double> nominal_k = std::nullopt);
  /// Allocates (a, b, k_l, k_q) from the total budget k.
  static XVecEstimator from_budget(const sources::JointModel& model, double k, double b0 = 0.3, bool quantize = true,
                                   RunOptions opts = {});

  EstimateReport run(std::uint64_t seed) const override;
  XVecTrial run_detailed(std::uint64_t seed) const;
  double configured_bits() const override;
  std::size_t dim() const override { return rho_.size(); }
  std::string scheme() const override { return quantize_ ? "xvec" : "xvec_unquantized"; }
  const protocol::StoppingSetParams& params() const noexcept { return params_; }
  double sigma2() const noexcept { return sigma_ * sigma_; }

 private:
  std::vector<double> rho_;
  protocol::StoppingSetParams params_;
  bool quantize_;
  RunOptions opts_;
  std::optional<double> nominal_k_;
  linalg::Matrix sigma_root_;      // Sigma_X^{1/2}
  linalg::Matrix sigma_inv_root_;  // Sigma_X^{-1/2}
  linalg::Matrix bob_root_;        // Sigma_X^{1/2} as Bob knows it
  std::vector<double> y_coef_;     // Rho Sigma_X^{-1/2}
  double sigma_;
  int sigma_bits_ = 0;
  sources::JointModel model_;
};

/// Threshold scheme on block averages (X_bar, Y_bar) of m samples, normalized
/// by s(t) rather than the unknown E(X_bar | X_bar > t).
class CltEstimator final : public Estimator {
 public:
  /// model must be BlockAveraged. Throws ConfigError when the inner X is
  /// bounded by x and m <= t^2 / x^2.
  CltEstimator(const sources::JointModel& model, double k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return 1; }
  std::string scheme() const override { return "clt"; }

  double threshold() const noexcept { return t_; }
  std::size_t block_size() const noexcept { return m_; }
  /// Pr(X_bar > t) when it is known in closed form (binary or Gaussian inner).
  std::optional<double> crossing_probability() const noexcept { return true_p_; }

 private:
  double k_;
  double p_nominal_;
  double t_;
  double s_;
  std::size_t m_;
  RunOptions opts_;
  std::optional<double> true_p_;
  bool binary_direct_ = false;
  bool gaussian_direct_ = false;
  double rho_ = 0.0;
  double flip_ = 0.0;
  std::vector<double> tail_cdf_;  // binary: cumulative law of B over the crossing region
  long long b_min_ = 0;
  sources::JointModel model_;
};

/// rho_hat = Y_J / X_hat_J with the index and a quantized X_J sent.
class ParetoQuantizedEstimator final : public Estimator {
 public:
  ParetoQuantizedEstimator(const sources::JointModel& model, double k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return 1; }
  std::string scheme() const override { return "pareto_quantized"; }
  const protocol::ParetoAllocation& allocation() const noexcept { return alloc_; }

 private:
  sources::AdditiveNoise law_;
  double k_;
  protocol::ParetoAllocation alloc_;
  RunOptions opts_;
  sources::JointModel model_;
};

/// Two scalar threshold runs on U = n_1 X and V = n_2 X (rows of M scaled to
/// unit variance), then Rho_hat = N^{-1} (alpha_hat_1, alpha_hat_2).
class LinearBaselineEstimator final : public Estimator {
 public:
  LinearBaselineEstimator(const sources::JointModel& model, double k1, double k2, const linalg::Matrix& m,
                          RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k1_ + k2_; }
  std::size_t dim() const override { return 2; }
  std::string scheme() const override { return "linear_baseline"; }

  /// Rows of M normalized to unit variance under Sigma_X.
  const linalg::Matrix& normalized() const noexcept { return n_; }
  /// Correlations of U and V with Y.
  const std::vector<double>& transformed_correlations() const noexcept { return alpha_; }

 private:
  double k1_;
  double k2_;
  linalg::Matrix n_;
  linalg::Matrix n_inv_;
  std::vector<double> alpha_;
  std::unique_ptr<ThresholdEstimator> first_;
  std::unique_ptr<ThresholdEstimator> second_;
  RunOptions opts_;
  sources::JointModel model_;
};

/// d independent scalar threshold runs with k/d bits each, one per correlation
/// (Y-vector or X-vector models).
class NaiveScalarEstimator final : public Estimator {
 public:
  NaiveScalarEstimator(const sources::JointModel& model, double k, RunOptions opts = {});
  EstimateReport run(std::uint64_t seed) const override;
  double configured_bits() const override { return k_; }
  std::size_t dim() const override { return runs_.size(); }
  std::string scheme() const override { return "naive_scalar"; }

 private:
  double k_;
  std::vector<std::unique_ptr<ThresholdEstimator>> runs_;
  std::vector<std::size_t> coords_;
  RunOptions opts_;
  sources::JointModel model_;
};

// Single-trial conveniences.
EstimateReport estimate_max(const sources::JointModel& model, int k, std::uint64_t seed, RunOptions opts = {});
EstimateReport estimate_threshold(const sources::JointModel& model, double k, std::uint64_t seed,
                                  RunOptions opts = {});
EstimateReport estimate_additive_threshold(const sources::JointModel& model, double k, std::uint64_t seed,
                                           RunOptions opts = {});
EstimateReport estimate_yvec(const sources::JointModel& model, double k, std::uint64_t seed, RunOptions opts = {});
EstimateReport estimate_xvec(const sources::JointModel& model, double k, double b0, std::uint64_t seed,
                             RunOptions opts = {});
/// k_l bits per index, b0 as above; uses the exact W_J.
EstimateReport estimate_xvec_unquantized(const sources::JointModel& model, double k_l, double b0, std::uint64_t seed,
                                         RunOptions opts = {});
EstimateReport estimate_clt(const sources::JointModel& model, double k, std::uint64_t seed, RunOptions opts = {});
EstimateReport estimate_pareto_quantized(const sources::JointModel& model, double k, std::uint64_t seed,
                                         RunOptions opts = {});
EstimateReport estimate_linear_transform_baseline(const sources::JointModel& model, double k1, double k2,
                                                  const linalg::Matrix& m, std::uint64_t seed, RunOptions opts = {});

/// Stopping-set params with crossing probability such that h_g = k_l, b = b0.
protocol::StoppingSetParams stopping_params_for_index_bits(double k_l, std::size_t d, double b0, int k_q = 1);

struct ApproxMl {
  std::vector<double> estimate;  // C * Y_J
  double c = 0.0;
  std::vector<double> real_roots;
  /// Another real root lies within twice the distance to 1/x_J.
  bool ambiguous = false;
};

/// Root of -q C^3 + q x C^2 - (x^2 - 1 + q) C + x = 0, q = Y^T Sigma_Y^{-1} Y,
/// nearest to 1/x. Throws ConfigError without an admissible root.
ApproxMl approx_ml_estimate(double x_j, const std::vector<double>& y_j, const linalg::CorrelationMatrix& sigma_y);

/// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending, Newton-polished.
std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0);

/// Trial averages of W_J W_J^T and (W_J W_J^T)^{-1} over n stopping-set draws.
struct StoppingSetMoments {
  std::size_t draws = 0;
  linalg::Matrix mean_wwt;
  linalg::Matrix mean_inv_wwt;
  linalg::Matrix se_inv_wwt;  // entrywise standard errors
  double alpha_hat = 0.0;     // tr E[W W^T] / d
  double alpha_se = 0.0;
  double beta_hat = 0.0;      // tr E[(W W^T)^{-1}] / d
  double beta_se = 0.0;
};

StoppingSetMoments stopping_set_moments(const protocol::StoppingSetParams& params, std::size_t draws,
                                        std::uint64_t seed);

Engine parse_engine(const std::string& name);

}  // namespace corrlink::estimators
