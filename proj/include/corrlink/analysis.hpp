#pragma once

// Closed-form variances, Fisher information, Cramer-Rao bounds and error
// bounds for every scheme. Asymptotic expressions drop their o(1) terms.

#include <optional>
#include <string>
#include <vector>

#include "corrlink/linalg.hpp"
#include "corrlink/protocol.hpp"
#include "corrlink/sources.hpp"

namespace corrlink::analysis {

struct LabeledValue {
  std::string label;
  double value = 0.0;
};

struct TheoryReport {
  std::string scheme;
  double k = 0.0;
  std::optional<double> exact_variance;  // trace for vector schemes; MSE where the scheme is biased
  double asymptotic_variance = 0.0;
  linalg::Matrix fisher;                 // empty when no Fisher matrix applies
  std::optional<double> crlb_trace;
  std::vector<LabeledValue> bounds;
  /// The value reported in the CSV theory_bound column.
  std::optional<double> headline_bound;

  std::optional<double> bound(const std::string& label) const;
};

/// Threshold with h_g(Q(t)) = k.
double threshold_for_bits(double k);

double zhang_berger_variance(double rho, double k, double rate);
/// (1 - rho^2) / (2 k ln 2).
double zhang_berger_optimal(double rho, double k);

/// Fisher information about rho in (x, Y) with Y | x ~ N(rho x, 1 - rho^2).
double fisher_scalar_given_x(double rho, double x);
/// Same, averaged over x with E x^2 = ex2.
double fisher_from_second_moment(double rho, double ex2);
double fisher_max(double rho, int k);
double fisher_threshold(double rho, double t);

/// (1/s^2)(1 - rho^2 (s - t) s), s = s(t).
double exact_threshold_variance(double rho, double t);
/// (rho^2 Var X_J + 1 - rho^2) / (E X_J)^2 for the max of 2^k normals.
double exact_max_variance(double rho, int k);
/// (rho^2 Var(X|X>t) + 1 - rho^2) / E(X|X>t)^2.
double additive_exact(const sources::MarginalLaw& x_law, double rho, double t);

struct FisherPair {
  linalg::Matrix fisher;
  linalg::Matrix inverse;  // closed form via Sherman-Morrison
};

/// Y-vector scheme, given E X_J^2.
FisherPair fisher_yvec(const std::vector<double>& rho, const linalg::CorrelationMatrix& sigma_y, double ex2);
/// X-vector scheme with E[W_J W_J^T] = alpha I.
FisherPair fisher_xvec(const std::vector<double>& rho, const linalg::CorrelationMatrix& sigma_x, double alpha,
                       double sigma2);

/// d^2 min(1 - rho_l^2) / (2 k ln 2).
double xvec_bound(const std::vector<double>& rho, double k);
/// As above; also checks sigma^2 <= min(1 - rho_l^2) (ContractError otherwise).
double xvec_bound(const sources::GaussianXVec& model, double k);

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// (a^2 + d + 1)^-1 <= 1/alpha <= beta <= (a - (d-1) b)^-2.
Bracket stopping_set_bracket(double a, double b, std::size_t d);
/// tr E[W_J W_J^T] / d in closed form: 1 + a s(a) + (d-1)(1 - 2 b phi(b) / (1 - 2 Q(b))).
double stopping_set_alpha(double a, double b, std::size_t d);

/// (2d)^6 (exp(-a^2/2) + 2^-k_q).
double quantization_loss_bound(double a, int k_q, std::size_t d);
/// 8 d c^2 exp(-(c^2 - a^2)/2) + d^2 (eps1 + eps2)^2 with c = sqrt(3) a,
/// eps1 = 2(c - a)/2^k_q, eps2 = 2b/2^k_q.
double w_quantization_mse_bound(const protocol::StoppingSetParams& params);

struct ParetoTheory {
  double exponent = 0.0;   // (2/alpha)(alpha-2)/(alpha-1)
  double mse_bound = 0.0;  // (1 + rho^2) 2^(-exponent k)
  double finite_bound = 0.0;  // (1 - rho^2 + rho^2 Delta^2 + c rho^2) / t^2
  double unquantized_floor = 0.0;  // rho^2 / (alpha (alpha - 2))
};

ParetoTheory pareto_theory(double alpha, double rho, double k);

/// (2 - rho^2) / ((ln 2)^2 k^2).
double laplace_theory(double rho, double k);

struct BinaryExample {
  double gaussianized = 0.0;  // p(1-p) / (2 k ln 2)
  double naive = 0.0;         // p(1-p) / k
};

BinaryExample binary_example_theory(double p, double k);

/// Exact law of the block-averaged binary threshold scheme.
struct BinaryCltTheory {
  double crossing_probability = 0.0;  // Pr(X_bar > t)
  double effective_bits = 0.0;        // h_g of the above
  double mean_selected = 0.0;         // E(X_bar | X_bar > t)
  double mse = 0.0;                   // E(Y_bar_J / s(t) - rho)^2
  double bias = 0.0;
};

/// Throws ConfigError when X_bar cannot exceed t.
BinaryCltTheory binary_clt_theory(double p, double k, std::size_t m);

/// tr Cov of N^{-1} alpha_hat with independent coordinates: rows of N are
/// (a1, b1) and (b2, a2).
double linear_baseline_trace(const linalg::Matrix& n, double var1, double var2);

/// Sum of exact scalar threshold variances with k/d bits per coordinate.
double naive_scalar_exact(const std::vector<double>& rho, double k);

/// Everything needed to build a TheoryReport for one grid point.
struct TheoryQuery {
  std::string scheme;
  sources::JointModel model;
  double k = 0.0;
  double b0 = 0.3;
  std::optional<linalg::Matrix> transform;  // linear_baseline
  double k1 = 0.0;
  double k2 = 0.0;
};

TheoryReport theory(const TheoryQuery& query);

/// Multi-line human-readable rendering.
std::string to_text(const TheoryReport& report);

}  // namespace corrlink::analysis
