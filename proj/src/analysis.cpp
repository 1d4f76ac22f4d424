#include "corrlink/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "corrlink/errors.hpp"
#include "corrlink/statmath.hpp"

namespace corrlink::analysis {

using linalg::Matrix;
using statmath::kLn2;

namespace {

void require_rho(double rho, const char* who) {
  if (!(std::abs(rho) <= 1.0)) throw DomainError(std::string(who) + ": |rho| must be <= 1");
}

void require_open_rho(double rho, const char* who) {
  if (!(std::abs(rho) < 1.0)) throw DomainError(std::string(who) + ": |rho| must be < 1 for finite information");
}

double sum_one_minus_sq(const std::vector<double>& rho) {
  double s = 0.0;
  for (double r : rho) s += 1.0 - r * r;
  return s;
}

double min_one_minus_sq(const std::vector<double>& rho) {
  double m = std::numeric_limits<double>::infinity();
  for (double r : rho) m = std::min(m, 1.0 - r * r);
  return m;
}

// (A + c u u^T)^{-1} from A^{-1}.
Matrix sherman_morrison(const Matrix& a_inv, const std::vector<double>& u, double c) {
  const std::vector<double> au = linalg::multiply(a_inv, u);
  const double denom = 1.0 + c * linalg::dot(u, au);
  Matrix out = a_inv;
  for (std::size_t i = 0; i < au.size(); ++i)
    for (std::size_t j = 0; j < au.size(); ++j) out(i, j) -= c * au[i] * au[j] / denom;
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::optional<double> TheoryReport::bound(const std::string& label) const {
  for (const LabeledValue& b : bounds)
    if (b.label == label) return b.value;
  return std::nullopt;
}

double threshold_for_bits(double k) {
  if (!(k > 0.0)) throw ConfigError("threshold_for_bits: k must be positive");
  const double p = statmath::geometric_entropy_inv(k);
  if (!(p < 0.5)) throw ConfigError("threshold_for_bits: k=" + fmt(k) + " gives a non-positive threshold");
  return statmath::Q_inv(p);
}

double zhang_berger_variance(double rho, double k, double rate) {
  require_rho(rho, "zhang_berger_variance");
  if (!(k > 0.0) || !(rate > 0.0)) throw DomainError("zhang_berger_variance: k and rate must be positive");
  const double r2 = rho * rho;
  return (rate / k) * (1.0 + r2 + (1.0 - r2) / std::expm1(2.0 * rate * kLn2));
}

double zhang_berger_optimal(double rho, double k) {
  require_rho(rho, "zhang_berger_optimal");
  if (!(k > 0.0)) throw DomainError("zhang_berger_optimal: k must be positive");
  return (1.0 - rho * rho) / (2.0 * k * kLn2);
}

double fisher_scalar_given_x(double rho, double x) { return fisher_from_second_moment(rho, x * x); }

double fisher_from_second_moment(double rho, double ex2) {
  require_open_rho(rho, "fisher");
  const double v = 1.0 - rho * rho;
  return (v * ex2 + 2.0 * rho * rho) / (v * v);
}

double fisher_max(double rho, int k) {
  if (k < 1) throw ConfigError("fisher_max: k must be >= 1");
  return fisher_from_second_moment(rho, statmath::max_normal_moments(std::ldexp(1.0, k)).second_moment);
}

double fisher_threshold(double rho, double t) {
  return fisher_from_second_moment(rho, statmath::truncated_normal_moments(t).second_moment);
}

double exact_threshold_variance(double rho, double t) {
  require_rho(rho, "exact_threshold_variance");
  const double s = statmath::inverse_mills(t);
  return (1.0 - rho * rho * (s - t) * s) / (s * s);
}

double exact_max_variance(double rho, int k) {
  require_rho(rho, "exact_max_variance");
  if (k < 1) throw ConfigError("exact_max_variance: k must be >= 1");
  const statmath::MaxMoments mm = statmath::max_normal_moments(std::ldexp(1.0, k));
  return (rho * rho * mm.variance + 1.0 - rho * rho) / (mm.mean * mm.mean);
}

double additive_exact(const sources::MarginalLaw& x_law, double rho, double t) {
  require_rho(rho, "additive_exact");
  const double mean = x_law.conditional_mean(t);
  return (rho * rho * x_law.conditional_variance(t) + 1.0 - rho * rho) / (mean * mean);
}

FisherPair fisher_yvec(const std::vector<double>& rho, const linalg::CorrelationMatrix& sigma_y, double ex2) {
  const std::size_t d = rho.size();
  if (sigma_y.dim() != d) throw ConfigError("fisher_yvec: Sigma_Y dimension does not match Rho");
  Matrix sigma = sigma_y.matrix();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) sigma(i, j) -= rho[i] * rho[j];
  const Matrix sigma_inv = linalg::invert(sigma);
  const std::vector<double> u = linalg::multiply(sigma_inv, rho);
  const double q = linalg::dot(rho, u);

  FisherPair out;
  out.fisher = (ex2 + q) * sigma_inv;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.fisher(i, j) += u[i] * u[j];
  out.inverse = sigma;
  const double c = 1.0 / (ex2 + 2.0 * q);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.inverse(i, j) -= c * rho[i] * rho[j];
  out.inverse *= 1.0 / (ex2 + q);
  return out;
}

FisherPair fisher_xvec(const std::vector<double>& rho, const linalg::CorrelationMatrix& sigma_x, double alpha,
                       double sigma2) {
  const std::size_t d = rho.size();
  if (sigma_x.dim() != d) throw ConfigError("fisher_xvec: Sigma_X dimension does not match Rho");
  if (!(sigma2 > 0.0)) throw DomainError("fisher_xvec: sigma^2 must be positive");
  if (!(alpha > 0.0)) throw DomainError("fisher_xvec: alpha must be positive");
  const double dd = static_cast<double>(d);
  const Matrix sx_inv = linalg::invert(sigma_x.matrix());
  const std::vector<double> u = linalg::multiply(sx_inv, rho);
  const double c = 2.0 * dd / (sigma2 * sigma2);

  FisherPair out;
  out.fisher = (alpha / sigma2) * sx_inv;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.fisher(i, j) += c * u[i] * u[j];
  out.inverse = sherman_morrison((sigma2 / alpha) * sigma_x.matrix(), u, c);
  return out;
}

double xvec_bound(const std::vector<double>& rho, double k) {
  if (rho.empty()) throw ConfigError("xvec_bound: empty Rho");
  if (!(k > 0.0)) throw DomainError("xvec_bound: k must be positive");
  for (double r : rho) require_rho(r, "xvec_bound");
  const double d = static_cast<double>(rho.size());
  return d * d * min_one_minus_sq(rho) / (2.0 * k * kLn2);
}

double xvec_bound(const sources::GaussianXVec& model, double k) {
  const double s2 = sources::xvec_sigma2(model);
  // sigma^2 is the MMSE of Y given the whole vector, so it cannot exceed any
  // single-coordinate residual 1 - rho_l^2.
  if (s2 > min_one_minus_sq(model.rho) + 1e-12) {
    throw ContractError("xvec_bound: sigma^2=" + fmt(s2) + " exceeds min(1 - rho_l^2)");
  }
  return xvec_bound(model.rho, k);
}

Bracket stopping_set_bracket(double a, double b, std::size_t d) {
  const double dd = static_cast<double>(d);
  const double gap = a - (dd - 1.0) * b;
  if (!(gap > 0.0)) throw ConfigError("stopping_set_bracket: need a > (d-1) b");
  return {1.0 / (a * a + dd + 1.0), 1.0 / (gap * gap)};
}

double stopping_set_alpha(double a, double b, std::size_t d) {
  const double diag = 1.0 + a * statmath::inverse_mills(a);
  const double off = 1.0 - 2.0 * b * statmath::phi(b) / (1.0 - 2.0 * statmath::Q(b));
  return diag + (static_cast<double>(d) - 1.0) * off;
}

double quantization_loss_bound(double a, int k_q, std::size_t d) {
  return std::pow(2.0 * static_cast<double>(d), 6) * (std::exp(-a * a / 2.0) + std::ldexp(1.0, -k_q));
}

double w_quantization_mse_bound(const protocol::StoppingSetParams& params) {
  const double d = static_cast<double>(params.d);
  const double c = std::sqrt(3.0) * params.a;
  const double cells = std::ldexp(1.0, params.k_q);
  const double eps1 = 2.0 * (c - params.a) / cells;
  const double eps2 = 2.0 * params.b / cells;
  return 8.0 * d * c * c * std::exp(-(c * c - params.a * params.a) / 2.0) + d * d * (eps1 + eps2) * (eps1 + eps2);
}

ParetoTheory pareto_theory(double alpha, double rho, double k) {
  require_rho(rho, "pareto_theory");
  if (!(alpha > 2.0)) throw ConfigError("pareto_theory: alpha must exceed 2");
  ParetoTheory out;
  out.exponent = (2.0 / alpha) * (alpha - 2.0) / (alpha - 1.0);
  out.mse_bound = (1.0 + rho * rho) * std::exp2(-out.exponent * k);
  out.unquantized_floor = rho * rho / (alpha * (alpha - 2.0));
  const protocol::ParetoAllocation alloc = protocol::allocate_bits_pareto(k, alpha);
  const double c = 2.0 / ((alpha - 1.0) * (alpha - 1.0) * (alpha - 2.0));
  const double delta = std::ldexp(alloc.u - alloc.t, -alloc.k_q);
  const double r2 = rho * rho;
  out.finite_bound = (1.0 - r2 + r2 * delta * delta + c * r2) / (alloc.t * alloc.t);
  return out;
}

double laplace_theory(double rho, double k) {
  require_rho(rho, "laplace_theory");
  return (2.0 - rho * rho) / (kLn2 * kLn2 * k * k);
}

BinaryExample binary_example_theory(double p, double k) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_example_theory: p must lie in [0, 1]");
  const double v = p * (1.0 - p);
  return {v / (2.0 * k * kLn2), v / k};
}

BinaryCltTheory binary_clt_theory(double p, double k, std::size_t m) {
  if (!(p >= 0.0 && p <= 0.5)) throw ConfigError("binary_clt_theory: flip probability must lie in [0, 1/2]");
  if (m < 1) throw ConfigError("binary_clt_theory: m must be >= 1");
  const double t = threshold_for_bits(k);
  const double s = statmath::inverse_mills(t);
  const double rho = 1.0 - 2.0 * p;
  const double mm = static_cast<double>(m);
  const double sm = std::sqrt(mm);
  const double lg = std::lgamma(mm + 1.0) - mm * kLn2;

  // X_bar = (2B - m)/sqrt(m) with B ~ Bin(m, 1/2); given B, Y_bar has mean
  // rho X_bar and variance 1 - rho^2.
  double mass = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t bi = m + 1; bi-- > 0;) {
    const double b = static_cast<double>(bi);
    const double x = (2.0 * b - mm) / sm;
    if (!(x > t)) break;
    const double w = std::exp(lg - std::lgamma(b + 1.0) - std::lgamma(mm - b + 1.0));
    mass += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  if (mass == 0.0) {
    throw ConfigError("binary_clt_theory: X_bar cannot exceed t=" + fmt(t) + " with m=" + std::to_string(m));
  }
  BinaryCltTheory out;
  out.crossing_probability = mass;
  out.effective_bits = statmath::geometric_entropy(mass);
  out.mean_selected = m1 / mass;
  const double ex2 = m2 / mass;
  out.bias = rho * (out.mean_selected / s - 1.0);
  // E(rho X/s - rho)^2 + (1 - rho^2)/s^2
  out.mse = rho * rho * (ex2 / (s * s) - 2.0 * out.mean_selected / s + 1.0) + (1.0 - rho * rho) / (s * s);
  return out;
}

double linear_baseline_trace(const Matrix& n, double var1, double var2) {
  if (n.rows() != 2 || n.cols() != 2) throw ConfigError("linear_baseline_trace: N must be 2x2");
  const Matrix inv = linalg::invert(n);
  double out = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double v = i == 0 ? var1 : var2;
    out += v * (inv(0, i) * inv(0, i) + inv(1, i) * inv(1, i));
  }
  return out;
}

double naive_scalar_exact(const std::vector<double>& rho, double k) {
  if (rho.empty()) throw ConfigError("naive_scalar_exact: empty Rho");
  const double t = threshold_for_bits(k / static_cast<double>(rho.size()));
  double out = 0.0;
  for (double r : rho) out += exact_threshold_variance(r, t);
  return out;
}

// -------------------------------------------------------------- dispatcher

namespace {

double asymptotic_scalar(double rho, double k) { return (1.0 - rho * rho) / (2.0 * k * kLn2); }

void fill_scalar_fisher(TheoryReport& r, double rho, double ex2) {
  if (std::abs(rho) >= 1.0) return;
  const double j = fisher_from_second_moment(rho, ex2);
  r.fisher = Matrix{{j}};
  r.crlb_trace = 1.0 / j;
  r.bounds.push_back({"crlb", 1.0 / j});
}

TheoryReport scalar_gaussian(const std::string& scheme, double rho, double k) {
  TheoryReport r;
  r.scheme = scheme;
  r.k = k;
  r.asymptotic_variance = asymptotic_scalar(rho, k);
  if (scheme == "max") {
    const double kk = std::round(k);
    if (std::abs(kk - k) > 1e-9 || kk < 1.0) throw ConfigError("max: k must be a positive integer");
    r.exact_variance = exact_max_variance(rho, static_cast<int>(kk));
    fill_scalar_fisher(r, rho, statmath::max_normal_moments(std::ldexp(1.0, static_cast<int>(kk))).second_moment);
  } else {
    const double t = threshold_for_bits(k);
    r.exact_variance = exact_threshold_variance(rho, t);
    fill_scalar_fisher(r, rho, statmath::truncated_normal_moments(t).second_moment);
  }
  r.headline_bound = r.crlb_trace;
  r.bounds.push_back({"zhang_berger", zhang_berger_optimal(rho, k)});
  return r;
}

TheoryReport additive(const sources::AdditiveNoise& law, double k) {
  if (law.x_law.kind() == sources::MarginalLaw::Kind::StdNormal) return scalar_gaussian("threshold", law.rho, k);
  TheoryReport r;
  r.scheme = "threshold";
  r.k = k;
  const double p = statmath::geometric_entropy_inv(k);
  const double t = law.x_law.tail_inv(p);
  r.exact_variance = additive_exact(law.x_law, law.rho, t);
  switch (law.x_law.kind()) {
    case sources::MarginalLaw::Kind::Laplace:
      r.asymptotic_variance = laplace_theory(law.rho, k);
      break;
    case sources::MarginalLaw::Kind::ParetoTwoSided: {
      const double a = law.x_law.alpha();
      r.asymptotic_variance = law.rho * law.rho / (a * (a - 2.0));
      r.bounds.push_back({"pareto_floor", r.asymptotic_variance});
      if (r.asymptotic_variance == 0.0) r.asymptotic_variance = *r.exact_variance;
      break;
    }
    default:
      r.asymptotic_variance = *r.exact_variance;
  }
  r.headline_bound = r.exact_variance;
  return r;
}

TheoryReport yvec(const sources::GaussianYVec& m, double k) {
  TheoryReport r;
  r.scheme = "yvec";
  r.k = k;
  const double t = threshold_for_bits(k);
  const statmath::ThresholdMoments tm = statmath::truncated_normal_moments(t);
  double tr_sigma = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < m.rho.size(); ++i) {
    tr_sigma += 1.0 - m.rho[i] * m.rho[i];
    norm2 += m.rho[i] * m.rho[i];
  }
  r.exact_variance = (tr_sigma + tm.variance * norm2) / (tm.mean * tm.mean);
  r.asymptotic_variance = sum_one_minus_sq(m.rho) / (2.0 * k * kLn2);
  const FisherPair fp = fisher_yvec(m.rho, m.sigma_y, tm.second_moment);
  r.fisher = fp.fisher;
  r.crlb_trace = fp.inverse.trace();
  r.headline_bound = r.crlb_trace;
  r.bounds.push_back({"crlb", *r.crlb_trace});
  r.bounds.push_back({"naive_scalar_asymptotic",
                      static_cast<double>(m.rho.size()) * sum_one_minus_sq(m.rho) / (2.0 * k * kLn2)});
  return r;
}

protocol::StoppingSetParams unquantized_params(double k_l, std::size_t d, double b0) {
  const double p = statmath::geometric_entropy_inv(k_l);
  const double qa = p / (2.0 * std::pow(1.0 - 2.0 * statmath::Q(b0), static_cast<double>(d) - 1.0));
  if (!(qa < 0.5)) throw ConfigError("xvec_unquantized: k_l too small for a positive threshold");
  protocol::StoppingSetParams params = protocol::make_stopping_set_params(statmath::Q_inv(qa), b0, d, 1);
  params.k_l = k_l;
  return params;
}

TheoryReport xvec(const sources::GaussianXVec& m, double k, double b0, bool quantized) {
  TheoryReport r;
  r.scheme = quantized ? "xvec" : "xvec_unquantized";
  r.k = k;
  const std::size_t d = m.rho.size();
  const double dd = static_cast<double>(d);
  const double s2 = sources::xvec_sigma2(m);
  const protocol::StoppingSetParams params =
      quantized ? protocol::allocate_bits_xvec(k, d, b0) : unquantized_params(k / dd, d, b0);
  const Bracket br = stopping_set_bracket(params.a, params.b, d);
  const double alpha = stopping_set_alpha(params.a, params.b, d);
  // tr Cov = beta sigma^2 tr Sigma_X = beta sigma^2 d.
  r.asymptotic_variance = dd * dd * s2 / (2.0 * k * kLn2);
  r.bounds.push_back({"a", params.a});
  r.bounds.push_back({"b", params.b});
  r.bounds.push_back({"k_q", static_cast<double>(params.k_q)});
  r.bounds.push_back({"alpha", alpha});
  r.bounds.push_back({"stopping_set_inv_alpha_lower", br.lower});
  r.bounds.push_back({"stopping_set_beta_upper", br.upper});
  const double unq_upper = br.upper * s2 * dd;
  r.bounds.push_back({"unquantized_trace_lower", s2 * dd / alpha});
  r.bounds.push_back({"unquantized_trace_upper", unq_upper});
  if (s2 > 0.0) {
    const FisherPair fp = fisher_xvec(m.rho, m.sigma_x, alpha, s2);
    r.fisher = fp.fisher;
    r.crlb_trace = fp.inverse.trace();
    r.bounds.push_back({"crlb", *r.crlb_trace});
  }
  r.bounds.push_back({"xvec_bound", xvec_bound(m, k)});
  if (quantized) {
    const double lq = quantization_loss_bound(params.a, params.k_q, d);
    r.bounds.push_back({"quantization_loss", lq});
    r.bounds.push_back({"w_quantization_mse", w_quantization_mse_bound(params)});
    r.headline_bound = xvec_bound(m, k);
  } else {
    r.headline_bound = unq_upper;
  }
  return r;
}

TheoryReport naive(const sources::JointModel& model, double k) {
  TheoryReport r;
  r.scheme = "naive_scalar";
  r.k = k;
  const std::vector<double> rho = sources::true_correlations(model);
  const double d = static_cast<double>(rho.size());
  r.exact_variance = naive_scalar_exact(rho, k);
  r.asymptotic_variance = d * sum_one_minus_sq(rho) / (2.0 * k * kLn2);
  double crlb = 0.0;
  bool finite = true;
  const double t = threshold_for_bits(k / d);
  for (double x : rho) {
    if (std::abs(x) >= 1.0) {
      finite = false;
      break;
    }
    crlb += 1.0 / fisher_threshold(x, t);
  }
  if (finite) {
    r.crlb_trace = crlb;
    r.bounds.push_back({"crlb", crlb});
  }
  r.headline_bound = r.crlb_trace;
  return r;
}

TheoryReport clt(const sources::BlockAveraged& blk, double k) {
  TheoryReport r;
  r.scheme = "clt";
  r.k = k;
  const double t = threshold_for_bits(k);
  if (const auto* b = blk.inner->get_if<sources::DoublySymmetricBinary>()) {
    const double rho = 1.0 - 2.0 * b->p;
    const BinaryCltTheory th = binary_clt_theory(b->p, k, blk.m);
    r.exact_variance = th.mse;
    r.asymptotic_variance = asymptotic_scalar(rho, k);
    r.bounds.push_back({"effective_bits", th.effective_bits});
    r.bounds.push_back({"bias", th.bias});
    r.bounds.push_back({"gaussian_limit", exact_threshold_variance(rho, t)});
    r.headline_bound = exact_threshold_variance(rho, t);
    return r;
  }
  const std::vector<double> rho = sources::true_correlations(*blk.inner);
  if (rho.size() != 1) throw ConfigError("clt: inner model must be scalar");
  r.asymptotic_variance = asymptotic_scalar(rho[0], k);
  r.headline_bound = exact_threshold_variance(rho[0], t);
  r.bounds.push_back({"gaussian_limit", *r.headline_bound});
  if (blk.inner->get_if<sources::GaussianScalar>()) r.exact_variance = r.headline_bound;
  return r;
}

TheoryReport pareto(const sources::AdditiveNoise& law, double k) {
  if (law.x_law.kind() != sources::MarginalLaw::Kind::ParetoTwoSided)
    throw ConfigError("pareto_quantized: x law must be pareto");
  TheoryReport r;
  r.scheme = "pareto_quantized";
  r.k = k;
  const ParetoTheory th = pareto_theory(law.x_law.alpha(), law.rho, k);
  r.asymptotic_variance = th.mse_bound;
  r.headline_bound = th.finite_bound;
  r.bounds.push_back({"exponent", th.exponent});
  r.bounds.push_back({"mse_bound", th.mse_bound});
  r.bounds.push_back({"finite_bound", th.finite_bound});
  r.bounds.push_back({"unquantized_floor", th.unquantized_floor});
  return r;
}

TheoryReport linear(const sources::GaussianXVec& m, const Matrix& transform, double k1, double k2) {
  if (m.rho.size() != 2 || transform.rows() != 2 || transform.cols() != 2)
    throw ConfigError("linear_baseline: needs d=2 and a 2x2 transform");
  // Normalize rows so U and V have unit variance.
  Matrix n = transform;
  std::vector<double> alpha(2);
  for (std::size_t i = 0; i < 2; ++i) {
    const std::vector<double> row{transform(i, 0), transform(i, 1)};
    const double var = linalg::dot(row, linalg::multiply(m.sigma_x.matrix(), row));
    if (!(var > 0.0)) throw ConfigError("linear_baseline: transform row has zero variance");
    const double sc = 1.0 / std::sqrt(var);
    n(i, 0) *= sc;
    n(i, 1) *= sc;
    alpha[i] = n(i, 0) * m.rho[0] + n(i, 1) * m.rho[1];
  }
  // E Y X = Rho, so E Y (N X) = N Rho.
  TheoryReport r;
  r.scheme = "linear_baseline";
  r.k = k1 + k2;
  const double v1 = exact_threshold_variance(alpha[0], threshold_for_bits(k1));
  const double v2 = exact_threshold_variance(alpha[1], threshold_for_bits(k2));
  r.exact_variance = linear_baseline_trace(n, v1, v2);
  r.asymptotic_variance = linear_baseline_trace(n, asymptotic_scalar(alpha[0], k1), asymptotic_scalar(alpha[1], k2));
  r.headline_bound = r.exact_variance;
  r.bounds.push_back({"alpha1", alpha[0]});
  r.bounds.push_back({"alpha2", alpha[1]});
  return r;
}

}  // namespace

TheoryReport theory(const TheoryQuery& q) {
  const sources::JointModel& model = q.model;
  const std::string& s = q.scheme;
  if (s == "max" || s == "threshold") {
    if (const auto* g = model.get_if<sources::GaussianScalar>()) return scalar_gaussian(s, g->rho, q.k);
    if (const auto* a = model.get_if<sources::AdditiveNoise>(); a && s == "threshold") return additive(*a, q.k);
    throw ConfigError(s + ": unsupported model " + model.kind_name());
  }
  if (s == "yvec") {
    if (const auto* m = model.get_if<sources::GaussianYVec>()) return yvec(*m, q.k);
    throw ConfigError("yvec: needs a gaussian_yvec model");
  }
  if (s == "xvec" || s == "xvec_unquantized") {
    if (const auto* m = model.get_if<sources::GaussianXVec>()) return xvec(*m, q.k, q.b0, s == "xvec");
    throw ConfigError(s + ": needs a gaussian_xvec model");
  }
  if (s == "naive_scalar") return naive(model, q.k);
  if (s == "clt") {
    if (const auto* b = model.get_if<sources::BlockAveraged>()) return clt(*b, q.k);
    throw ConfigError("clt: needs a block_averaged model");
  }
  if (s == "pareto_quantized") {
    if (const auto* a = model.get_if<sources::AdditiveNoise>()) return pareto(*a, q.k);
    throw ConfigError("pareto_quantized: needs an additive_noise model");
  }
  if (s == "linear_baseline") {
    const auto* m = model.get_if<sources::GaussianXVec>();
    if (!m) throw ConfigError("linear_baseline: needs a gaussian_xvec model");
    const Matrix tr = q.transform ? *q.transform : Matrix::identity(2);
    const double k1 = q.k1 > 0.0 ? q.k1 : q.k / 2.0;
    const double k2 = q.k2 > 0.0 ? q.k2 : q.k - k1;
    return linear(*m, tr, k1, k2);
  }
  throw ConfigError("unknown scheme '" + s + "'");
}

std::string to_text(const TheoryReport& r) {
  std::ostringstream os;
  os << "scheme: " << r.scheme << "\n";
  os << "k: " << fmt(r.k) << "\n";
  os << "exact_variance: " << (r.exact_variance ? fmt(*r.exact_variance) : std::string("NA")) << "\n";
  os << "asymptotic_variance: " << fmt(r.asymptotic_variance) << "\n";
  os << "crlb_trace: " << (r.crlb_trace ? fmt(*r.crlb_trace) : std::string("NA")) << "\n";
  os << "headline_bound: " << (r.headline_bound ? fmt(*r.headline_bound) : std::string("NA")) << "\n";
  if (r.fisher.rows() > 0) {
    os << "fisher:\n";
    for (std::size_t i = 0; i < r.fisher.rows(); ++i) {
      os << " ";
      for (std::size_t j = 0; j < r.fisher.cols(); ++j) os << " " << fmt(r.fisher(i, j));
      os << "\n";
    }
  }
  for (const LabeledValue& b : r.bounds) os << b.label << ": " << fmt(b.value) << "\n";
  return os.str();
}

}  // namespace corrlink::analysis
