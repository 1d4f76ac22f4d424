#include "corrlink/statmath.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "corrlink/errors.hpp"

namespace corrlink::statmath {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Above this argument erfc is near the bottom of the double range, so the
// Mills ratio is taken from its asymptotic series instead.
constexpr double kSeriesCutoff = 37.0;

// Mills ratio R(t) = Q(t) / phi(t) by its asymptotic series; relative error
// below 1e-16 for t >= kSeriesCutoff.
double mills_ratio_series(double t) {
  const double u = 1.0 / (t * t);
  double term = 1.0;
  double sum = 1.0;
  for (int j = 1; j <= 7; ++j) {
    term *= -static_cast<double>(2 * j - 1) * u;
    sum += term;
  }
  return sum / t;
}

// Acklam's rational approximation of the standard normal quantile (relative
// error ~1e-9); used only as a starting point for Newton refinement.
double acklam_quantile(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
constexpr std::array<double, 8> kXgk{0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                     0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                     0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                     0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk{0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                     0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                     0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                     0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg{0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkResult {
  double value;
  double error;
};

GkResult gauss_kronrod(const std::function<double(double)>& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * sum;
    if (j % 2 == 1) gauss += kWg[j / 2] * sum;
  }
  return {kronrod * half, std::abs((kronrod - gauss) * half)};
}

double integrate_adaptive(const std::function<double(double)>& f, double lo, double hi,
                          double abs_tol, int depth) {
  const GkResult whole = gauss_kronrod(f, lo, hi);
  if (whole.error <= abs_tol || depth <= 0) return whole.value;
  const double mid = 0.5 * (lo + hi);
  return integrate_adaptive(f, lo, mid, 0.5 * abs_tol, depth - 1) +
         integrate_adaptive(f, mid, hi, 0.5 * abs_tol, depth - 1);
}

}  // namespace

double phi(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double Q(double x) {
  if (x > kSeriesCutoff) return phi(x) * mills_ratio_series(x);
  return 0.5 * std::erfc(x * kInvSqrt2);
}

double log_Q(double x) {
  if (x < 0.0) return std::log1p(-Q(-x));
  if (x > kSeriesCutoff) return -0.5 * x * x - kLogSqrt2Pi + std::log(mills_ratio_series(x));
  return std::log(Q(x));
}

double inverse_mills(double t) {
  if (t > kSeriesCutoff) return 1.0 / mills_ratio_series(t);
  return phi(t) / Q(t);
}

double Q_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("Q_inv: probability must lie in (0, 1), got " + std::to_string(p));
  }
  if (p > 0.5) return -Q_inv(1.0 - p);
  if (p == 0.5) return 0.0;

  // Bracketed Newton on g(x) = ln Q(x) - ln p, which is concave and
  // decreasing; a step leaving the bracket falls back to bisection.
  const double log_p = std::log(p);
  double lo = 0.0;
  double hi = 40.0;
  double x = std::clamp(-acklam_quantile(p), lo, hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = log_Q(x) - log_p;
    if (g > 0.0) {
      lo = x;
    } else if (g < 0.0) {
      hi = x;
    } else {
      return x;
    }
    double next = x + g / inverse_mills(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    x = next;
    if (step < 1e-12 || hi - lo < 1e-12) break;
  }
  return x;
}

ThresholdMoments truncated_normal_moments(double t) {
  ThresholdMoments m;
  m.t = t;
  m.mean = inverse_mills(t);
  m.second_moment = 1.0 + t * m.mean;
  m.variance = 1.0 - m.mean * (m.mean - t);
  return m;
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

double geometric_entropy(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("geometric_entropy: p must lie in (0, 1), got " + std::to_string(p));
  }
  // h(p)/p = -log2 p - ((1-p)/p) log2(1-p), the second term via log1p.
  return -std::log2(p) - (1.0 - p) * std::log1p(-p) / p * kLog2e;
}

double geometric_entropy_inv(double bits) {
  if (!(bits > 0.0) || !std::isfinite(bits)) {
    throw DomainError("geometric_entropy_inv: bits must be positive and finite, got " +
                      std::to_string(bits));
  }
  if (bits > 1000.0) {
    throw DomainError("geometric_entropy_inv: " + std::to_string(bits) +
                      " bits needs a crossing probability below double range");
  }
  // Solve in u = -log2 p. Since -log2 p <= h_g(p) <= -log2 p + log2 e, the
  // root lies in [bits - log2 e, bits].
  double lo = std::max(0.0, bits - kLog2e);
  double hi = bits;
  auto f = [bits](double u) {
    const double p = std::exp2(-u);
    if (p >= 1.0) return -bits;
    return geometric_entropy(p) - bits;
  };
  double u = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double fu = f(u);
    if (fu > 0.0) {
      hi = u;
    } else if (fu < 0.0) {
      lo = u;
    } else {
      break;
    }
    const double p = std::exp2(-u);
    const double slope = -std::log1p(-p) / p;  // d h_g / du
    double next = u - fu / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - u);
    u = next;
    if (step < 1e-13 || hi - lo < 1e-13) break;
  }
  return std::exp2(-u);
}

MaxMoments max_normal_moments(double n) {
  if (!(n >= 2.0) || !std::isfinite(n)) {
    throw ConfigError("max_normal_moments: need n >= 2 samples, got " + std::to_string(n));
  }
  // Density of the maximum: n phi(x) Phi(x)^(n-1), evaluated in log space.
  const double log_n = std::log(n);
  auto density = [n, log_n](double x) {
    const double log_f = log_n - 0.5 * x * x - kLogSqrt2Pi + (n - 1.0) * log_Q(-x);
    return std::exp(log_f);
  };
  const double center = Q_inv(1.0 / n);
  const double lo = center - 12.0;
  const double hi = center + 12.0;
  // Unit pieces share one absolute tolerance; a per-piece relative tolerance
  // would chase the negligible tails to full depth.
  auto piecewise = [&](const std::function<double(double)>& g) {
    double rough = 0.0;
    for (double a = lo; a < hi - 0.5; a += 1.0) rough += std::abs(gauss_kronrod(g, a, a + 1.0).value);
    // 1e-12 overall keeps every piece above the rounding floor of the rule.
    const double tol = std::max(1e-12 * rough / 24.0, std::numeric_limits<double>::min());
    double total = 0.0;
    for (double a = lo; a < hi - 0.5; a += 1.0) total += integrate_adaptive(g, a, a + 1.0, tol, 20);
    return total;
  };
  const double mass = piecewise(density);
  const double mean = piecewise([&](double x) { return x * density(x); }) / mass;
  const double variance =
      piecewise([&](double x) { return (x - mean) * (x - mean) * density(x); }) / mass;
  return {mean, variance + mean * mean, variance};
}

double integrate(const std::function<double(double)>& f, double lo, double hi, double rel_tol,
                 int max_depth) {
  const GkResult first = gauss_kronrod(f, lo, hi);
  const double abs_tol =
      std::max(rel_tol * std::abs(first.value), std::numeric_limits<double>::min());
  if (first.error <= abs_tol) return first.value;
  const double mid = 0.5 * (lo + hi);
  return integrate_adaptive(f, lo, mid, 0.5 * abs_tol, max_depth - 1) +
         integrate_adaptive(f, mid, hi, 0.5 * abs_tol, max_depth - 1);
}

}  // namespace corrlink::statmath
