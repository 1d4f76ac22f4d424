#pragma once

// Scalar special functions for the standard normal and geometric laws.
// All functions are pure and thread-safe.

#include <functional>

namespace corrlink::statmath {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kLog2e = 1.44269504088896340736;

/// Standard normal density.
double phi(double x);

/// Upper tail probability Q(x) = Pr(Z > x).
double Q(double x);

/// ln Q(x), accurate far into the upper tail where Q itself underflows.
double log_Q(double x);

/// Inverse of Q on (0, 1). Throws DomainError outside the open interval.
double Q_inv(double p);

/// Inverse Mills ratio s(t) = phi(t) / Q(t) = E(Z | Z > t).
double inverse_mills(double t);

/// Moments of a standard normal conditioned on exceeding t.
struct ThresholdMoments {
  double t = 0.0;
  double mean = 0.0;           // E(Z | Z > t) = s(t)
  double second_moment = 0.0;  // E(Z^2 | Z > t) = 1 + t s(t)
  double variance = 0.0;
};

ThresholdMoments truncated_normal_moments(double t);

/// Binary entropy in bits.
double binary_entropy(double p);

/// Entropy in bits of a geometric law on {1, 2, ...} with success
/// probability p: h_g(p) = h(p) / p. Strictly decreasing on (0, 1).
double geometric_entropy(double p);

/// Solves h_g(p) = bits for p. Throws DomainError for bits <= 0.
double geometric_entropy_inv(double bits);

/// Moments of the maximum of n i.i.d. standard normals, from the exact
/// order-statistic integrals. n need not be an integer power of two but must
/// be >= 2 (throws ConfigError otherwise).
struct MaxMoments {
  double mean = 0.0;
  double second_moment = 0.0;
  double variance = 0.0;
};

MaxMoments max_normal_moments(double n);

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double rel_tol = 1e-13, int max_depth = 40);

}  // namespace corrlink::statmath
