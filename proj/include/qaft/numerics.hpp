#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace qaft::numerics {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Log-probabilities below this are treated as zero probability.
inline constexpr double kLogFloor = -745.0;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

// Upper tail 1 - Phi(x).
double normal_sf(double x);
double normal_cdf(double x);

// log(1 - Phi(x)) without underflow for large x.
double log_normal_sf(double x);
inline double log_normal_cdf(double x) { return log_normal_sf(-x); }

// phi(x) / (1 - Phi(x)), the standard normal hazard.
double normal_hazard(double x);

// Inverse of normal_sf: returns x with 1 - Phi(x) = p.
double normal_isf(double p);

// Regularized incomplete beta function I_x(a, b), evaluated by the modified Lentz
// continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

double log_binomial(int n, int k);

double log_sum_exp(std::span<const double> values);
double log_sum_exp(double a, double b);

// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b);

double digamma(double x);

// Bracketed root of an increasing function. `fn` returns (value, derivative); the root of
// `value` is located inside [lo, hi] using Newton steps safeguarded by bisection.
// Requires value(lo) <= 0 <= value(hi). Stops when the bracket width is below
// `abs_tol + rel_tol * |x|`.
double solve_increasing(const std::function<std::pair<double, double>(double)>& fn, double lo,
                        double hi, double abs_tol, double rel_tol, int max_iter = 200);

// Plain bisection on an increasing function with the same bracket contract.
double bisect_increasing(const std::function<double(double)>& fn, double lo, double hi,
                         double abs_tol, double rel_tol, int max_iter = 400);

// Sample quantile with linear interpolation between order statistics (R type 7).
// `sorted` must be sorted ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);

double mean(std::span<const double> values);
double variance(std::span<const double> values);  // unbiased

}  // namespace qaft::numerics
