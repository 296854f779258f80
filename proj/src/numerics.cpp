#include "qaft/numerics.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "qaft/errors.hpp"

namespace qaft::numerics {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kTailSwitch = 30.0;

// Mills ratio (1 - Phi(x)) / phi(x) by the Laplace continued fraction, accurate for x >= 30.
double mills_ratio_tail(double x) {
  double acc = x;
  for (int k = 80; k >= 1; --k) acc = x + k / acc;
  return 1.0 / acc;
}

double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double log_normal_sf(double x) {
  if (x < kTailSwitch) return std::log(normal_sf(x));
  return -0.5 * x * x - kLogSqrt2Pi + std::log(mills_ratio_tail(x));
}

double normal_hazard(double x) {
  if (x < kTailSwitch) return normal_pdf(x) / normal_sf(x);
  return 1.0 / mills_ratio_tail(x);
}

double normal_isf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_isf: p must lie in (0, 1)");
  return kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -kInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double log_diff_exp(double a, double b) {
  if (b == -kInf) return a;
  if (b > a) return kNaN;
  if (b == a) return -kInf;
  const double d = b - a;
  // log1p(-exp(d)) loses accuracy for d near 0; log(-expm1(d)) is exact there.
  return a + (d > -0.693147180559945 ? std::log(-std::expm1(d)) : std::log1p(-std::exp(d)));
}

double digamma(double x) { return boost::math::digamma(x); }

double solve_increasing(const std::function<std::pair<double, double>(double)>& fn, double lo,
                        double hi, double abs_tol, double rel_tol, int max_iter) {
  if (!(lo <= hi)) throw NumericalError("solve_increasing: invalid bracket");
  auto [f_lo, d_lo] = fn(lo);
  auto [f_hi, d_hi] = fn(hi);
  if (f_lo > 0.0 || f_hi < 0.0) throw NumericalError("solve_increasing: root not bracketed");
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    auto [f, df] = fn(x);
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= abs_tol + rel_tol * std::fabs(x)) return 0.5 * (lo + hi);
    double next = (df > 0.0 && std::isfinite(df)) ? x - f / df : kNaN;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::fabs(next - x);
    x = next;
    if (step <= abs_tol + rel_tol * std::fabs(x)) return x;
  }
  throw NumericalError("solve_increasing: iteration limit reached");
}

double bisect_increasing(const std::function<double(double)>& fn, double lo, double hi,
                         double abs_tol, double rel_tol, int max_iter) {
  if (!(lo <= hi)) throw NumericalError("bisect_increasing: invalid bracket");
  if (fn(lo) > 0.0 || fn(hi) < 0.0) throw NumericalError("bisect_increasing: root not bracketed");
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= abs_tol + rel_tol * std::fabs(mid)) return mid;
    if (fn(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (mid == lo && mid == hi) return mid;
  }
  return 0.5 * (lo + hi);
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw DomainError("quantile of empty sample");
  const double h = (sorted.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

double mean(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / values.size();
}

double variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return acc / (values.size() - 1);
}

}  // namespace qaft::numerics
