#include "qaft/covproc.hpp"

#include <algorithm>
#include <cmath>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"

namespace qaft {

using numerics::kInf;

std::string to_string(EffectKind kind) {
  switch (kind) {
    case EffectKind::Constant: return "constant";
    case EffectKind::PiecewiseLinear: return "piecewise";
    case EffectKind::NaturalCubicSpline: return "spline";
  }
  return "unknown";
}

int EffectSpec::num_coefficients() const {
  if (kind == EffectKind::Constant) return 0;
  return std::max(0, static_cast<int>(knots.size()) - 1);
}

void EffectSpec::validate() const {
  if (flexible_covariate < 0) throw ValidationError("effect: flexible covariate index must be non-negative");
  if (kind == EffectKind::Constant) {
    if (!knots.empty()) throw ValidationError("effect: constant effects take no knots");
    return;
  }
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1])) throw ValidationError("effect: knots must be strictly increasing");
  for (double k : knots)
    if (!std::isfinite(k)) throw ValidationError("effect: knots must be finite");
  if (kind == EffectKind::PiecewiseLinear) {
    if (knots.empty() || knots.front() != 0.0) throw ValidationError("effect: piecewise knots must start at 0");
  } else if (knots.size() < 2) {
    throw ValidationError("effect: spline needs at least the two boundary knots");
  }
}

NaturalSplineBasis::NaturalSplineBasis(std::span<const double> knots) {
  if (knots.size() < 2) throw ValidationError("spline basis: need two boundary knots");
  lower_ = knots.front();
  upper_ = knots.back();
  const double range = upper_ - lower_;
  scale_ = 1.0 / (range * range);
  for (std::size_t j = 1; j + 1 < knots.size(); ++j) {
    internal_.push_back(knots[j]);
    lambda_.push_back((upper_ - knots[j]) / range);
  }
}

void NaturalSplineBasis::evaluate(double x, std::span<double> basis, std::span<double> deriv) const {
  basis[0] = x;
  deriv[0] = 1.0;
  const double a = std::max(0.0, x - lower_);
  const double c = std::max(0.0, x - upper_);
  for (std::size_t j = 0; j < internal_.size(); ++j) {
    const double b = std::max(0.0, x - internal_[j]);
    const double lam = lambda_[j];
    basis[j + 1] = scale_ * (b * b * b - lam * a * a * a - (1.0 - lam) * c * c * c);
    deriv[j + 1] = 3.0 * scale_ * (b * b - lam * a * a - (1.0 - lam) * c * c);
  }
}

EffectTransform::EffectTransform(const EffectSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.kind == EffectKind::NaturalCubicSpline) basis_ = NaturalSplineBasis(spec_.knots);
}

int EffectTransform::segment(double t) const {
  const auto& k = spec_.knots;
  return static_cast<int>(std::upper_bound(k.begin() + 1, k.end(), t) - (k.begin() + 1));
}

// x1 * sum_j alpha_j B_j(y); `dfactor` receives d log T / d log t = 1 - x1 * sum_j alpha_j B'_j(y).
double EffectTransform::spline_log_factor(double x1, std::span<const double> alpha, double y,
                                          double* dfactor) const {
  const int J = basis_.size();
  double basis[64];
  double deriv[64];
  if (J > 64) throw ValidationError("spline: too many basis functions");
  basis_.evaluate(y, {basis, static_cast<std::size_t>(J)}, {deriv, static_cast<std::size_t>(J)});
  double sum = 0.0;
  double dsum = 0.0;
  for (int j = 0; j < J; ++j) {
    sum += alpha[j] * basis[j];
    dsum += alpha[j] * deriv[j];
  }
  if (dfactor) *dfactor = 1.0 - x1 * dsum;
  return x1 * sum;
}

double EffectTransform::value(double eta, double x1, std::span<const double> alpha, double t) const {
  if (!(t >= 0.0)) throw DomainError("covariate process: t must be non-negative");
  if (t == kInf) return kInf;
  switch (spec_.kind) {
    case EffectKind::Constant: return t * std::exp(-eta);
    case EffectKind::PiecewiseLinear: {
      const auto& k = spec_.knots;
      const int J = num_coefficients();
      double acc = J == 0 ? t : std::min(t, k[1]);
      for (int j = 1; j <= J; ++j) {
        const double upper = j < J ? std::min(t, k[j + 1]) : t;
        const double width = upper - k[j];
        if (width <= 0.0) break;
        acc += std::exp(-x1 * alpha[j - 1]) * width;
      }
      return std::exp(-eta) * acc;
    }
    case EffectKind::NaturalCubicSpline: {
      if (t == 0.0) return 0.0;
      const double y = std::log(t);
      return std::exp(y - eta - spline_log_factor(x1, alpha, y, nullptr));
    }
  }
  return numerics::kNaN;
}

double EffectTransform::slope(double eta, double x1, std::span<const double> alpha, double t) const {
  if (!(t > 0.0)) throw DomainError("covariate process derivative: t must be positive");
  switch (spec_.kind) {
    case EffectKind::Constant: return std::exp(-eta);
    case EffectKind::PiecewiseLinear: {
      const int seg = segment(t);
      return std::exp(-eta - (seg > 0 ? x1 * alpha[seg - 1] : 0.0));
    }
    case EffectKind::NaturalCubicSpline: {
      const double y = std::log(t);
      double factor = 0.0;
      const double log_value = y - eta - spline_log_factor(x1, alpha, y, &factor);
      return std::exp(log_value - y) * factor;
    }
  }
  return numerics::kNaN;
}

double EffectTransform::inverse(double eta, double x1, std::span<const double> alpha, double s) const {
  if (!(s >= 0.0)) throw DomainError("covariate process inverse: s must be non-negative");
  if (s == 0.0) return 0.0;
  if (s == kInf) return kInf;
  switch (spec_.kind) {
    case EffectKind::Constant: return s * std::exp(eta);
    case EffectKind::PiecewiseLinear: {
      // Transformed knots tau*_j = V(tau_j); each segment of the inverse has the reciprocal slope.
      const auto& k = spec_.knots;
      const int J = num_coefficients();
      double start = 0.0;     // tau*_j
      double slope0 = std::exp(-eta);
      if (J == 0) return s / slope0;
      double end = k[1] * slope0;
      if (s <= end) return s / slope0;
      for (int j = 1; j <= J; ++j) {
        start = end;
        const double seg_slope = std::exp(-eta - x1 * alpha[j - 1]);
        if (j == J) return k[j] + (s - start) / seg_slope;
        end = start + seg_slope * (k[j + 1] - k[j]);
        if (s <= end) return k[j] + (s - start) / seg_slope;
      }
      return numerics::kNaN;
    }
    case EffectKind::NaturalCubicSpline: {
      // log T(e^y) is linear in y outside the boundary knots.
      const double target = std::log(s);
      const double lo = basis_.lower();
      const double hi = basis_.upper();
      double slope_lo = 0.0;
      double slope_hi = 0.0;
      const double at_lo = lo - eta - spline_log_factor(x1, alpha, lo, &slope_lo);
      const double at_hi = hi - eta - spline_log_factor(x1, alpha, hi, &slope_hi);
      if (!(slope_lo > 0.0 && slope_hi > 0.0)) throw ValidationError("covariate process is not increasing");
      if (target <= at_lo) return std::exp(lo + (target - at_lo) / slope_lo);
      if (target >= at_hi) return std::exp(hi + (target - at_hi) / slope_hi);
      if (!(at_hi > at_lo)) throw ValidationError("covariate process is not increasing");
      auto fn = [&](double y) -> std::pair<double, double> {
        double d = 0.0;
        const double v = y - eta - spline_log_factor(x1, alpha, y, &d);
        return {v - target, d};
      };
      return std::exp(numerics::solve_increasing(fn, lo, hi, 1e-14, 0.0));
    }
  }
  return numerics::kNaN;
}

void EffectTransform::eval(double eta, double x1, std::span<const double> alpha, double t, TransformGrad& out) const {
  const int J = num_coefficients();
  if (out.dvalue_dalpha.size() != J) {
    out.dvalue_dalpha.resize(J);
    out.dlogslope_dalpha.resize(J);
  }
  out.dvalue_dalpha.setZero();
  out.dlogslope_dalpha.setZero();
  if (t == 0.0) {
    out.value = 0.0;
    out.log_slope = spec_.kind == EffectKind::NaturalCubicSpline ? numerics::kNaN : -eta;
    return;
  }
  switch (spec_.kind) {
    case EffectKind::Constant:
      out.value = t * std::exp(-eta);
      out.log_slope = -eta;
      return;
    case EffectKind::PiecewiseLinear: {
      const auto& k = spec_.knots;
      const double scale = std::exp(-eta);
      double acc = J == 0 ? t : std::min(t, k[1]);
      for (int j = 1; j <= J; ++j) {
        const double upper = j < J ? std::min(t, k[j + 1]) : t;
        const double width = upper - k[j];
        if (width <= 0.0) break;
        const double piece = std::exp(-x1 * alpha[j - 1]) * width;
        acc += piece;
        out.dvalue_dalpha(j - 1) = -x1 * scale * piece;
      }
      out.value = scale * acc;
      const int seg = segment(t);
      out.log_slope = -eta - (seg > 0 ? x1 * alpha[seg - 1] : 0.0);
      if (seg > 0) out.dlogslope_dalpha(seg - 1) = -x1;
      return;
    }
    case EffectKind::NaturalCubicSpline: {
      const double y = std::log(t);
      double basis[64];
      double deriv[64];
      basis_.evaluate(y, {basis, static_cast<std::size_t>(J)}, {deriv, static_cast<std::size_t>(J)});
      double sum = 0.0;
      double dsum = 0.0;
      for (int j = 0; j < J; ++j) {
        sum += alpha[j] * basis[j];
        dsum += alpha[j] * deriv[j];
      }
      const double factor = 1.0 - x1 * dsum;
      const double log_value = y - eta - x1 * sum;
      out.value = std::exp(log_value);
      out.log_slope = factor > 0.0 ? log_value - y + std::log(factor) : numerics::kNaN;
      for (int j = 0; j < J; ++j) {
        out.dvalue_dalpha(j) = -x1 * basis[j] * out.value;
        out.dlogslope_dalpha(j) = -x1 * basis[j] - x1 * deriv[j] / factor;
      }
      return;
    }
  }
}

bool EffectTransform::increasing_on(double x1, std::span<const double> alpha, std::span<const double> grid) const {
  if (spec_.kind != EffectKind::NaturalCubicSpline) {
    for (int j = 0; j < num_coefficients(); ++j)
      if (!std::isfinite(alpha[j])) return false;
    return true;
  }
  for (double t : grid) {
    double factor = 0.0;
    spline_log_factor(x1, alpha, std::log(t), &factor);
    if (!(factor > 0.0)) return false;
  }
  return true;
}

SubjectProcess::SubjectProcess(const EffectTransform& transform, double eta, double x1, std::span<const double> alpha)
    : transform_(&transform), eta_(eta), x1_(x1), alpha_(alpha) {}

SubjectProcess SubjectProcess::time_varying(const EffectTransform& transform, double eta, double beta_tv,
                                            std::span<const double> alpha, double onset) {
  if (!(onset > 0.0)) throw DomainError("time-varying covariate: onset time must be positive");
  SubjectProcess p;
  p.transform_ = &transform;
  p.eta_ = eta;
  p.x1_ = 1.0;
  p.alpha_ = alpha;
  p.time_varying_ = true;
  p.beta_tv_ = beta_tv;
  p.onset_ = onset;
  return p;
}

double SubjectProcess::value(double t) const {
  if (!time_varying_) return transform_->value(eta_, x1_, alpha_, t);
  if (!(t >= 0.0)) throw DomainError("covariate process: t must be non-negative");
  if (t <= onset_) return t * std::exp(-eta_);
  return std::exp(-eta_) * (onset_ + transform_->value(beta_tv_, 1.0, alpha_, t - onset_));
}

double SubjectProcess::slope(double t) const {
  if (!time_varying_) return transform_->slope(eta_, x1_, alpha_, t);
  if (!(t > 0.0)) throw DomainError("covariate process derivative: t must be positive");
  if (t <= onset_) return std::exp(-eta_);
  return std::exp(-eta_) * transform_->slope(beta_tv_, 1.0, alpha_, t - onset_);
}

double SubjectProcess::inverse(double s) const {
  if (!time_varying_) return transform_->inverse(eta_, x1_, alpha_, s);
  if (!(s >= 0.0)) throw DomainError("covariate process inverse: s must be non-negative");
  const double scaled = s * std::exp(eta_);
  if (scaled <= onset_) return scaled;
  return onset_ + transform_->inverse(beta_tv_, 1.0, alpha_, scaled - onset_);
}

void SubjectProcess::eval(double t, ProcessGrad& out) const {
  const int J = transform_->num_coefficients();
  if (out.dvalue_dalpha.size() != J) {
    out.dvalue_dalpha.resize(J);
    out.dlogslope_dalpha.resize(J);
  }
  if (!time_varying_) {
    transform_->eval(eta_, x1_, alpha_, t, scratch_);
    out.value = scratch_.value;
    out.log_slope = scratch_.log_slope;
    out.dvalue_deta = -scratch_.value;
    out.dlogslope_deta = -1.0;
    out.dvalue_dbtv = 0.0;
    out.dlogslope_dbtv = 0.0;
    out.dvalue_dalpha = scratch_.dvalue_dalpha;
    out.dlogslope_dalpha = scratch_.dlogslope_dalpha;
    return;
  }
  const double scale = std::exp(-eta_);
  out.dlogslope_deta = -1.0;
  if (t <= onset_) {
    out.value = t * scale;
    out.log_slope = -eta_;
    out.dvalue_deta = -out.value;
    out.dvalue_dbtv = 0.0;
    out.dlogslope_dbtv = 0.0;
    out.dvalue_dalpha.setZero();
    out.dlogslope_dalpha.setZero();
    return;
  }
  transform_->eval(beta_tv_, 1.0, alpha_, t - onset_, scratch_);
  out.value = scale * (onset_ + scratch_.value);
  out.log_slope = -eta_ + scratch_.log_slope;
  out.dvalue_deta = -out.value;
  out.dvalue_dbtv = -scale * scratch_.value;
  out.dlogslope_dbtv = -1.0;
  out.dvalue_dalpha = scale * scratch_.dvalue_dalpha;
  out.dlogslope_dalpha = scratch_.dlogslope_dalpha;
}

namespace {

double linear_predictor(std::span<const double> beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw DomainError("covariate process: beta and x differ in length");
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += beta[j] * x[j];
  return eta;
}

double flexible_value(const EffectSpec& spec, std::span<const double> x) {
  if (spec.kind == EffectKind::Constant) return 0.0;
  if (spec.flexible_covariate >= static_cast<int>(x.size()))
    throw DomainError("covariate process: flexible covariate index out of range");
  return x[spec.flexible_covariate];
}

void check_alpha(const EffectSpec& spec, std::span<const double> alpha) {
  if (static_cast<int>(alpha.size()) != spec.num_coefficients())
    throw DomainError("covariate process: alpha length does not match the effect specification");
}

}  // namespace

double v_value(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
               std::span<const double> x, double t) {
  check_alpha(spec, alpha);
  return EffectTransform(spec).value(linear_predictor(beta, x), flexible_value(spec, x), alpha, t);
}

double v_deriv(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
               std::span<const double> x, double t) {
  check_alpha(spec, alpha);
  return EffectTransform(spec).slope(linear_predictor(beta, x), flexible_value(spec, x), alpha, t);
}

double v_inverse(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
                 std::span<const double> x, double s) {
  check_alpha(spec, alpha);
  return EffectTransform(spec).inverse(linear_predictor(beta, x), flexible_value(spec, x), alpha, s);
}

double tv_v_value(double beta1, double beta2_term, std::span<const double> alpha, double onset,
                  const EffectSpec& effect, double t) {
  check_alpha(effect, alpha);
  const EffectTransform transform(effect);
  return SubjectProcess::time_varying(transform, beta2_term, beta1, alpha, onset).value(t);
}

double tv_v_inverse(double beta1, double beta2_term, std::span<const double> alpha, double onset,
                    const EffectSpec& effect, double s) {
  check_alpha(effect, alpha);
  const EffectTransform transform(effect);
  return SubjectProcess::time_varying(transform, beta2_term, beta1, alpha, onset).inverse(s);
}

bool monotonicity_check(const EffectSpec& spec, std::span<const double> /*beta*/, std::span<const double> alpha,
                        std::span<const std::vector<double>> patterns, std::span<const double> grid) {
  check_alpha(spec, alpha);
  const EffectTransform transform(spec);
  for (const auto& x : patterns)
    if (!transform.increasing_on(flexible_value(spec, x), alpha, grid)) return false;
  return true;
}

std::vector<double> log_spaced_grid(double lo, double hi, int points) {
  if (!(lo > 0.0 && hi > lo) || points < 2) throw DomainError("log_spaced_grid: need 0 < lo < hi and >= 2 points");
  std::vector<double> grid(points);
  const double a = std::log(lo);
  const double step = (std::log(hi) - a) / (points - 1);
  for (int i = 0; i < points; ++i) grid[i] = std::exp(a + step * i);
  grid.back() = hi;
  return grid;
}

}  // namespace qaft
