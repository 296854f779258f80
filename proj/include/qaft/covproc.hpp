#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace qaft {

enum class EffectKind { Constant, PiecewiseLinear, NaturalCubicSpline };

std::string to_string(EffectKind kind);

// Shape of the flexible effect.
//
// PiecewiseLinear: knots 0 = tau_0 < tau_1 < ... < tau_J on the time axis, J coefficients.
// NaturalCubicSpline: boundary and internal knots on the log-time axis; one linear basis
// function plus one per internal knot, so J = knots.size() - 1 as well.
struct EffectSpec {
  EffectKind kind = EffectKind::Constant;
  std::vector<double> knots;
  int flexible_covariate = 0;  // index of X1 for time-invariant models

  int num_coefficients() const;
  void validate() const;
};

// Natural cubic spline basis in truncated-power form, linear outside the boundary knots.
class NaturalSplineBasis {
 public:
  NaturalSplineBasis() = default;
  explicit NaturalSplineBasis(std::span<const double> knots);

  int size() const { return static_cast<int>(internal_.size()) + 1; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  void evaluate(double x, std::span<double> basis, std::span<double> deriv) const;

 private:
  double lower_ = 0.0;
  double upper_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> internal_;
  std::vector<double> lambda_;
};

struct TransformGrad {
  double value = 0.0;
  double log_slope = 0.0;
  Eigen::VectorXd dvalue_dalpha;
  Eigen::VectorXd dlogslope_dalpha;
};

// The increasing time transform T(t; eta, x1, alpha) underlying every covariate process:
//   Constant:  t * exp(-eta)
//   Piecewise: exp(-eta) * [min(t, tau_1) + sum_j exp(-x1 alpha_j) (min(t, tau_{j+1}) - tau_j)_+]
//   Spline:    t * exp(-eta - x1 sum_j alpha_j B_j(log t))
// In every case dT/deta = -T and d log T'/deta = -1.
class EffectTransform {
 public:
  explicit EffectTransform(const EffectSpec& spec);

  const EffectSpec& spec() const { return spec_; }
  int num_coefficients() const { return spec_.num_coefficients(); }

  double value(double eta, double x1, std::span<const double> alpha, double t) const;
  // Right-hand derivative dT/dt.
  double slope(double eta, double x1, std::span<const double> alpha, double t) const;
  double inverse(double eta, double x1, std::span<const double> alpha, double s) const;
  void eval(double eta, double x1, std::span<const double> alpha, double t, TransformGrad& out) const;

  // True when the slope is positive at every grid time. Constant and piecewise transforms always pass.
  bool increasing_on(double x1, std::span<const double> alpha, std::span<const double> grid) const;

 private:
  double spline_log_factor(double x1, std::span<const double> alpha, double y, double* dfactor) const;
  int segment(double t) const;

  EffectSpec spec_;
  NaturalSplineBasis basis_;
};

struct ProcessGrad {
  double value = 0.0;
  double log_slope = 0.0;
  double dvalue_deta = 0.0;
  double dlogslope_deta = 0.0;
  double dvalue_dbtv = 0.0;
  double dlogslope_dbtv = 0.0;
  Eigen::VectorXd dvalue_dalpha;
  Eigen::VectorXd dlogslope_dalpha;
};

// Covariate process V(t | x) for one subject.
//
// Time-invariant: V(t) = T(t; x'beta, x1, alpha).
// Binary time-varying covariate switching on at `onset`:
//   V(t) = exp(-eta) [min(t, onset) + T(t - onset; beta_tv, 1, alpha)]   (second term only for t > onset)
// with the flexible effect acting on time since onset.
class SubjectProcess {
 public:
  SubjectProcess(const EffectTransform& transform, double eta, double x1, std::span<const double> alpha);
  static SubjectProcess time_varying(const EffectTransform& transform, double eta, double beta_tv,
                                     std::span<const double> alpha, double onset);

  double value(double t) const;
  double slope(double t) const;
  double inverse(double s) const;
  void eval(double t, ProcessGrad& out) const;

 private:
  SubjectProcess() = default;

  const EffectTransform* transform_ = nullptr;
  double eta_ = 0.0;
  double x1_ = 0.0;
  std::span<const double> alpha_;
  bool time_varying_ = false;
  double beta_tv_ = 0.0;
  double onset_ = std::numeric_limits<double>::infinity();
  mutable TransformGrad scratch_;
};

// Free-function surface over a covariate vector x, with X1 = x[spec.flexible_covariate].
double v_value(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
               std::span<const double> x, double t);
double v_deriv(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
               std::span<const double> x, double t);
double v_inverse(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
                 std::span<const double> x, double s);

// Binary time-varying covariate: `beta2_term` is x2'beta2 for the time-invariant covariates and
// `effect` describes the flexible effect on the time-since-onset axis (Constant for none).
double tv_v_value(double beta1, double beta2_term, std::span<const double> alpha, double onset,
                  const EffectSpec& effect, double t);
double tv_v_inverse(double beta1, double beta2_term, std::span<const double> alpha, double onset,
                    const EffectSpec& effect, double s);

// True iff v(t | x) > 0 at every grid time for every covariate pattern.
bool monotonicity_check(const EffectSpec& spec, std::span<const double> beta, std::span<const double> alpha,
                        std::span<const std::vector<double>> patterns, std::span<const double> grid);

// 200-point log-spaced grid over [lo, hi].
std::vector<double> log_spaced_grid(double lo, double hi, int points = 200);

}  // namespace qaft
