#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>
#include <string>

#include "qaft/span.hpp"

namespace qaft {

enum class BaselineFamily { Weibull, LogNormal, Tbp };
enum class Centering { Weibull, LogNormal };

std::string to_string(BaselineFamily family);
std::string to_string(Centering centering);

struct BaselineSpec {
  BaselineFamily family = BaselineFamily::Weibull;
  Centering centering = Centering::Weibull;  // TBP only
  int K = 0;                                 // TBP only

  bool is_tbp() const { return family == BaselineFamily::Tbp; }
  void validate() const;
};

// Location mu on the log-time scale and shape/scale sigma.
struct BaselineParams {
  double mu = 0.0;
  double sigma = 1.0;
};

struct TbpWeights {
  Eigen::VectorXd w;
  double theta = 1.0;
};

// Log-scale value and first-order partials of the baseline survivor and density at one point u.
struct BaselinePartials {
  double log_sf = 0.0;
  double log_pdf = 0.0;
  double dlogsf_du = 0.0;
  double dlogsf_dmu = 0.0;
  double dlogsf_dsigma = 0.0;
  double dlogpdf_du = 0.0;
  double dlogpdf_dmu = 0.0;
  double dlogpdf_dsigma = 0.0;
  Eigen::VectorXd dlogsf_dw;   // TBP only
  Eigen::VectorXd dlogpdf_dw;  // TBP only
};

// A fully parameterized baseline distribution S0. Immutable after construction.
//
// TBP baselines mix regularized incomplete Beta CDFs of the centering survivor s = S0*(t):
//   S0(t) = sum_k w_k * I(s; K - k + 1, k),
// which reproduces S0* when all weights equal 1/K and is decreasing in t.
class Baseline {
 public:
  Baseline(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights = {});

  const BaselineSpec& spec() const { return spec_; }
  const BaselineParams& params() const { return params_; }
  std::span<const double> weights() const { return as_span(weights_); }

  double survivor(double t) const;
  double density(double t) const;
  double log_survivor(double t) const;
  double log_density(double t) const;
  double inverse_survivor(double p) const;

  // Fills value and partials at u >= 0. Requires u > 0 for the density terms.
  void partials(double u, BaselinePartials& out) const;

 private:
  struct Centered {
    double log_sf, log_cdf, log_pdf;
    double dlogsf_du, dlogsf_dmu, dlogsf_dsigma;
    double dlogpdf_du, dlogpdf_dmu, dlogpdf_dsigma;
  };
  Centered centered(double u, bool with_partials) const;
  double centered_inverse(double p) const;

  // Bernstein sums of the TBP mixture at s = S0*(u); `s1` is 1 - s.
  // ps[i] = s^i and ps1[i] = (1 - s)^i for i = 0..K.
  void tbp_powers(double s, double s1, std::vector<double>& ps, std::vector<double>& ps1) const;
  double tbp_h(const std::vector<double>& ps, const std::vector<double>& ps1) const;   // S0 / s
  double tbp_g(const std::vector<double>& ps, const std::vector<double>& ps1) const;   // dS0 / ds
  double tbp_dg(const std::vector<double>& ps, const std::vector<double>& ps1) const;  // d^2 S0 / ds^2
  double tbp_survivor_cf(double s) const;         // continued-fraction route

  BaselineSpec spec_;
  BaselineParams params_;
  Centering parametric_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd tail_sums_;                     // W_j = sum_{k >= K-j+1} w_k, j = 1..K
  Eigen::MatrixXd binom_;                         // C(n, j) for n <= K
};

// Free-function surface. `weights` must be non-empty exactly when the family is TBP.
double survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t);
double density(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t);
double log_survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t);
double log_density(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t);
double inverse_survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double p);

}  // namespace qaft
