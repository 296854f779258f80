#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "qaft/baseline.hpp"
#include "qaft/covproc.hpp"

namespace qaft {

// Shape-rate Gamma hyperparameters for sigma and (TBP only) the Dirichlet concentration theta.
struct PriorSpec {
  double a_sigma = 1.0;
  double b_sigma = 1.0;
  double a_theta = 1.0;
  double b_theta = 1.0;

  void validate() const;
};

// Model structure. For time-invariant models the flexible effect acts on
// covariates[effect.flexible_covariate]. For time-varying models a binary covariate
// switches on at each subject's onset time; its coefficient is the last entry of beta and
// the flexible effect (if any) acts on time since onset.
struct ModelSpec {
  BaselineSpec baseline;
  EffectSpec effect;
  bool time_varying = false;
  std::vector<std::string> covariates;

  int num_covariates() const { return static_cast<int>(covariates.size()); }
  int num_beta() const { return num_covariates() + (time_varying ? 1 : 0); }
  int num_alpha() const { return effect.num_coefficients(); }
  void validate() const;
};

struct ParameterVector {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  double mu = 0.0;
  double sigma = 1.0;
  Eigen::VectorXd w;   // TBP only
  double theta = 1.0;  // TBP only

  BaselineParams baseline() const { return {mu, sigma}; }
  void validate(const ModelSpec& model) const;
};

// Stick-breaking map from R^{K-1} to the K-simplex with logistic offsets log(K - k).
Eigen::VectorXd simplex_constrain(std::span<const double> y, double* log_jacobian = nullptr);
Eigen::VectorXd simplex_unconstrain(std::span<const double> w);
// Gradient with respect to y of f(w(y)) + log|J(y)|, given dw = df/dw.
Eigen::VectorXd simplex_backprop(std::span<const double> y, std::span<const double> dw);

// Position of every block in the unconstrained vector z = (beta, alpha, mu, log sigma,
// stick-breaking(w), log theta) and in the constrained flat vector
// (beta, alpha, mu, sigma, w, theta).
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelSpec& model);

  int num_beta() const { return num_beta_; }
  int num_alpha() const { return num_alpha_; }
  int num_weights() const { return K_; }
  bool tbp() const { return tbp_; }

  int dim() const { return log_theta_ + (tbp_ ? 1 : 0); }
  int flat_dim() const { return num_beta_ + num_alpha_ + 2 + (tbp_ ? K_ + 1 : 0); }

  int beta_offset() const { return 0; }
  int alpha_offset() const { return num_beta_; }
  int mu_offset() const { return num_beta_ + num_alpha_; }
  int log_sigma_offset() const { return mu_offset() + 1; }
  int simplex_offset() const { return mu_offset() + 2; }
  int log_theta_offset() const { return log_theta_; }

  std::vector<std::string> names() const;
  std::vector<std::string> unconstrained_names() const;

  ParameterVector constrain(std::span<const double> z, double* log_jacobian = nullptr) const;
  Eigen::VectorXd unconstrain(const ParameterVector& psi) const;
  Eigen::VectorXd flatten(const ParameterVector& psi) const;
  ParameterVector unflatten(std::span<const double> flat) const;

 private:
  int num_beta_;
  int num_alpha_;
  int K_;
  bool tbp_;
  int log_theta_;
  std::vector<std::string> beta_names_;
};

}  // namespace qaft
