#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <vector>

#include "qaft/model.hpp"

namespace qaft {

// One observation: the event lies in [y_lower, y_upper] (equal for an exact event,
// y_upper = inf for right censoring), observed only because it had not occurred by
// `truncation`. `onset` is the switch time of the binary time-varying covariate (inf = never).
struct SubjectRecord {
  double y_lower = 0.0;
  double y_upper = 0.0;
  bool event = false;
  double truncation = 0.0;
  std::vector<double> x;
  double onset = std::numeric_limits<double>::infinity();

  bool right_censored() const { return y_upper == std::numeric_limits<double>::infinity(); }
  // Largest finite observed time of the record.
  double follow_up() const { return right_censored() ? y_lower : y_upper; }
  void validate(const ModelSpec& model) const;
};

void validate_dataset(const ModelSpec& model, std::span<const SubjectRecord> data);

// Covariate process of one subject; `psi` must outlive the result. `onset` is ignored for
// time-invariant models.
SubjectProcess subject_process(const ModelSpec& model, const EffectTransform& transform, const ParameterVector& psi,
                               std::span<const double> x, double onset);
// Baseline with the parameters (and TBP weights) of `psi`; `psi` must outlive the result.
Baseline baseline_for(const ModelSpec& model, const ParameterVector& psi);

double loglik_subject(const ModelSpec& model, const ParameterVector& psi, const SubjectRecord& rec);
double loglik_total(const ModelSpec& model, const ParameterVector& psi, std::span<const SubjectRecord> data);
double log_prior(const ModelSpec& model, const ParameterVector& psi, const PriorSpec& priors);

// Gradient of a scalar with respect to the constrained parameters.
struct ConstrainedGradient {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  double mu = 0.0;
  double sigma = 0.0;
  Eigen::VectorXd w;
  double theta = 0.0;
};

// Log posterior over the unconstrained vector z of a ParameterLayout, including the
// log-Jacobian of the constraining transform. Draws whose covariate process is not
// increasing on the monotonicity grid get log density -inf.
class Posterior {
 public:
  Posterior(ModelSpec model, std::vector<SubjectRecord> data, PriorSpec priors);

  const ModelSpec& model() const { return model_; }
  const ParameterLayout& layout() const { return layout_; }
  const std::vector<SubjectRecord>& data() const { return data_; }
  const PriorSpec& priors() const { return priors_; }
  int dim() const { return layout_.dim(); }
  const std::vector<double>& monotonicity_grid() const { return grid_; }

  double log_density(std::span<const double> z) const;
  // Returns the log density and writes its gradient; the gradient is zero when the density is -inf.
  double log_density_gradient(std::span<const double> z, Eigen::VectorXd& grad) const;

  bool monotone(const ParameterVector& psi) const;
  // Per-subject log-likelihood; -inf entries for contributions below the numerical floor.
  Eigen::VectorXd pointwise_loglik(const ParameterVector& psi) const;
  double loglik(const ParameterVector& psi, ConstrainedGradient* grad = nullptr) const;

 private:
  ModelSpec model_;
  std::vector<SubjectRecord> data_;
  PriorSpec priors_;
  ParameterLayout layout_;
  EffectTransform transform_;
  std::vector<double> grid_;
  std::vector<double> flexible_levels_;
};

double log_posterior_unconstrained(const ModelSpec& model, std::span<const double> z,
                                   std::span<const SubjectRecord> data, const PriorSpec& priors);
Eigen::VectorXd grad_log_posterior(const ModelSpec& model, std::span<const double> z,
                                   std::span<const SubjectRecord> data, const PriorSpec& priors);

}  // namespace qaft
