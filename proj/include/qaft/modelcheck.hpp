#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "qaft/likelihood.hpp"
#include "qaft/sampler.hpp"

namespace qaft {

// M x n matrix of per-draw, per-subject log-likelihood contributions.
Eigen::MatrixXd pointwise_loglik(const ModelSpec& model, const PosteriorDraws& draws,
                                 std::span<const SubjectRecord> data, int threads = 1);

// Generalized Pareto fit to positive exceedances sorted ascending (Zhang-Stephens
// profile posterior, with the weakly informative shrinkage of k toward 0.5).
struct ParetoFit {
  double k = 0.0;
  double sigma = 0.0;
};
ParetoFit fit_generalized_pareto(std::span<const double> sorted_exceedances);
double generalized_pareto_quantile(double p, double k, double sigma);

// Smoothed log importance weights for one subject from log ratios; returns khat (NaN when the
// tail is degenerate and smoothing was skipped). Weights are left unnormalized.
double psis_smooth(std::span<const double> log_ratios, std::vector<double>& log_weights);

struct LooResult {
  double elpd = 0.0;
  double elpd_se = 0.0;
  double minus2elpd = 0.0;
  double lpd = 0.0;    // in-sample log pointwise predictive density
  double p_loo = 0.0;  // lpd - elpd
  int num_draws = 0;
  Eigen::VectorXd elpd_i;
  Eigen::VectorXd khat;
  std::vector<std::string> warnings;
  int n() const { return static_cast<int>(elpd_i.size()); }
  // Recomputes the totals from elpd_i after entries were replaced.
  void update_totals();
};

inline constexpr double kKhatThreshold = 0.7;

LooResult psis_loo(const Eigen::MatrixXd& ll);

struct LooDifference {
  double elpd_diff = 0.0;  // a.elpd - b.elpd
  double se = 0.0;         // from the paired per-subject differences
};
LooDifference loo_difference(const LooResult& a, const LooResult& b);

struct CompareRow {
  int index = 0;  // position in the input list
  double elpd = 0.0;
  double elpd_diff = 0.0;  // relative to the best model, <= 0
  double se_diff = 0.0;
};
// Models ordered by decreasing elpd.
std::vector<CompareRow> compare(std::span<const LooResult> results);

// Leave-one-out predictive densities by refitting without each listed subject.
inline constexpr int kMaxExactLooSubjects = 200;
Eigen::VectorXd exact_loo_pointwise(const ModelSpec& model, std::span<const SubjectRecord> data,
                                    const PriorSpec& priors, const SamplerConfig& cfg, std::span<const int> subjects);
LooResult exact_loo(const ModelSpec& model, std::span<const SubjectRecord> data, const PriorSpec& priors,
                    const SamplerConfig& cfg);
// Replaces elpd_i of subjects with khat above the threshold by exact refits.
std::vector<int> refit_high_khat(LooResult& result, const ModelSpec& model, std::span<const SubjectRecord> data,
                                 const PriorSpec& priors, const SamplerConfig& cfg,
                                 double threshold = kKhatThreshold);

}  // namespace qaft
