#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qaft/likelihood.hpp"
#include "qaft/sampler.hpp"

namespace qaft {

// t_x(p) = V^{-1}(S0^{-1}(p) | x). `onset` applies to time-varying models only.
double quantile_time(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, double p,
                     double onset = std::numeric_limits<double>::infinity());

// xi(p) = t_x(p) / t_x'(p).
double acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, std::span<const double> x,
                           std::span<const double> x_ref);
double acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, std::span<const double> x,
                           double onset, std::span<const double> x_ref, double onset_ref);

// Closed form for a binary switch at `onset` against a never-switching subject with the same
// x2'beta2, given the baseline quantile s0_quantile = S0^{-1}(p).
double tv_af_closed_form(double beta1, double beta2_term, double onset, double s0_quantile);
// Same contrast for a fitted constant-effect time-varying model; beta1 is the last beta entry.
double tv_acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, double onset,
                              std::span<const double> x2);

// A standardization group: covariate `covariate` (if >= 0) is set to `level` for every subject,
// and for time-varying models every subject's onset is set to `onset`.
struct Exposure {
  int covariate = -1;
  double level = 0.0;
  double onset = std::numeric_limits<double>::infinity();
  std::string label;
};

// Empirical distribution of the covariate patterns of `data` with the exposure applied;
// identical patterns are merged with their counts.
class StandardizationPopulation {
 public:
  StandardizationPopulation(const ModelSpec& model, std::span<const SubjectRecord> data, const Exposure& exposure);

  const ModelSpec& model() const { return model_; }
  int size() const { return static_cast<int>(patterns_.size()); }
  const std::vector<std::vector<double>>& patterns() const { return patterns_; }
  const std::vector<double>& counts() const { return counts_; }
  double total() const { return total_; }
  double onset() const { return onset_; }
  // Largest follow-up among subjects that belong to this group in the observed data.
  double max_follow_up() const { return max_follow_up_; }

 private:
  ModelSpec model_;
  std::vector<std::vector<double>> patterns_;
  std::vector<double> counts_;
  double total_ = 0.0;
  double onset_;
  double max_follow_up_ = 0.0;
};

// Standardized survivor S_Z(t) = sum_i w_i S(t | x_i; psi) for one parameter draw.
class StandardizedCurve {
 public:
  StandardizedCurve(const StandardizationPopulation& pop, const ParameterVector& psi);
  StandardizedCurve(const StandardizedCurve&) = delete;
  StandardizedCurve& operator=(const StandardizedCurve&) = delete;

  double survivor(double t) const;
  // Solves S_Z(t) = p inside the bracket of individual quantiles.
  double quantile(double p) const;

 private:
  const StandardizationPopulation& pop_;
  const ParameterVector& psi_;
  EffectTransform transform_;
  Baseline base_;
  std::vector<SubjectProcess> processes_;
};

double standardized_survivor(const ModelSpec& model, const ParameterVector& psi, std::span<const SubjectRecord> data,
                             const Exposure& exposure, double t);

struct CurveRow {
  double abscissa = 0.0;
  std::string group;
  double mean = 0.0;
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  bool extrapolated = false;
};

struct CurveTable {
  std::vector<CurveRow> rows;
  static const char* header() { return "abscissa,group,mean,median,lo95,hi95,extrapolated"; }
};

// Summaries over draws of one curve point: mean, median, and equal-tailed 95% interval.
CurveRow summarize_values(double abscissa, const std::string& group, std::span<const double> values);

std::vector<double> default_p_grid();  // 0.01, 0.02, ..., 0.99

struct StandardizedAfResult {
  CurveTable table;
  Eigen::MatrixXd values;         // draws x p
  std::vector<double> max_survivor;  // posterior mean S_Z(t_max) per group (exposed, reference)
};

// Regression-standardized acceleration factor of `exposed` against `reference` at each p,
// one value per draw. Rows of the table carry `label` as group.
StandardizedAfResult standardized_af(const ModelSpec& model, const PosteriorDraws& draws,
                                     std::span<const SubjectRecord> data, const Exposure& exposed,
                                     const Exposure& reference, std::span<const double> p_grid,
                                     const std::string& label = "af", int threads = 1);

// Standardized survivor curves for each group on a time grid.
CurveTable standardized_survivor_curves(const ModelSpec& model, const PosteriorDraws& draws,
                                        std::span<const SubjectRecord> data, std::span<const Exposure> groups,
                                        std::span<const double> t_grid, int threads = 1);

// Standardized AF of onset at t_X against never switching, over onset and p grids. The group
// column holds the onset time; each onset block is exactly the standardized_af output.
CurveTable af_surface(const ModelSpec& model, const PosteriorDraws& draws, std::span<const SubjectRecord> data,
                      std::span<const double> onset_grid, std::span<const double> p_grid, int threads = 1);

// 40 equally spaced onsets over (0, max follow-up].
std::vector<double> default_onset_grid(std::span<const SubjectRecord> data, int points = 40);

std::string format_onset(double onset);

}  // namespace qaft
