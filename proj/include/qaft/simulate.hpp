#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qaft/likelihood.hpp"
#include "qaft/rng.hpp"

namespace qaft {

struct CovariateGenerator {
  enum class Kind { Bernoulli, Normal, Uniform, Constant };
  Kind kind = Kind::Bernoulli;
  double a = 0.5;  // Bernoulli: p; Normal: mean; Uniform: lower; Constant: value
  double b = 1.0;  // Normal: sd; Uniform: upper

  double draw(Rng& rng) const;
  void validate() const;
};

struct SimConfig {
  ModelSpec model;
  ParameterVector psi;
  int n = 100;
  std::uint64_t seed = 1;
  std::vector<CovariateGenerator> covariates;  // one per model covariate
  // Left truncation: entry ~ Uniform(0, entry_max); 0 disables truncation.
  double entry_max = 0.0;
  // Right censoring at min(admin_censor, entry + Exponential(censor_rate)).
  double admin_censor = std::numeric_limits<double>::infinity();
  double censor_rate = 0.0;
  // Interval censoring: visits every visit_interval after entry; 0 records exact times.
  double visit_interval = 0.0;
  // Time-varying covariate onset: never with probability onset_never, else Exponential(onset_rate).
  double onset_rate = 0.1;
  double onset_never = 0.0;

  void validate() const;
};

// T = V^{-1}(S0^{-1}(u) | x) for a given uniform u.
double event_time_from_uniform(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, double u,
                               double onset = std::numeric_limits<double>::infinity());
double draw_event_time(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, Rng& rng,
                       double onset = std::numeric_limits<double>::infinity());

std::vector<SubjectRecord> simulate_dataset(const SimConfig& cfg);

// Replaces each finite censoring interval by an exact event at its midpoint.
std::vector<SubjectRecord> intervals_to_midpoints(std::span<const SubjectRecord> data);

}  // namespace qaft
