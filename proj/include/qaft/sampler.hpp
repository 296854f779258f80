#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qaft/likelihood.hpp"
#include "qaft/rng.hpp"

namespace qaft {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int iters = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  int thin = 1;
  int threads = 1;
  int init_attempts = 100;
  double init_radius = 2.0;

  int retained_per_chain() const { return iters / thin; }
  void validate() const;
};

// Differentiable log density on R^dim. The callback writes the gradient and returns the
// log density; -inf marks states outside the support.
struct DensityModel {
  int dim = 0;
  std::function<double(std::span<const double>, Eigen::VectorXd&)> log_density_gradient;
  // Coordinates started at 0 instead of Uniform(-r, r).
  std::vector<int> init_at_zero;
  std::vector<std::string> names;
};

DensityModel make_density_model(const Posterior& posterior);

struct ChainInfo {
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  int warmup_divergences = 0;
  int init_attempts = 0;
};

// Retained draws of all chains, ordered by (chain, iter).
struct PosteriorDraws {
  std::vector<std::string> unconstrained_names;
  Eigen::MatrixXd unconstrained;  // M x dim
  // Constrained parameter view (beta, alpha, mu, sigma, w, theta); empty for generic targets.
  std::vector<std::string> names;
  Eigen::MatrixXd constrained;

  std::vector<int> chain;
  std::vector<int> iter;
  std::vector<char> divergent;
  std::vector<double> energy;
  std::vector<double> log_density;
  std::vector<double> accept_stat;
  std::vector<int> tree_depth;
  std::vector<ChainInfo> chain_info;
  int num_chains = 0;

  int rows() const { return static_cast<int>(chain.size()); }
  int num_divergent() const;
  int column(const std::string& name) const;  // index into `names`; -1 when absent
  // Per-chain slices of one constrained (or unconstrained) column.
  std::vector<Eigen::VectorXd> by_chain(int col, bool constrained = true) const;
  ParameterVector parameters(const ParameterLayout& layout, int row) const;
  PosteriorDraws subset(std::span<const int> rows) const;
  PosteriorDraws thinned(int every) const;
};

PosteriorDraws run_nuts(const DensityModel& target, const SamplerConfig& cfg);
PosteriorDraws run_chains(const Posterior& posterior, const SamplerConfig& cfg);
PosteriorDraws run_chains(const ModelSpec& model, std::vector<SubjectRecord> data, const PriorSpec& priors,
                          const SamplerConfig& cfg);

// Single-chain draws holding the given parameter vectors, for plugging fixed values into the
// inference and model-checking routines.
PosteriorDraws draws_from_parameters(const ParameterLayout& layout, std::span<const ParameterVector> values);

// Adds the constrained view to draws of a survival posterior.
void attach_constrained(const ParameterLayout& layout, PosteriorDraws& draws);

// Hamiltonian pieces with a diagonal inverse metric, exposed for testing.
struct HmcState {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};
double hamiltonian(const HmcState& s, const Eigen::VectorXd& inv_metric);
void leapfrog(const DensityModel& target, const Eigen::VectorXd& inv_metric, double step, HmcState& s);

// Split-chain potential scale reduction factor. Needs >= 2 chains and >= 100 draws per chain.
double rhat(std::span<const Eigen::VectorXd> chains);
double rhat(const PosteriorDraws& draws, int col, bool constrained = true);
// Multi-chain effective sample size with Geyer's initial monotone sequence; 0 for constant input.
double ess(std::span<const Eigen::VectorXd> chains);
double ess(const PosteriorDraws& draws, int col, bool constrained = true);

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double rhat = 0.0;  // NaN when fewer than 2 chains or 100 draws per chain
  double ess = 0.0;
};
std::vector<ParamSummary> summarize(const PosteriorDraws& draws);

}  // namespace qaft
