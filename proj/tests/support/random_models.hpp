#pragma once

// Random models, parameters and datasets for property tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qaft/likelihood.hpp"
#include "qaft/model.hpp"

namespace qaft::fixtures {

struct RandomProblem {
  ModelSpec model;
  ParameterVector psi;
  std::vector<SubjectRecord> data;
};

inline ModelSpec make_model(BaselineFamily family, EffectKind effect, bool time_varying, int K = 4) {
  ModelSpec m;
  m.baseline.family = family;
  m.baseline.K = K;
  m.baseline.centering = Centering::Weibull;
  m.covariates = {"x1", "x2"};
  m.time_varying = time_varying;
  m.effect.kind = effect;
  m.effect.flexible_covariate = 0;
  if (effect == EffectKind::PiecewiseLinear) m.effect.knots = {0.0, 0.8, 2.0};
  if (effect == EffectKind::NaturalCubicSpline) m.effect.knots = {std::log(0.2), std::log(1.0), std::log(4.0)};
  return m;
}

// Enumerates baseline x effect x time-varying combinations by index.
inline ModelSpec model_for_index(int index) {
  static const BaselineFamily families[] = {BaselineFamily::Weibull, BaselineFamily::LogNormal, BaselineFamily::Tbp};
  static const EffectKind effects[] = {EffectKind::Constant, EffectKind::PiecewiseLinear, EffectKind::NaturalCubicSpline};
  ModelSpec m = make_model(families[index % 3], effects[(index / 3) % 3], (index / 9) % 2 == 1);
  if (m.baseline.is_tbp() && index % 2 == 1) m.baseline.centering = Centering::LogNormal;
  return m;
}

inline ParameterVector random_parameters(const ModelSpec& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ParameterVector psi;
  psi.beta = Eigen::VectorXd(m.num_beta());
  for (auto& b : psi.beta) b = 0.6 * u(rng);
  psi.alpha = Eigen::VectorXd(m.num_alpha());
  const double scale = m.effect.kind == EffectKind::NaturalCubicSpline ? 0.2 : 0.8;
  for (auto& a : psi.alpha) a = scale * u(rng);
  psi.mu = 0.3 * u(rng);
  psi.sigma = 1.0 + 0.4 * u(rng);
  if (m.baseline.is_tbp()) {
    std::gamma_distribution<double> g(3.0, 1.0);
    psi.w = Eigen::VectorXd(m.baseline.K);
    for (auto& w : psi.w) w = g(rng);
    psi.w /= psi.w.sum();
    psi.theta = 1.0 + 0.5 * u(rng);
  }
  return psi;
}

// Records of every censoring type with times in a moderate range.
inline std::vector<SubjectRecord> random_data(const ModelSpec& m, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ut(0.1, 5.0), u01(0.0, 1.0);
  std::normal_distribution<double> norm;
  std::vector<SubjectRecord> data;
  for (int i = 0; i < n; ++i) {
    SubjectRecord r;
    r.x = {static_cast<double>(rng() % 2), norm(rng)};
    const double t = ut(rng);
    const int type = i % 4;
    if (type == 0) {
      r.y_lower = r.y_upper = t;
      r.event = true;
    } else if (type == 1) {
      r.y_lower = t;
      r.y_upper = std::numeric_limits<double>::infinity();
    } else if (type == 2) {
      r.y_lower = t;
      r.y_upper = t + 0.2 + u01(rng);
    } else {
      r.y_lower = r.y_upper = t;
      r.event = true;
    }
    if (i % 3 == 0) r.truncation = 0.8 * r.y_lower * u01(rng);
    if (m.time_varying && i % 2 == 0) r.onset = 0.3 + 3.0 * u01(rng);
    data.push_back(r);
  }
  return data;
}

inline RandomProblem random_problem(int index, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RandomProblem p;
  p.model = model_for_index(index);
  p.psi = random_parameters(p.model, rng);
  p.data = random_data(p.model, n, rng);
  return p;
}

// Largest relative error (floored at unit magnitude) between the analytic gradient and central
// differences with h = 1e-5 max(1, |z_i|).
inline double gradient_fd_error(const Posterior& post, const Eigen::VectorXd& z) {
  Eigen::VectorXd grad;
  const double f0 = post.log_density_gradient({z.data(), static_cast<std::size_t>(z.size())}, grad);
  if (!std::isfinite(f0)) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::fabs(z(i)));
    Eigen::VectorXd zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    const double fd = (post.log_density({zp.data(), static_cast<std::size_t>(zp.size())}) -
                       post.log_density({zm.data(), static_cast<std::size_t>(zm.size())})) /
                      (2 * h);
    worst = std::max(worst, std::fabs(grad(i) - fd) / std::max(1.0, std::fabs(grad(i))));
  }
  return worst;
}

}  // namespace qaft::fixtures
