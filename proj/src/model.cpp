#include "qaft/model.hpp"

#include <cmath>
#include <sstream>

#include "qaft/errors.hpp"

namespace qaft {

namespace {

double inv_logit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void PriorSpec::validate() const {
  if (!(a_sigma > 0 && b_sigma > 0 && a_theta > 0 && b_theta > 0))
    throw ValidationError("priors: all Gamma hyperparameters must be positive");
}

void ModelSpec::validate() const {
  baseline.validate();
  effect.validate();
  if (!time_varying && effect.kind != EffectKind::Constant && effect.flexible_covariate >= num_covariates())
    throw ValidationError("model: flexible covariate index out of range");
}

void ParameterVector::validate(const ModelSpec& model) const {
  if (beta.size() != model.num_beta()) throw DomainError("parameters: beta has the wrong length");
  if (alpha.size() != model.num_alpha()) throw DomainError("parameters: alpha has the wrong length");
  if (!beta.allFinite() || !alpha.allFinite() || !std::isfinite(mu)) throw DomainError("parameters: non-finite value");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("parameters: sigma must be positive");
  if (model.baseline.is_tbp()) {
    if (w.size() != model.baseline.K) throw DomainError("parameters: w has the wrong length");
    if ((w.array() < 0.0).any() || std::fabs(w.sum() - 1.0) > 1e-12) throw DomainError("parameters: w must lie on the simplex");
    if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("parameters: theta must be positive");
  }
}

Eigen::VectorXd simplex_constrain(std::span<const double> y, double* log_jacobian) {
  const int K = static_cast<int>(y.size()) + 1;
  Eigen::VectorXd w(K);
  double stick = 1.0;
  double lj = 0.0;
  for (int k = 0; k < K - 1; ++k) {
    const double z = inv_logit(y[k] - std::log(K - 1.0 - k));
    lj += std::log(z) + std::log1p(-z) + std::log(stick);
    w(k) = stick * z;
    stick -= w(k);
  }
  w(K - 1) = std::max(stick, 0.0);
  if (log_jacobian) *log_jacobian = lj;
  return w;
}

Eigen::VectorXd simplex_unconstrain(std::span<const double> w) {
  const int K = static_cast<int>(w.size());
  Eigen::VectorXd y(K - 1);
  double stick = 1.0;
  for (int k = 0; k < K - 1; ++k) {
    const double z = w[k] / stick;
    y(k) = std::log(z) - std::log1p(-z) + std::log(K - 1.0 - k);
    stick -= w[k];
  }
  return y;
}

Eigen::VectorXd simplex_backprop(std::span<const double> y, std::span<const double> dw) {
  const int K = static_cast<int>(y.size()) + 1;
  Eigen::VectorXd z(K - 1);
  Eigen::VectorXd w = simplex_constrain(y);
  for (int k = 0; k < K - 1; ++k) z(k) = inv_logit(y[k] - std::log(K - 1.0 - k));
  Eigen::VectorXd grad(K - 1);
  // later[j] = sum_{k > j} dw_k w_k
  double later = dw[K - 1] * w(K - 1);
  for (int j = K - 2; j >= 0; --j) {
    grad(j) = dw[j] * w(j) * (1.0 - z(j)) - z(j) * later + 1.0 - 2.0 * z(j) - z(j) * (K - 2 - j);
    later += dw[j] * w(j);
  }
  return grad;
}

ParameterLayout::ParameterLayout(const ModelSpec& model)
    : num_beta_(model.num_beta()),
      num_alpha_(model.num_alpha()),
      K_(model.baseline.is_tbp() ? model.baseline.K : 0),
      tbp_(model.baseline.is_tbp()) {
  log_theta_ = num_beta_ + num_alpha_ + 2 + (tbp_ ? K_ - 1 : 0);
  beta_names_ = model.covariates;
  if (model.time_varying) beta_names_.push_back("tv");
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out;
  for (const auto& n : beta_names_) out.push_back("beta[" + n + "]");
  for (int j = 0; j < num_alpha_; ++j) out.push_back("alpha[" + std::to_string(j + 1) + "]");
  out.push_back("mu");
  out.push_back("sigma");
  if (tbp_) {
    for (int k = 0; k < K_; ++k) out.push_back("w[" + std::to_string(k + 1) + "]");
    out.push_back("theta");
  }
  return out;
}

std::vector<std::string> ParameterLayout::unconstrained_names() const {
  std::vector<std::string> out;
  for (const auto& n : beta_names_) out.push_back("beta[" + n + "]");
  for (int j = 0; j < num_alpha_; ++j) out.push_back("alpha[" + std::to_string(j + 1) + "]");
  out.push_back("mu");
  out.push_back("log_sigma");
  if (tbp_) {
    for (int k = 0; k + 1 < K_; ++k) out.push_back("simplex[" + std::to_string(k + 1) + "]");
    out.push_back("log_theta");
  }
  return out;
}

ParameterVector ParameterLayout::constrain(std::span<const double> z, double* log_jacobian) const {
  if (static_cast<int>(z.size()) != dim()) throw DomainError("constrain: wrong unconstrained dimension");
  ParameterVector psi;
  psi.beta = Eigen::Map<const Eigen::VectorXd>(z.data(), num_beta_);
  psi.alpha = Eigen::Map<const Eigen::VectorXd>(z.data() + alpha_offset(), num_alpha_);
  psi.mu = z[mu_offset()];
  psi.sigma = std::exp(z[log_sigma_offset()]);
  double lj = z[log_sigma_offset()];
  if (tbp_) {
    double simplex_lj = 0.0;
    psi.w = simplex_constrain(z.subspan(simplex_offset(), K_ - 1), &simplex_lj);
    psi.theta = std::exp(z[log_theta_]);
    lj += simplex_lj + z[log_theta_];
  }
  if (log_jacobian) *log_jacobian = lj;
  return psi;
}

Eigen::VectorXd ParameterLayout::unconstrain(const ParameterVector& psi) const {
  Eigen::VectorXd z(dim());
  z.segment(0, num_beta_) = psi.beta;
  z.segment(alpha_offset(), num_alpha_) = psi.alpha;
  z(mu_offset()) = psi.mu;
  z(log_sigma_offset()) = std::log(psi.sigma);
  if (tbp_) {
    z.segment(simplex_offset(), K_ - 1) = simplex_unconstrain({psi.w.data(), static_cast<std::size_t>(K_)});
    z(log_theta_) = std::log(psi.theta);
  }
  return z;
}

Eigen::VectorXd ParameterLayout::flatten(const ParameterVector& psi) const {
  Eigen::VectorXd f(flat_dim());
  f.segment(0, num_beta_) = psi.beta;
  f.segment(num_beta_, num_alpha_) = psi.alpha;
  f(num_beta_ + num_alpha_) = psi.mu;
  f(num_beta_ + num_alpha_ + 1) = psi.sigma;
  if (tbp_) {
    f.segment(num_beta_ + num_alpha_ + 2, K_) = psi.w;
    f(flat_dim() - 1) = psi.theta;
  }
  return f;
}

ParameterVector ParameterLayout::unflatten(std::span<const double> flat) const {
  if (static_cast<int>(flat.size()) != flat_dim()) throw DomainError("unflatten: wrong dimension");
  ParameterVector psi;
  psi.beta = Eigen::Map<const Eigen::VectorXd>(flat.data(), num_beta_);
  psi.alpha = Eigen::Map<const Eigen::VectorXd>(flat.data() + num_beta_, num_alpha_);
  psi.mu = flat[num_beta_ + num_alpha_];
  psi.sigma = flat[num_beta_ + num_alpha_ + 1];
  if (tbp_) {
    psi.w = Eigen::Map<const Eigen::VectorXd>(flat.data() + num_beta_ + num_alpha_ + 2, K_);
    psi.theta = flat[flat_dim() - 1];
  }
  return psi;
}

}  // namespace qaft
