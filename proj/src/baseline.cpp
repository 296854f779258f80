#include "qaft/baseline.hpp"

#include <cmath>
#include <sstream>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"

namespace qaft {

using numerics::kInf;

std::string to_string(BaselineFamily family) {
  switch (family) {
    case BaselineFamily::Weibull: return "weibull";
    case BaselineFamily::LogNormal: return "lognormal";
    case BaselineFamily::Tbp: return "tbp";
  }
  return "unknown";
}

std::string to_string(Centering centering) {
  return centering == Centering::Weibull ? "weibull" : "lognormal";
}

void BaselineSpec::validate() const {
  if (family == BaselineFamily::Tbp && K < 1) throw ValidationError("TBP baseline requires K >= 1");
}

Baseline::Baseline(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights)
    : spec_(spec), params_(params) {
  spec_.validate();
  if (!std::isfinite(params.mu)) throw DomainError("baseline: mu must be finite");
  if (!(params.sigma > 0.0) || !std::isfinite(params.sigma)) throw DomainError("baseline: sigma must be positive");
  if (spec.is_tbp()) {
    parametric_ = spec.centering;
    if (static_cast<int>(weights.size()) != spec.K) {
      std::ostringstream msg;
      msg << "baseline: TBP expects " << spec.K << " weights, got " << weights.size();
      throw DomainError(msg.str());
    }
    weights_ = Eigen::Map<const Eigen::VectorXd>(weights.data(), weights.size());
    if ((weights_.array() < 0.0).any() || !weights_.allFinite()) throw DomainError("baseline: TBP weights must be non-negative");
    if (std::fabs(weights_.sum() - 1.0) > 1e-12) throw DomainError("baseline: TBP weights must sum to one");
    const int K = spec.K;
    tail_sums_.resize(K);
    double acc = 0.0;
    for (int j = 1; j <= K; ++j) {
      acc += weights_(K - j);
      tail_sums_(j - 1) = acc;
    }
    binom_ = Eigen::MatrixXd::Zero(K + 1, K + 1);
    for (int n = 0; n <= K; ++n)
      for (int j = 0; j <= n; ++j) binom_(n, j) = std::round(std::exp(numerics::log_binomial(n, j)));
  } else {
    if (!weights.empty()) throw DomainError("baseline: weights are only valid for the TBP family");
    parametric_ = spec.family == BaselineFamily::Weibull ? Centering::Weibull : Centering::LogNormal;
  }
}

Baseline::Centered Baseline::centered(double u, bool with_partials) const {
  const double mu = params_.mu;
  const double sigma = params_.sigma;
  const double lu = std::log(u);
  Centered c{};
  if (parametric_ == Centering::Weibull) {
    const double a = sigma * (lu - mu);
    const double z = std::exp(a);
    c.log_sf = -z;
    c.log_cdf = z > 0.0 ? std::log(-std::expm1(-z)) : -kInf;
    c.log_pdf = std::log(sigma) - lu + a - z;
    if (with_partials) {
      c.dlogsf_du = -sigma * z / u;
      c.dlogsf_dmu = sigma * z;
      c.dlogsf_dsigma = -z * (lu - mu);
      c.dlogpdf_du = (sigma * (1.0 - z) - 1.0) / u;
      c.dlogpdf_dmu = sigma * (z - 1.0);
      c.dlogpdf_dsigma = 1.0 / sigma + (lu - mu) * (1.0 - z);
    }
  } else {
    const double r = (lu - mu) / sigma;
    c.log_sf = numerics::log_normal_sf(r);
    c.log_cdf = numerics::log_normal_sf(-r);
    c.log_pdf = -0.5 * r * r - numerics::kLogSqrt2Pi - std::log(sigma) - lu;
    if (with_partials) {
      const double h = numerics::normal_hazard(r);
      c.dlogsf_du = -h / (sigma * u);
      c.dlogsf_dmu = h / sigma;
      c.dlogsf_dsigma = h * r / sigma;
      c.dlogpdf_du = -(r / sigma + 1.0) / u;
      c.dlogpdf_dmu = r / sigma;
      c.dlogpdf_dsigma = (r * r - 1.0) / sigma;
    }
  }
  return c;
}

double Baseline::centered_inverse(double p) const {
  if (parametric_ == Centering::Weibull) return std::exp(params_.mu + std::log(-std::log(p)) / params_.sigma);
  return std::exp(params_.mu + params_.sigma * numerics::normal_isf(p));
}

void Baseline::tbp_powers(double s, double s1, std::vector<double>& ps, std::vector<double>& ps1) const {
  const int K = spec_.K;
  ps.resize(K + 1);
  ps1.resize(K + 1);
  ps[0] = ps1[0] = 1.0;
  for (int i = 1; i <= K; ++i) {
    ps[i] = ps[i - 1] * s;
    ps1[i] = ps1[i - 1] * s1;
  }
}

double Baseline::tbp_h(const std::vector<double>& ps, const std::vector<double>& ps1) const {
  const int K = spec_.K;
  double acc = 0.0;
  for (int j = 1; j <= K; ++j) acc += binom_(K, j) * ps[j - 1] * ps1[K - j] * tail_sums_(j - 1);
  return acc;
}

double Baseline::tbp_g(const std::vector<double>& ps, const std::vector<double>& ps1) const {
  const int K = spec_.K;
  double acc = 0.0;
  for (int m = 0; m < K; ++m) acc += binom_(K - 1, m) * ps[m] * ps1[K - 1 - m] * weights_(K - 1 - m);
  return K * acc;
}

double Baseline::tbp_dg(const std::vector<double>& ps, const std::vector<double>& ps1) const {
  const int K = spec_.K;
  if (K < 2) return 0.0;
  double acc = 0.0;
  for (int m = 0; m <= K - 2; ++m) {
    const double diff = weights_(K - 2 - m) - weights_(K - 1 - m);
    acc += binom_(K - 2, m) * ps[m] * ps1[K - 2 - m] * diff;
  }
  return K * (K - 1.0) * acc;
}

double Baseline::tbp_survivor_cf(double s) const {
  const int K = spec_.K;
  double acc = 0.0;
  for (int k = 1; k <= K; ++k) acc += weights_(k - 1) * numerics::regularized_incomplete_beta(s, K - k + 1.0, k);
  return acc;
}

double Baseline::survivor(double t) const {
  if (!(t >= 0.0)) throw DomainError("survivor: t must be non-negative");
  if (t == 0.0) return 1.0;
  if (t == kInf) return 0.0;
  if (!spec_.is_tbp()) {
    if (parametric_ == Centering::LogNormal)
      return numerics::normal_sf((std::log(t) - params_.mu) / params_.sigma);
    return std::exp(centered(t, false).log_sf);
  }
  return tbp_survivor_cf(std::exp(centered(t, false).log_sf));
}

double Baseline::log_survivor(double t) const {
  if (!(t >= 0.0)) throw DomainError("log_survivor: t must be non-negative");
  if (t == 0.0) return 0.0;
  if (t == kInf) return -kInf;
  const Centered c = centered(t, false);
  if (!spec_.is_tbp()) return c.log_sf;
  thread_local std::vector<double> ps, ps1;
  tbp_powers(std::exp(c.log_sf), std::exp(c.log_cdf), ps, ps1);
  return c.log_sf + std::log(tbp_h(ps, ps1));
}

double Baseline::log_density(double t) const {
  if (!(t > 0.0)) throw DomainError("log_density: t must be positive");
  if (t == kInf) return -kInf;
  const Centered c = centered(t, false);
  if (!spec_.is_tbp()) return c.log_pdf;
  thread_local std::vector<double> ps, ps1;
  tbp_powers(std::exp(c.log_sf), std::exp(c.log_cdf), ps, ps1);
  return c.log_pdf + std::log(tbp_g(ps, ps1));
}

double Baseline::density(double t) const { return std::exp(log_density(t)); }

double Baseline::inverse_survivor(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("inverse_survivor: p must lie in (0, 1)");
  if (!spec_.is_tbp()) return centered_inverse(p);

  const double log_p = std::log(p);
  // Increasing in y = log t.
  auto objective = [&](double y) -> std::pair<double, double> {
    const double u = std::exp(y);
    const Centered c = centered(u, false);
    thread_local std::vector<double> ps, ps1;
    tbp_powers(std::exp(c.log_sf), std::exp(c.log_cdf), ps, ps1);
    const double log_sf = c.log_sf + std::log(tbp_h(ps, ps1));
    const double log_pdf = c.log_pdf + std::log(tbp_g(ps, ps1));
    return {log_p - log_sf, std::exp(y + log_pdf - log_sf)};
  };
  double lo = std::log(centered_inverse(1.0 - (1.0 - p) / 10.0));
  double hi = std::log(centered_inverse(p / 10.0));
  constexpr double kLog10 = 2.302585092994046;
  int expansions = 0;
  while (objective(lo).first > 0.0) {
    lo -= kLog10;
    if (++expansions > 60) throw NumericalError("inverse_survivor: lower bracket expansion failed");
  }
  while (objective(hi).first < 0.0) {
    hi += kLog10;
    if (++expansions > 60) throw NumericalError("inverse_survivor: upper bracket expansion failed");
  }
  return std::exp(numerics::solve_increasing(objective, lo, hi, 1e-13, 0.0));
}

void Baseline::partials(double u, BaselinePartials& out) const {
  const int K = spec_.is_tbp() ? spec_.K : 0;
  if (out.dlogsf_dw.size() != K) {
    out.dlogsf_dw.resize(K);
    out.dlogpdf_dw.resize(K);
  }
  if (u == 0.0) {
    out = BaselinePartials{0.0, -kInf, 0, 0, 0, 0, 0, 0, Eigen::VectorXd::Zero(K), Eigen::VectorXd::Zero(K)};
    return;
  }
  const Centered c = centered(u, true);
  if (!spec_.is_tbp()) {
    out.log_sf = c.log_sf;
    out.log_pdf = c.log_pdf;
    out.dlogsf_du = c.dlogsf_du;
    out.dlogsf_dmu = c.dlogsf_dmu;
    out.dlogsf_dsigma = c.dlogsf_dsigma;
    out.dlogpdf_du = c.dlogpdf_du;
    out.dlogpdf_dmu = c.dlogpdf_dmu;
    out.dlogpdf_dsigma = c.dlogpdf_dsigma;
    return;
  }
  const double s = std::exp(c.log_sf);
  const double s1 = std::exp(c.log_cdf);
  thread_local std::vector<double> ps, ps1;
  tbp_powers(s, s1, ps, ps1);
  const double h = tbp_h(ps, ps1);
  const double g = tbp_g(ps, ps1);
  const double dg = tbp_dg(ps, ps1);
  out.log_sf = c.log_sf + std::log(h);
  out.log_pdf = c.log_pdf + std::log(g);
  const double sf_ratio = g / h;
  out.dlogsf_du = sf_ratio * c.dlogsf_du;
  out.dlogsf_dmu = sf_ratio * c.dlogsf_dmu;
  out.dlogsf_dsigma = sf_ratio * c.dlogsf_dsigma;
  const double pdf_ratio = dg / g * s;
  out.dlogpdf_du = c.dlogpdf_du + pdf_ratio * c.dlogsf_du;
  out.dlogpdf_dmu = c.dlogpdf_dmu + pdf_ratio * c.dlogsf_dmu;
  out.dlogpdf_dsigma = c.dlogpdf_dsigma + pdf_ratio * c.dlogsf_dsigma;
  // h_k = sum_{j >= K-k+1} C(K, j) s^{j-1} (1-s)^{K-j}, accumulated from j = K downwards.
  double hk = 0.0;
  for (int k = 1; k <= K; ++k) {
    const int j = K - k + 1;
    hk += binom_(K, j) * ps[j - 1] * ps1[K - j];
    out.dlogsf_dw(k - 1) = hk / h;
    out.dlogpdf_dw(k - 1) = K * binom_(K - 1, K - k) * ps[K - k] * ps1[k - 1] / g;
  }
}

double survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t) {
  return Baseline(spec, params, weights).survivor(t);
}
double density(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t) {
  return Baseline(spec, params, weights).density(t);
}
double log_survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t) {
  return Baseline(spec, params, weights).log_survivor(t);
}
double log_density(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double t) {
  return Baseline(spec, params, weights).log_density(t);
}
double inverse_survivor(const BaselineSpec& spec, const BaselineParams& params, std::span<const double> weights, double p) {
  return Baseline(spec, params, weights).inverse_survivor(p);
}

}  // namespace qaft
