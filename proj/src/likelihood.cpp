#include "qaft/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"

namespace qaft {

using numerics::kInf;

void SubjectRecord::validate(const ModelSpec& model) const {
  if (static_cast<int>(x.size()) != model.num_covariates()) throw ValidationError("covariate count does not match the model");
  for (double v : x)
    if (!std::isfinite(v)) throw ValidationError("covariates must be finite");
  if (!(y_lower >= 0.0) || !std::isfinite(y_lower)) throw ValidationError("y_l must be finite and non-negative");
  if (!(truncation >= 0.0) || !std::isfinite(truncation)) throw ValidationError("truncation time must be finite and non-negative");
  if (truncation > y_lower) throw ValidationError("truncation time exceeds y_l");
  if (event) {
    if (y_upper != y_lower) throw ValidationError("delta = 1 requires y_u = y_l");
    if (!(y_lower > 0.0)) throw ValidationError("event times must be positive");
  } else {
    if (!(y_upper > y_lower)) throw ValidationError("delta = 0 requires y_u > y_l");
    if (y_lower == 0.0 && right_censored()) throw ValidationError("right censoring at time 0 carries no information");
  }
  if (!(onset > 0.0)) throw ValidationError("onset time must be positive");
  if (!model.time_varying && onset != kInf) throw ValidationError("onset time supplied for a time-invariant model");
}

void validate_dataset(const ModelSpec& model, std::span<const SubjectRecord> data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      data[i].validate(model);
    } catch (const ValidationError& e) {
      std::ostringstream msg;
      msg << "record " << i << ": " << e.what();
      throw ValidationError(msg.str());
    }
  }
}

namespace {

enum class Status { Ok, Degenerate, NonFinite };

struct Scratch {
  ProcessGrad process[2];
  BaselinePartials base[2];
};

SubjectProcess make_process(const ModelSpec& model, const EffectTransform& transform, const ParameterVector& psi,
                            const SubjectRecord& rec) {
  return subject_process(model, transform, psi, rec.x, rec.onset);
}

void reset_gradient(const ModelSpec& model, ConstrainedGradient& g) {
  g.beta = Eigen::VectorXd::Zero(model.num_beta());
  g.alpha = Eigen::VectorXd::Zero(model.num_alpha());
  g.w = Eigen::VectorXd::Zero(model.baseline.is_tbp() ? model.baseline.K : 0);
  g.mu = g.sigma = g.theta = 0.0;
}

// Adds coef_v * d(V)/d(params) + coef_logv * d(log v)/d(params) for one subject.
void chain_process(const ModelSpec& model, const SubjectRecord& rec, const ProcessGrad& pg, double coef_v,
                   double coef_logv, ConstrainedGradient& g) {
  const int d = model.num_covariates();
  const double deta = coef_v * pg.dvalue_deta + coef_logv * pg.dlogslope_deta;
  for (int j = 0; j < d; ++j) g.beta(j) += deta * rec.x[j];
  if (model.time_varying) g.beta(d) += coef_v * pg.dvalue_dbtv + coef_logv * pg.dlogslope_dbtv;
  if (g.alpha.size() > 0) g.alpha += coef_v * pg.dvalue_dalpha + coef_logv * pg.dlogslope_dalpha;
}

void chain_log_sf(const BaselinePartials& bp, double coef, ConstrainedGradient& g) {
  g.mu += coef * bp.dlogsf_dmu;
  g.sigma += coef * bp.dlogsf_dsigma;
  if (g.w.size() > 0) g.w += coef * bp.dlogsf_dw;
}

double subject_core(const ModelSpec& model, const EffectTransform& transform, const Baseline& base,
                    const ParameterVector& psi, const SubjectRecord& rec, ConstrainedGradient* grad, Scratch& s,
                    Status& status) {
  status = Status::Ok;
  const SubjectProcess proc = make_process(model, transform, psi, rec);
  double ll = 0.0;
  if (rec.event) {
    ProcessGrad& pg = s.process[0];
    BaselinePartials& bp = s.base[0];
    proc.eval(rec.y_lower, pg);
    if (!std::isfinite(pg.log_slope) || !(pg.value > 0.0)) {
      status = Status::NonFinite;
      return numerics::kNaN;
    }
    base.partials(pg.value, bp);
    ll = bp.log_pdf + pg.log_slope;
    if (grad) {
      grad->mu += bp.dlogpdf_dmu;
      grad->sigma += bp.dlogpdf_dsigma;
      if (grad->w.size() > 0) grad->w += bp.dlogpdf_dw;
      chain_process(model, rec, pg, bp.dlogpdf_du, 1.0, *grad);
    }
  } else {
    ProcessGrad& pl = s.process[0];
    BaselinePartials& bl = s.base[0];
    proc.eval(rec.y_lower, pl);
    base.partials(pl.value, bl);
    if (rec.right_censored()) {
      ll = bl.log_sf;
      if (grad) {
        chain_log_sf(bl, 1.0, *grad);
        chain_process(model, rec, pl, bl.dlogsf_du, 0.0, *grad);
      }
    } else {
      ProcessGrad& pu = s.process[1];
      BaselinePartials& bu = s.base[1];
      proc.eval(rec.y_upper, pu);
      base.partials(pu.value, bu);
      const double a = bl.log_sf;
      const double b = bu.log_sf;
      if (!(b < a)) {
        status = Status::Degenerate;
        return numerics::kNaN;
      }
      ll = numerics::log_diff_exp(a, b);
      if (grad) {
        const double coef_a = -1.0 / std::expm1(b - a);
        const double coef_b = -std::exp(b - a) * coef_a;
        chain_log_sf(bl, coef_a, *grad);
        chain_process(model, rec, pl, coef_a * bl.dlogsf_du, 0.0, *grad);
        chain_log_sf(bu, coef_b, *grad);
        chain_process(model, rec, pu, coef_b * bu.dlogsf_du, 0.0, *grad);
      }
    }
  }
  if (rec.truncation > 0.0) {
    ProcessGrad& pt = s.process[1];
    BaselinePartials& bt = s.base[1];
    proc.eval(rec.truncation, pt);
    base.partials(pt.value, bt);
    ll -= bt.log_sf;
    if (grad) {
      chain_log_sf(bt, -1.0, *grad);
      chain_process(model, rec, pt, -bt.dlogsf_du, 0.0, *grad);
    }
  }
  if (std::isnan(ll)) {
    status = Status::NonFinite;
    return ll;
  }
  if (ll < numerics::kLogFloor) return -kInf;
  return ll;
}


Baseline make_baseline(const ModelSpec& model, const ParameterVector& psi) { return baseline_for(model, psi); }

double checked(double value, Status status, std::size_t index) {
  if (status == Status::Ok) return value;
  std::ostringstream msg;
  msg << "subject " << index << ": "
      << (status == Status::Degenerate ? "degenerate censoring interval (S(V(y_l)) <= S(V(y_u)))"
                                       : "non-finite log-likelihood contribution");
  throw NumericalError(msg.str());
}

double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

SubjectProcess subject_process(const ModelSpec& model, const EffectTransform& transform, const ParameterVector& psi,
                               std::span<const double> x, double onset) {
  const int d = model.num_covariates();
  double eta = 0.0;
  for (int j = 0; j < d; ++j) eta += psi.beta(j) * x[j];
  std::span<const double> alpha(psi.alpha.data(), psi.alpha.size());
  if (model.time_varying) return SubjectProcess::time_varying(transform, eta, psi.beta(d), alpha, onset);
  const double x1 = model.effect.kind == EffectKind::Constant ? 0.0 : x[model.effect.flexible_covariate];
  return SubjectProcess(transform, eta, x1, alpha);
}

Baseline baseline_for(const ModelSpec& model, const ParameterVector& psi) {
  if (model.baseline.is_tbp()) return Baseline(model.baseline, psi.baseline(), as_span(psi.w));
  return Baseline(model.baseline, psi.baseline());
}

double loglik_subject(const ModelSpec& model, const ParameterVector& psi, const SubjectRecord& rec) {
  psi.validate(model);
  const EffectTransform transform(model.effect);
  const Baseline base = make_baseline(model, psi);
  Scratch scratch;
  Status status = Status::Ok;
  const double ll = subject_core(model, transform, base, psi, rec, nullptr, scratch, status);
  return checked(ll, status, 0);
}

double loglik_total(const ModelSpec& model, const ParameterVector& psi, std::span<const SubjectRecord> data) {
  psi.validate(model);
  const EffectTransform transform(model.effect);
  const Baseline base = make_baseline(model, psi);
  Scratch scratch;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Status status = Status::Ok;
    total += checked(subject_core(model, transform, base, psi, data[i], nullptr, scratch, status), status, i);
  }
  return total;
}

double log_prior(const ModelSpec& model, const ParameterVector& psi, const PriorSpec& priors) {
  psi.validate(model);
  double lp = log_gamma_density(psi.sigma, priors.a_sigma, priors.b_sigma);
  if (model.baseline.is_tbp()) {
    const int K = model.baseline.K;
    const double theta = psi.theta;
    lp += std::lgamma(K * theta) - K * std::lgamma(theta) + (theta - 1.0) * psi.w.array().log().sum();
    lp += log_gamma_density(theta, priors.a_theta, priors.b_theta);
  }
  return lp;
}

Posterior::Posterior(ModelSpec model, std::vector<SubjectRecord> data, PriorSpec priors)
    : model_(std::move(model)),
      data_(std::move(data)),
      priors_(priors),
      layout_(model_),
      transform_(model_.effect) {
  model_.validate();
  priors_.validate();
  validate_dataset(model_, data_);
  if (model_.effect.kind == EffectKind::NaturalCubicSpline) {
    std::set<double> levels;
    double t_max = 0.0;
    for (const auto& r : data_) {
      if (model_.time_varying) {
        if (r.onset < r.follow_up()) t_max = std::max(t_max, r.follow_up() - r.onset);
      } else {
        levels.insert(r.x[model_.effect.flexible_covariate]);
        t_max = std::max(t_max, r.follow_up());
      }
    }
    if (model_.time_varying) levels.insert(1.0);
    flexible_levels_.assign(levels.begin(), levels.end());
    const double lower = 0.5 * std::exp(model_.effect.knots.front());
    const double upper = std::max(1.5 * t_max, 2.0 * std::exp(model_.effect.knots.back()));
    grid_ = log_spaced_grid(lower, upper, 200);
  }
}

bool Posterior::monotone(const ParameterVector& psi) const {
  if (!psi.alpha.allFinite()) return false;
  if (model_.effect.kind != EffectKind::NaturalCubicSpline) return true;
  std::span<const double> alpha(psi.alpha.data(), psi.alpha.size());
  for (double level : flexible_levels_)
    if (!transform_.increasing_on(level, alpha, grid_)) return false;
  return true;
}

double Posterior::loglik(const ParameterVector& psi, ConstrainedGradient* grad) const {
  const Baseline base = make_baseline(model_, psi);
  Scratch scratch;
  double total = 0.0;
  for (const auto& rec : data_) {
    Status status = Status::Ok;
    const double ll = subject_core(model_, transform_, base, psi, rec, grad, scratch, status);
    if (status != Status::Ok) return -kInf;
    total += ll;
    if (total == -kInf) return -kInf;
  }
  return total;
}

Eigen::VectorXd Posterior::pointwise_loglik(const ParameterVector& psi) const {
  const Baseline base = make_baseline(model_, psi);
  Scratch scratch;
  Eigen::VectorXd out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    Status status = Status::Ok;
    const double ll = subject_core(model_, transform_, base, psi, data_[i], nullptr, scratch, status);
    out(i) = status == Status::Ok ? ll : -kInf;
  }
  return out;
}

double Posterior::log_density(std::span<const double> z) const {
  for (double v : z)
    if (!std::isfinite(v)) return -kInf;
  double log_jac = 0.0;
  const ParameterVector psi = layout_.constrain(z, &log_jac);
  if (!(psi.sigma > 0.0) || !std::isfinite(psi.sigma)) return -kInf;
  if (layout_.tbp() && (!(psi.theta > 0.0) || !std::isfinite(psi.theta) || (psi.w.array() <= 0.0).any())) return -kInf;
  if (!monotone(psi)) return -kInf;
  const double ll = loglik(psi);
  if (ll == -kInf) return -kInf;
  const double lp = log_prior(model_, psi, priors_);
  const double total = ll + lp + log_jac;
  return std::isnan(total) ? -kInf : total;
}

double Posterior::log_density_gradient(std::span<const double> z, Eigen::VectorXd& grad) const {
  grad = Eigen::VectorXd::Zero(layout_.dim());
  for (double v : z)
    if (!std::isfinite(v)) return -kInf;
  double log_jac = 0.0;
  const ParameterVector psi = layout_.constrain(z, &log_jac);
  if (!(psi.sigma > 0.0) || !std::isfinite(psi.sigma)) return -kInf;
  if (layout_.tbp() && (!(psi.theta > 0.0) || !std::isfinite(psi.theta) || (psi.w.array() <= 0.0).any())) return -kInf;
  if (!monotone(psi)) return -kInf;

  ConstrainedGradient g;
  reset_gradient(model_, g);
  const double ll = loglik(psi, &g);
  if (ll == -kInf) {
    grad.setZero();
    return -kInf;
  }
  const double lp = log_prior(model_, psi, priors_);

  g.sigma += (priors_.a_sigma - 1.0) / psi.sigma - priors_.b_sigma;
  grad.segment(layout_.beta_offset(), layout_.num_beta()) = g.beta;
  grad.segment(layout_.alpha_offset(), layout_.num_alpha()) = g.alpha;
  grad(layout_.mu_offset()) = g.mu;
  grad(layout_.log_sigma_offset()) = g.sigma * psi.sigma + 1.0;
  if (layout_.tbp()) {
    const int K = layout_.num_weights();
    const double theta = psi.theta;
    g.w += ((theta - 1.0) / psi.w.array()).matrix();
    g.theta = K * numerics::digamma(K * theta) - K * numerics::digamma(theta) + psi.w.array().log().sum() +
              (priors_.a_theta - 1.0) / theta - priors_.b_theta;
    grad.segment(layout_.simplex_offset(), K - 1) =
        simplex_backprop(z.subspan(layout_.simplex_offset(), K - 1), {g.w.data(), static_cast<std::size_t>(K)});
    grad(layout_.log_theta_offset()) = g.theta * theta + 1.0;
  }
  const double total = ll + lp + log_jac;
  if (!std::isfinite(total) || !grad.allFinite()) {
    grad.setZero();
    return -kInf;
  }
  return total;
}

double log_posterior_unconstrained(const ModelSpec& model, std::span<const double> z,
                                   std::span<const SubjectRecord> data, const PriorSpec& priors) {
  const Posterior post(model, {data.begin(), data.end()}, priors);
  return post.log_density(z);
}

Eigen::VectorXd grad_log_posterior(const ModelSpec& model, std::span<const double> z,
                                   std::span<const SubjectRecord> data, const PriorSpec& priors) {
  const Posterior post(model, {data.begin(), data.end()}, priors);
  Eigen::VectorXd grad;
  const double value = post.log_density_gradient(z, grad);
  if (!std::isfinite(value)) throw NumericalError("grad_log_posterior: log posterior is not finite at z");
  return grad;
}

}  // namespace qaft
