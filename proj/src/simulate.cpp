#include "qaft/simulate.hpp"

#include <cmath>
#include <sstream>

#include "qaft/errors.hpp"

namespace qaft {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
// A subject that needs this many proposals has acceptance probability below about 1e-4.
constexpr int kMaxTruncationAttempts = 10000;
}  // namespace

double CovariateGenerator::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Bernoulli:
      return rng.uniform() < a ? 1.0 : 0.0;
    case Kind::Normal:
      return a + b * rng.normal();
    case Kind::Uniform:
      return rng.uniform(a, b);
    case Kind::Constant:
      return a;
  }
  return a;
}

void CovariateGenerator::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) throw ValidationError("covariate generator: parameters must be finite");
  if (kind == Kind::Bernoulli && !(a >= 0.0 && a <= 1.0)) throw ValidationError("covariate generator: p must lie in [0, 1]");
  if (kind == Kind::Normal && !(b > 0.0)) throw ValidationError("covariate generator: sd must be positive");
  if (kind == Kind::Uniform && !(b > a)) throw ValidationError("covariate generator: upper must exceed lower");
}

void SimConfig::validate() const {
  model.validate();
  psi.validate(model);
  if (n < 1) throw ValidationError("simulate: n must be >= 1");
  if (static_cast<int>(covariates.size()) != model.num_covariates())
    throw ValidationError("simulate: need one covariate generator per model covariate");
  for (const auto& g : covariates) g.validate();
  if (!(entry_max >= 0.0) || !std::isfinite(entry_max)) throw ValidationError("simulate: entry_max must be finite and >= 0");
  if (!(admin_censor > 0.0)) throw ValidationError("simulate: administrative censoring time must be positive");
  if (!(admin_censor > entry_max)) throw ValidationError("simulate: administrative censoring must follow every entry time");
  if (!(censor_rate >= 0.0) || !std::isfinite(censor_rate)) throw ValidationError("simulate: censor_rate must be >= 0");
  if (!(visit_interval >= 0.0) || !std::isfinite(visit_interval)) throw ValidationError("simulate: visit_interval must be >= 0");
  if (model.time_varying) {
    if (!(onset_rate > 0.0) || !std::isfinite(onset_rate)) throw ValidationError("simulate: onset_rate must be positive");
    if (!(onset_never >= 0.0 && onset_never <= 1.0)) throw ValidationError("simulate: onset_never must lie in [0, 1]");
  }
}

double event_time_from_uniform(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, double u,
                               double onset) {
  const EffectTransform transform(model.effect);
  const Baseline base = baseline_for(model, psi);
  return subject_process(model, transform, psi, x, onset).inverse(base.inverse_survivor(u));
}

double draw_event_time(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, Rng& rng,
                       double onset) {
  return event_time_from_uniform(model, psi, x, rng.uniform(), onset);
}

std::vector<SubjectRecord> simulate_dataset(const SimConfig& cfg) {
  cfg.validate();
  const ModelSpec& model = cfg.model;
  const EffectTransform transform(model.effect);
  const Baseline base = baseline_for(model, cfg.psi);
  std::vector<SubjectRecord> data;
  data.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(i));
    SubjectRecord rec;
    // Redraw subjects censored before their first visit without delayed entry: they carry no
    // information and the decision depends only on the independent censoring time.
    do {
      rec = SubjectRecord{};
      for (const auto& g : cfg.covariates) rec.x.push_back(g.draw(rng));
      double onset = kInf;
      if (model.time_varying && !(rng.uniform() < cfg.onset_never)) onset = rng.exponential(cfg.onset_rate);
      const double entry = cfg.entry_max > 0.0 ? rng.uniform(0.0, cfg.entry_max) : 0.0;

      const SubjectProcess proc = subject_process(model, transform, cfg.psi, rec.x, onset);
      double t = 0.0;
      int attempts = 0;
      do {
        if (++attempts > kMaxTruncationAttempts) {
          std::ostringstream msg;
          msg << "simulate: truncation rejection sampling for subject " << i
              << " has acceptance below 1e-4; lower entry_max";
          throw ValidationError(msg.str());
        }
        t = proc.inverse(base.inverse_survivor(rng.uniform()));
      } while (!(t > entry));

      double censor = cfg.admin_censor;
      if (cfg.censor_rate > 0.0) censor = std::min(censor, entry + rng.exponential(cfg.censor_rate));
      rec.truncation = entry;

      if (cfg.visit_interval > 0.0) {
        // Visits at entry + k * interval up to the censoring time.
        const double k = std::floor((t - entry) / cfg.visit_interval);
        const double after = entry + (k + 1.0) * cfg.visit_interval;
        if (after <= censor) {
          rec.y_lower = entry + k * cfg.visit_interval;
          rec.y_upper = after;
        } else {
          rec.y_lower = entry + std::floor((censor - entry) / cfg.visit_interval) * cfg.visit_interval;
          rec.y_upper = kInf;
        }
      } else if (t <= censor) {
        rec.y_lower = rec.y_upper = t;
        rec.event = true;
      } else {
        rec.y_lower = censor;
        rec.y_upper = kInf;
      }
      // The switch is only observable before the end of follow-up.
      rec.onset = onset < rec.follow_up() ? onset : kInf;
    } while (rec.right_censored() && rec.y_lower == 0.0);
    data.push_back(rec);
  }
  return data;
}

std::vector<SubjectRecord> intervals_to_midpoints(std::span<const SubjectRecord> data) {
  std::vector<SubjectRecord> out(data.begin(), data.end());
  for (auto& r : out) {
    if (r.event || r.right_censored()) continue;
    const double mid = 0.5 * (r.y_lower + r.y_upper);
    r.y_lower = r.y_upper = mid;
    r.event = true;
  }
  return out;
}

}  // namespace qaft
