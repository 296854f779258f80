#include "qaft/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"
#include "parallel.hpp"

namespace qaft {

using numerics::kInf;

double quantile_time(const ModelSpec& model, const ParameterVector& psi, std::span<const double> x, double p,
                     double onset) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile_time: p must lie in (0, 1)");
  if (static_cast<int>(x.size()) != model.num_covariates()) throw DomainError("quantile_time: covariate length mismatch");
  const EffectTransform transform(model.effect);
  const Baseline base = baseline_for(model, psi);
  const SubjectProcess proc = subject_process(model, transform, psi, x, onset);
  return proc.inverse(base.inverse_survivor(p));
}

double acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, std::span<const double> x,
                           std::span<const double> x_ref) {
  return acceleration_factor(model, psi, p, x, kInf, x_ref, kInf);
}

double acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, std::span<const double> x,
                           double onset, std::span<const double> x_ref, double onset_ref) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("acceleration_factor: p must lie in (0, 1)");
  const EffectTransform transform(model.effect);
  const Baseline base = baseline_for(model, psi);
  const double u = base.inverse_survivor(p);
  const double num = subject_process(model, transform, psi, x, onset).inverse(u);
  const double den = subject_process(model, transform, psi, x_ref, onset_ref).inverse(u);
  return num / den;
}

double tv_af_closed_form(double beta1, double beta2_term, double onset, double s0_quantile) {
  const double t_ref = s0_quantile * std::exp(beta2_term);
  if (t_ref <= onset) return 1.0;
  const double frac = onset / t_ref;
  return frac + std::exp(beta1) * (1.0 - frac);
}

double tv_acceleration_factor(const ModelSpec& model, const ParameterVector& psi, double p, double onset,
                              std::span<const double> x2) {
  if (!model.time_varying) throw DomainError("tv_acceleration_factor: model has no time-varying covariate");
  if (model.effect.kind != EffectKind::Constant)
    throw DomainError("tv_acceleration_factor: closed form needs a constant time-varying effect");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("tv_acceleration_factor: p must lie in (0, 1)");
  const int d = model.num_covariates();
  if (static_cast<int>(x2.size()) != d) throw DomainError("tv_acceleration_factor: covariate length mismatch");
  double eta = 0.0;
  for (int j = 0; j < d; ++j) eta += psi.beta(j) * x2[j];
  const Baseline base = baseline_for(model, psi);
  return tv_af_closed_form(psi.beta(d), eta, onset, base.inverse_survivor(p));
}

StandardizationPopulation::StandardizationPopulation(const ModelSpec& model, std::span<const SubjectRecord> data,
                                                     const Exposure& exposure)
    : model_(model), onset_(model.time_varying ? exposure.onset : kInf) {
  if (data.empty()) throw ValidationError("standardization: dataset is empty");
  if (exposure.covariate >= model.num_covariates()) throw ValidationError("standardization: exposure index out of range");
  if (!model.time_varying && exposure.onset != kInf)
    throw ValidationError("standardization: onset given for a time-invariant model");
  if (model.time_varying && !(exposure.onset > 0.0)) throw ValidationError("standardization: onset must be positive");
  std::map<std::vector<double>, int> counts;
  double group_max = 0.0, all_max = 0.0;
  for (const auto& rec : data) {
    std::vector<double> x = rec.x;
    bool member = true;
    if (exposure.covariate >= 0) {
      member = x[exposure.covariate] == exposure.level;
      x[exposure.covariate] = exposure.level;
    }
    if (model.time_varying) member = member && ((rec.onset < kInf) == (exposure.onset < kInf));
    ++counts[x];
    all_max = std::max(all_max, rec.follow_up());
    if (member) group_max = std::max(group_max, rec.follow_up());
  }
  max_follow_up_ = group_max > 0.0 ? group_max : all_max;
  total_ = static_cast<double>(data.size());
  for (const auto& [x, c] : counts) {
    patterns_.push_back(x);
    counts_.push_back(c);
  }
}

StandardizedCurve::StandardizedCurve(const StandardizationPopulation& pop, const ParameterVector& psi)
    : pop_(pop), psi_(psi), transform_(pop.model().effect), base_(baseline_for(pop.model(), psi)) {
  processes_.reserve(pop.size());
  for (const auto& x : pop.patterns()) processes_.push_back(subject_process(pop.model(), transform_, psi_, x, pop.onset()));
}

double StandardizedCurve::survivor(double t) const {
  if (!(t >= 0.0)) throw DomainError("standardized survivor: t must be non-negative");
  // Summing counts times survivors and dividing once keeps the result inside [0, 1].
  double total = 0.0;
  for (std::size_t i = 0; i < processes_.size(); ++i)
    total += pop_.counts()[i] * std::exp(base_.log_survivor(processes_[i].value(t)));
  return total / pop_.total();
}

double StandardizedCurve::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("standardized quantile: p must lie in (0, 1)");
  const double u = base_.inverse_survivor(p);
  double lo = kInf, hi = 0.0;
  for (const auto& proc : processes_) {
    const double q = proc.inverse(u);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (lo == hi) return lo;
  const auto& c = pop_.counts();
  const double n = pop_.total();
  auto objective = [&](double y) -> std::pair<double, double> {
    const double t = std::exp(y);
    double s = 0.0, dens = 0.0;
    for (std::size_t i = 0; i < processes_.size(); ++i) {
      const double v = processes_[i].value(t);
      s += c[i] * std::exp(base_.log_survivor(v));
      if (v > 0.0) dens += c[i] * std::exp(base_.log_density(v)) * processes_[i].slope(t);
    }
    return {p - s / n, dens / n * t};
  };
  // The mean of the individual survivors crosses p between the extreme individual quantiles;
  // the small widening absorbs rounding in those quantiles.
  const double y = numerics::solve_increasing(objective, std::log(lo) - 1e-9, std::log(hi) + 1e-9, 1e-14, 0.0);
  return std::exp(y);
}

double standardized_survivor(const ModelSpec& model, const ParameterVector& psi, std::span<const SubjectRecord> data,
                             const Exposure& exposure, double t) {
  const StandardizationPopulation pop(model, data, exposure);
  return StandardizedCurve(pop, psi).survivor(t);
}

CurveRow summarize_values(double abscissa, const std::string& group, std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize_values: no draws");
  CurveRow row;
  row.abscissa = abscissa;
  row.group = group;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  row.mean = numerics::mean(values);
  row.median = numerics::quantile_sorted(sorted, 0.5);
  row.lo95 = numerics::quantile_sorted(sorted, 0.025);
  row.hi95 = numerics::quantile_sorted(sorted, 0.975);
  // The mean of identical values can differ from them in the last bit.
  if (sorted.front() == sorted.back()) row.mean = sorted.front();
  return row;
}

std::vector<double> default_p_grid() {
  std::vector<double> p;
  for (int i = 1; i <= 99; ++i) p.push_back(i / 100.0);
  return p;
}

namespace {

using detail::parallel_for;

void check_draws(const ModelSpec& model, const PosteriorDraws& draws) {
  if (draws.rows() == 0) throw ValidationError("draws are empty");
  if (draws.constrained.cols() != ParameterLayout(model).flat_dim())
    throw ValidationError("draws do not match the model");
}

}  // namespace

StandardizedAfResult standardized_af(const ModelSpec& model, const PosteriorDraws& draws,
                                     std::span<const SubjectRecord> data, const Exposure& exposed,
                                     const Exposure& reference, std::span<const double> p_grid,
                                     const std::string& label, int threads) {
  check_draws(model, draws);
  for (double p : p_grid)
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("standardized_af: p grid values must lie in (0, 1)");
  const ParameterLayout layout(model);
  const StandardizationPopulation pop_e(model, data, exposed);
  const StandardizationPopulation pop_r(model, data, reference);
  const int M = draws.rows();
  const int P = static_cast<int>(p_grid.size());
  StandardizedAfResult result;
  result.values.resize(M, P);
  Eigen::MatrixXd tail(M, 2);
  parallel_for(M, threads, [&](int m) {
    const ParameterVector psi = draws.parameters(layout, m);
    const StandardizedCurve curve_e(pop_e, psi);
    const StandardizedCurve curve_r(pop_r, psi);
    for (int j = 0; j < P; ++j) {
      try {
        result.values(m, j) = curve_e.quantile(p_grid[j]) / curve_r.quantile(p_grid[j]);
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "standardized_af: draw " << m << ", p = " << p_grid[j] << ": " << e.what();
        throw NumericalError(msg.str());
      }
    }
    tail(m, 0) = curve_e.survivor(pop_e.max_follow_up());
    tail(m, 1) = curve_r.survivor(pop_r.max_follow_up());
  });
  result.max_survivor = {tail.col(0).mean(), tail.col(1).mean()};
  const double threshold = std::max(result.max_survivor[0], result.max_survivor[1]);
  std::vector<double> column(M);
  for (int j = 0; j < P; ++j) {
    for (int m = 0; m < M; ++m) column[m] = result.values(m, j);
    CurveRow row = summarize_values(p_grid[j], label, column);
    row.extrapolated = p_grid[j] < threshold;
    result.table.rows.push_back(row);
  }
  return result;
}

CurveTable standardized_survivor_curves(const ModelSpec& model, const PosteriorDraws& draws,
                                        std::span<const SubjectRecord> data, std::span<const Exposure> groups,
                                        std::span<const double> t_grid, int threads) {
  check_draws(model, draws);
  for (double t : t_grid)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("standardized survivor: time grid must be finite and >= 0");
  const ParameterLayout layout(model);
  const int M = draws.rows();
  const int T = static_cast<int>(t_grid.size());
  CurveTable table;
  for (const Exposure& g : groups) {
    const StandardizationPopulation pop(model, data, g);
    Eigen::MatrixXd values(M, T);
    parallel_for(M, threads, [&](int m) {
      const ParameterVector psi = draws.parameters(layout, m);
      const StandardizedCurve curve(pop, psi);
      for (int j = 0; j < T; ++j) values(m, j) = curve.survivor(t_grid[j]);
    });
    std::vector<double> column(M);
    for (int j = 0; j < T; ++j) {
      for (int m = 0; m < M; ++m) column[m] = values(m, j);
      CurveRow row = summarize_values(t_grid[j], g.label, column);
      row.extrapolated = t_grid[j] > pop.max_follow_up();
      table.rows.push_back(row);
    }
  }
  return table;
}

std::string format_onset(double onset) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", onset);
  return buf;
}

CurveTable af_surface(const ModelSpec& model, const PosteriorDraws& draws, std::span<const SubjectRecord> data,
                      std::span<const double> onset_grid, std::span<const double> p_grid, int threads) {
  if (!model.time_varying) throw ValidationError("af_surface: the model has no time-varying covariate");
  Exposure never;
  never.label = "never";
  CurveTable table;
  for (double onset : onset_grid) {
    Exposure at;
    at.onset = onset;
    at.label = format_onset(onset);
    const auto slice = standardized_af(model, draws, data, at, never, p_grid, at.label, threads);
    table.rows.insert(table.rows.end(), slice.table.rows.begin(), slice.table.rows.end());
  }
  return table;
}

std::vector<double> default_onset_grid(std::span<const SubjectRecord> data, int points) {
  if (points < 1) throw ValidationError("onset grid needs at least one point");
  double t_max = 0.0;
  for (const auto& r : data) t_max = std::max(t_max, r.follow_up());
  if (!(t_max > 0.0)) throw ValidationError("onset grid: no positive follow-up times");
  std::vector<double> grid;
  for (int i = 1; i <= points; ++i) grid.push_back(t_max * i / points);
  return grid;
}

}  // namespace qaft
