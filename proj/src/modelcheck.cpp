#include "qaft/modelcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"
#include "parallel.hpp"

namespace qaft {

using numerics::kInf;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double hi = v.maxCoeff();
  if (hi == -kInf) return -kInf;
  return hi + std::log((v.array() - hi).exp().sum());
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

namespace {

// Entries below the numerical floor come back as -inf.
Eigen::MatrixXd loglik_matrix(const ModelSpec& model, const PosteriorDraws& draws, std::span<const SubjectRecord> data,
                              int threads) {
  const ParameterLayout layout(model);
  if (draws.rows() == 0) throw ValidationError("pointwise_loglik: no draws");
  if (draws.constrained.cols() != layout.flat_dim()) throw ValidationError("pointwise_loglik: draws do not match the model");
  const Posterior post(model, std::vector<SubjectRecord>(data.begin(), data.end()), PriorSpec{});
  const int M = draws.rows();
  Eigen::MatrixXd ll(M, static_cast<Eigen::Index>(data.size()));
  detail::parallel_for(M, threads, [&](int m) {
    ll.row(m) = post.pointwise_loglik(draws.parameters(layout, m)).transpose();
  });
  return ll;
}

}  // namespace

Eigen::MatrixXd pointwise_loglik(const ModelSpec& model, const PosteriorDraws& draws,
                                 std::span<const SubjectRecord> data, int threads) {
  Eigen::MatrixXd ll = loglik_matrix(model, draws, data, threads);
  for (Eigen::Index i = 0; i < ll.cols(); ++i)
    for (Eigen::Index m = 0; m < ll.rows(); ++m)
      if (!std::isfinite(ll(m, i))) {
        std::ostringstream msg;
        msg << "pointwise_loglik: non-finite log-likelihood for subject " << i << " at draw " << m;
        throw NumericalError(msg.str());
      }
  return ll;
}

double generalized_pareto_quantile(double p, double k, double sigma) {
  if (std::fabs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

ParetoFit fit_generalized_pareto(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw DomainError("fit_generalized_pareto: need at least two exceedances");
  const double prior = 3.0;
  const int m = 30 + static_cast<int>(std::sqrt(static_cast<double>(n)));
  const double x_quarter = x[static_cast<std::size_t>(std::floor(n / 4.0 + 0.5)) - 1];
  const double x_max = x[n - 1];
  if (!(x_quarter > 0.0)) throw DomainError("fit_generalized_pareto: degenerate exceedances");

  auto mean_log1p = [&](double b) {
    double s = 0.0;
    for (double v : x) s += std::log1p(-b * v);
    return s / n;
  };
  Eigen::VectorXd b(m), L(m);
  for (int j = 0; j < m; ++j) {
    b(j) = (1.0 - std::sqrt(m / (j + 0.5))) / (prior * x_quarter) + 1.0 / x_max;
    const double k = mean_log1p(b(j));
    L(j) = n * (std::log(-b(j) / k) - k - 1.0);
  }
  // Posterior weights of the grid points, normalized in log space.
  Eigen::VectorXd w = (L.array() - log_sum_exp(L)).exp();
  double b_hat = 0.0, total = 0.0;
  for (int j = 0; j < m; ++j) {
    if (w(j) < 10.0 * std::numeric_limits<double>::epsilon()) continue;
    b_hat += w(j) * b(j);
    total += w(j);
  }
  b_hat /= total;
  ParetoFit fit;
  fit.k = mean_log1p(b_hat);
  fit.sigma = -fit.k / b_hat;
  // shrink toward 0.5 (weak prior worth 10 observations)
  fit.k = (fit.k * n + 10.0 * 0.5) / (n + 10.0);
  return fit;
}

double psis_smooth(std::span<const double> log_ratios, std::vector<double>& lw) {
  const int M = static_cast<int>(log_ratios.size());
  const double hi = *std::max_element(log_ratios.begin(), log_ratios.end());
  lw.resize(M);
  for (int m = 0; m < M; ++m) lw[m] = log_ratios[m] - hi;
  const int tail = static_cast<int>(std::ceil(std::min(0.2 * M, 3.0 * std::sqrt(static_cast<double>(M)))));
  if (tail < 5 || tail >= M) return kNaN;

  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lw[a] < lw[b]; });
  const double cutoff = lw[order[M - tail - 1]];
  const double exp_cutoff = std::exp(cutoff);
  std::vector<double> x(tail);
  for (int j = 0; j < tail; ++j) x[j] = std::exp(lw[order[M - tail + j]]) - exp_cutoff;
  if (!(x.back() > 0.0) || !(x[static_cast<std::size_t>(std::floor(tail / 4.0 + 0.5)) - 1] > 0.0)) return kNaN;

  const ParetoFit fit = fit_generalized_pareto(x);
  if (!std::isfinite(fit.k)) return kInf;
  for (int j = 0; j < tail; ++j) {
    const double q = generalized_pareto_quantile((j + 0.5) / tail, fit.k, fit.sigma) + exp_cutoff;
    lw[order[M - tail + j]] = std::min(std::log(q), 0.0);  // raw maximum is 0 after the shift
  }
  return fit.k;
}

void LooResult::update_totals() {
  elpd = elpd_i.sum();
  elpd_se = std::sqrt(static_cast<double>(elpd_i.size()) * sample_variance(elpd_i));
  minus2elpd = -2.0 * elpd;
  p_loo = lpd - elpd;
}

LooResult psis_loo(const Eigen::MatrixXd& ll) {
  const int M = static_cast<int>(ll.rows());
  const int n = static_cast<int>(ll.cols());
  if (M < 100) throw ValidationError("psis_loo: need at least 100 draws");
  if (!ll.allFinite()) throw NumericalError("psis_loo: non-finite log-likelihood values");
  LooResult r;
  r.num_draws = M;
  r.elpd_i.resize(n);
  r.khat.resize(n);
  std::vector<double> log_ratios(M), lw;
  int degenerate = 0;
  std::vector<int> bad;
  for (int i = 0; i < n; ++i) {
    const auto col = ll.col(i);
    r.lpd += log_sum_exp(col) - std::log(static_cast<double>(M));
    if (col.maxCoeff() == col.minCoeff()) {
      r.elpd_i(i) = col(0);
      r.khat(i) = kNaN;
      ++degenerate;
      continue;
    }
    for (int m = 0; m < M; ++m) log_ratios[m] = -col(m);
    r.khat(i) = psis_smooth(log_ratios, lw);
    if (std::isnan(r.khat(i))) ++degenerate;
    if (r.khat(i) > kKhatThreshold) bad.push_back(i);
    const Eigen::Map<const Eigen::VectorXd> w(lw.data(), M);
    r.elpd_i(i) = log_sum_exp(w + col) - log_sum_exp(w);
  }
  r.update_totals();
  if (degenerate > 0) {
    std::ostringstream msg;
    msg << degenerate << " subject(s) with degenerate importance ratios; khat undefined, smoothing skipped";
    r.warnings.push_back(msg.str());
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << bad.size() << " subject(s) with khat > " << kKhatThreshold << ":";
    for (int i : bad) msg << ' ' << i;
    r.warnings.push_back(msg.str());
  }
  return r;
}

LooDifference loo_difference(const LooResult& a, const LooResult& b) {
  if (a.n() != b.n()) throw ValidationError("loo comparison: results cover different numbers of subjects");
  const Eigen::VectorXd d = a.elpd_i - b.elpd_i;
  return {a.elpd - b.elpd, std::sqrt(static_cast<double>(d.size()) * sample_variance(d))};
}

std::vector<CompareRow> compare(std::span<const LooResult> results) {
  if (results.empty()) return {};
  for (const auto& r : results)
    if (r.n() != results[0].n()) throw ValidationError("loo comparison: results cover different numbers of subjects");
  std::vector<int> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return results[a].elpd > results[b].elpd; });
  std::vector<CompareRow> rows;
  const LooResult& best = results[order[0]];
  for (int idx : order) {
    const LooDifference d = loo_difference(results[idx], best);
    rows.push_back({idx, results[idx].elpd, d.elpd_diff, d.se});
  }
  return rows;
}

Eigen::VectorXd exact_loo_pointwise(const ModelSpec& model, std::span<const SubjectRecord> data,
                                    const PriorSpec& priors, const SamplerConfig& cfg, std::span<const int> subjects) {
  const int n = static_cast<int>(data.size());
  Eigen::VectorXd out(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const int i = subjects[s];
    if (i < 0 || i >= n) throw ValidationError("exact_loo: subject index out of range");
    std::vector<SubjectRecord> rest;
    rest.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) rest.push_back(data[j]);
    SamplerConfig c = cfg;
    c.seed = Rng(cfg.seed, 0x6c6f6fULL, static_cast<std::uint64_t>(i))();
    const PosteriorDraws draws = run_chains(model, std::move(rest), priors, c);
    // a held-out subject may fall below the floor for some draws; only the mean matters
    const Eigen::MatrixXd ll = loglik_matrix(model, draws, data.subspan(i, 1), cfg.threads);
    out(s) = log_sum_exp(ll.col(0)) - std::log(static_cast<double>(ll.rows()));
  }
  return out;
}

LooResult exact_loo(const ModelSpec& model, std::span<const SubjectRecord> data, const PriorSpec& priors,
                    const SamplerConfig& cfg) {
  const int n = static_cast<int>(data.size());
  if (n > kMaxExactLooSubjects) throw ValidationError("exact_loo: too many subjects for brute-force refits");
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  LooResult r;
  r.num_draws = cfg.chains * cfg.retained_per_chain();
  r.elpd_i = exact_loo_pointwise(model, data, priors, cfg, all);
  r.khat = Eigen::VectorXd::Constant(n, kNaN);
  r.lpd = kNaN;
  r.update_totals();
  return r;
}

std::vector<int> refit_high_khat(LooResult& result, const ModelSpec& model, std::span<const SubjectRecord> data,
                                 const PriorSpec& priors, const SamplerConfig& cfg, double threshold) {
  if (result.n() != static_cast<int>(data.size())) throw ValidationError("refit_high_khat: data do not match the result");
  std::vector<int> subjects;
  for (int i = 0; i < result.n(); ++i)
    if (result.khat(i) > threshold) subjects.push_back(i);
  if (subjects.empty()) return subjects;
  const Eigen::VectorXd exact = exact_loo_pointwise(model, data, priors, cfg, subjects);
  for (std::size_t s = 0; s < subjects.size(); ++s) result.elpd_i(subjects[s]) = exact(s);
  result.update_totals();
  std::ostringstream msg;
  msg << subjects.size() << " subject(s) refit exactly";
  result.warnings.push_back(msg.str());
  return subjects;
}

}  // namespace qaft
