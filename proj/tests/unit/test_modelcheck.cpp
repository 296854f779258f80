#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qaft/errors.hpp"
#include "qaft/modelcheck.hpp"
#include "qaft/rng.hpp"
#include "../support/random_models.hpp"

using namespace qaft;

namespace {

double log_normal_pdf(double y, double mean, double var) {
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (y - mean) * (y - mean) / var;
}

// Conjugate normal-mean model with known unit variance and N(0, tau0^2) prior: exact posterior
// draws give the log-likelihood matrix; the leave-one-out predictive is again normal.
struct ConjugateToy {
  std::vector<double> y;
  Eigen::MatrixXd ll;
  Eigen::VectorXd exact_elpd_i;
};

ConjugateToy conjugate_toy(int n, int M, std::uint64_t seed) {
  const double tau0_sq = 100.0;
  Rng rng(seed);
  ConjugateToy toy;
  for (int i = 0; i < n; ++i) toy.y.push_back(0.7 + rng.normal());
  const double sum = std::accumulate(toy.y.begin(), toy.y.end(), 0.0);
  const double post_var = 1.0 / (1.0 / tau0_sq + n);
  const double post_mean = post_var * sum;
  toy.ll.resize(M, n);
  for (int m = 0; m < M; ++m) {
    const double theta = post_mean + std::sqrt(post_var) * rng.normal();
    for (int i = 0; i < n; ++i) toy.ll(m, i) = log_normal_pdf(toy.y[i], theta, 1.0);
  }
  toy.exact_elpd_i.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = 1.0 / (1.0 / tau0_sq + (n - 1));
    const double mean = v * (sum - toy.y[i]);
    toy.exact_elpd_i(i) = log_normal_pdf(toy.y[i], mean, 1.0 + v);
  }
  return toy;
}

}  // namespace

TEST(PointwiseLoglik, MatchesDirectCallsAndTotals) {
  auto prob = fixtures::random_problem(4, 12, 31);
  std::mt19937_64 rng(5);
  std::vector<ParameterVector> psis{prob.psi, fixtures::random_parameters(prob.model, rng)};
  const ParameterLayout layout(prob.model);
  const auto draws = draws_from_parameters(layout, psis);
  const Eigen::MatrixXd ll = pointwise_loglik(prob.model, draws, prob.data);
  ASSERT_EQ(ll.rows(), 2);
  ASSERT_EQ(ll.cols(), 12);
  for (int m = 0; m < 2; ++m) {
    for (int i = 0; i < 12; ++i) EXPECT_EQ(ll(m, i), loglik_subject(prob.model, psis[m], prob.data[i]));
    EXPECT_NEAR(ll.row(m).sum(), loglik_total(prob.model, psis[m], prob.data), 1e-10);
  }
  std::vector<SubjectRecord> reversed(prob.data.rbegin(), prob.data.rend());
  const Eigen::MatrixXd rl = pointwise_loglik(prob.model, draws, reversed, 2);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(rl.col(i), ll.col(11 - i));
}

TEST(Psis, ParetoFitRecoversKnownShape) {
  for (double k : {0.2, 0.6}) {
    Rng rng(17);
    std::vector<double> x;
    for (int j = 0; j < 20000; ++j) x.push_back(2.0 / k * (std::pow(1.0 - rng.uniform(), -k) - 1.0));
    std::sort(x.begin(), x.end());
    const ParetoFit fit = fit_generalized_pareto(x);
    EXPECT_NEAR(fit.k, k, 0.05);
    EXPECT_NEAR(fit.sigma, 2.0, 0.1);
  }
  EXPECT_NEAR(generalized_pareto_quantile(0.5, 0.0, 1.0), std::log(2.0), 1e-15);
}

TEST(Psis, SmoothingTouchesOnlyTheTailAndCaps) {
  Rng rng(3);
  const int M = 1000;
  std::vector<double> lr(M), lw;
  for (auto& v : lr) v = 2.0 * rng.normal();
  const double khat = psis_smooth(lr, lw);
  EXPECT_TRUE(std::isfinite(khat));
  const double hi = *std::max_element(lr.begin(), lr.end());
  const int tail = static_cast<int>(std::ceil(std::min(0.2 * M, 3.0 * std::sqrt(M))));
  std::vector<double> sorted = lr;
  std::sort(sorted.begin(), sorted.end());
  const double cutoff = sorted[M - tail - 1];
  int changed = 0;
  for (int m = 0; m < M; ++m) {
    EXPECT_LE(lw[m], 0.0);
    if (lr[m] <= cutoff)
      EXPECT_EQ(lw[m], lr[m] - hi);
    else
      changed += lw[m] != lr[m] - hi;
  }
  EXPECT_GT(changed, 0);
}

TEST(Psis, ConjugateNormalMatchesExactLoo) {
  const auto toy = conjugate_toy(20, 4000, 11);
  const LooResult r = psis_loo(toy.ll);
  const double exact = toy.exact_elpd_i.sum();
  EXPECT_LT(std::fabs(r.elpd - exact), 2.0 * r.elpd_se);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(r.elpd_i(i), toy.exact_elpd_i(i), 0.02);
  EXPECT_EQ(r.minus2elpd, -2.0 * r.elpd);
  EXPECT_LT(r.elpd, r.lpd);
  EXPECT_LT((r.khat.array() > kKhatThreshold).count(), 1);
}

TEST(Psis, IdenticalDrawsAreDegenerate) {
  Eigen::MatrixXd ll(200, 3);
  ll.rowwise() = Eigen::RowVector3d(-1.5, -0.25, -3.0);
  const LooResult r = psis_loo(ll);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(r.elpd_i(i), ll(0, i));
    EXPECT_TRUE(std::isnan(r.khat(i)));
  }
  EXPECT_EQ(r.elpd, -4.75);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("degenerate"), std::string::npos);
}

TEST(Psis, HeavyTailFlagsKhat) {
  // One subject's likelihood is nearly zero for most draws: very heavy importance tail.
  Rng rng(8);
  Eigen::MatrixXd ll(1000, 2);
  for (int m = 0; m < 1000; ++m) {
    ll(m, 0) = -0.5 * rng.normal() * rng.normal();
    ll(m, 1) = -30.0 * std::fabs(rng.normal()) * rng.exponential(1.0);
  }
  const LooResult r = psis_loo(ll);
  EXPECT_LT(r.khat(0), kKhatThreshold);
  EXPECT_GT(r.khat(1), kKhatThreshold);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.back().find("khat"), std::string::npos);
}

TEST(Psis, Preconditions) {
  EXPECT_THROW(psis_loo(Eigen::MatrixXd::Zero(99, 2)), ValidationError);
  Eigen::MatrixXd ll = Eigen::MatrixXd::Zero(100, 2);
  ll(3, 1) = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(psis_loo(ll), NumericalError);
}

TEST(LooCompare, SelfShiftAndOrdering) {
  const auto toy = conjugate_toy(20, 1000, 12);
  const LooResult a = psis_loo(toy.ll);
  const LooDifference self = loo_difference(a, a);
  EXPECT_EQ(self.elpd_diff, 0.0);
  EXPECT_EQ(self.se, 0.0);

  LooResult b = a;
  b.elpd_i.array() -= 1.0;
  b.update_totals();
  const LooDifference d = loo_difference(a, b);
  EXPECT_NEAR(d.elpd_diff, 20.0, 1e-10);
  EXPECT_NEAR(d.se, 0.0, 1e-12);

  const std::vector<LooResult> both{b, a};
  const auto rows = compare(both);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].index, 1);
  EXPECT_EQ(rows[0].elpd_diff, 0.0);
  EXPECT_NEAR(rows[1].elpd_diff, -20.0, 1e-10);

  LooResult c = psis_loo(conjugate_toy(21, 1000, 12).ll);
  EXPECT_THROW(loo_difference(a, c), ValidationError);
  const std::vector<LooResult> mixed{a, c};
  EXPECT_THROW(compare(mixed), ValidationError);
}

TEST(ExactLoo, RefitReplacesFlaggedSubjects) {
  auto prob = fixtures::random_problem(0, 8, 41);
  SamplerConfig cfg;
  cfg.chains = 1;
  cfg.warmup = 100;
  cfg.iters = 100;
  const auto draws = run_chains(prob.model, prob.data, PriorSpec{}, cfg);
  LooResult r = psis_loo(pointwise_loglik(prob.model, draws, prob.data));
  const LooResult before = r;
  const auto refit = refit_high_khat(r, prob.model, prob.data, PriorSpec{}, cfg, -1.0);
  ASSERT_EQ(refit.size(), 8u);
  const std::vector<int> one{3};
  const Eigen::VectorXd direct = exact_loo_pointwise(prob.model, prob.data, PriorSpec{}, cfg, one);
  EXPECT_EQ(r.elpd_i(3), direct(0));
  EXPECT_EQ(r.elpd, r.elpd_i.sum());
  EXPECT_EQ(r.lpd, before.lpd);
  EXPECT_EQ(r.warnings.size(), before.warnings.size() + 1);
}
