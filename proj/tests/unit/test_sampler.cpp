#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"
#include "qaft/sampler.hpp"

using namespace qaft;

namespace {

DensityModel gaussian(int dim, double rho = 0.0) {
  DensityModel m;
  m.dim = dim;
  m.log_density_gradient = [dim, rho](std::span<const double> z, Eigen::VectorXd& g) {
    g.resize(dim);
    if (dim == 2 && rho != 0.0) {
      const double c = 1.0 / (1.0 - rho * rho);
      g(0) = -c * (z[0] - rho * z[1]);
      g(1) = -c * (z[1] - rho * z[0]);
      return -0.5 * c * (z[0] * z[0] - 2 * rho * z[0] * z[1] + z[1] * z[1]);
    }
    double lp = 0.0;
    for (int i = 0; i < dim; ++i) {
      g(i) = -z[i];
      lp -= 0.5 * z[i] * z[i];
    }
    return lp;
  };
  return m;
}

SamplerConfig config(int chains, int warmup, int iters, std::uint64_t seed) {
  SamplerConfig c;
  c.chains = chains;
  c.warmup = warmup;
  c.iters = iters;
  c.seed = seed;
  return c;
}

void check_moments(const PosteriorDraws& draws, int col) {
  const auto chains = draws.by_chain(col, false);
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.data(), c.data() + c.size());
  const double mean = numerics::mean(all);
  const double sd = std::sqrt(numerics::variance(all));
  const double mcse = sd / std::sqrt(ess(chains));
  EXPECT_LT(std::fabs(mean), 4 * mcse) << "column " << col;
  EXPECT_LT(std::fabs(sd - 1.0), 0.05) << "column " << col;
}

}  // namespace

TEST(Sampler, StandardNormalMoments) {
  const auto draws = run_nuts(gaussian(5), config(4, 500, 1000, 42));
  ASSERT_EQ(draws.rows(), 4000);
  for (int j = 0; j < 5; ++j) {
    check_moments(draws, j);
    EXPECT_LT(rhat(draws, j, false), 1.01);
  }
  EXPECT_EQ(draws.num_divergent(), 0);
}

TEST(Sampler, CorrelatedNormalMoments) {
  const auto draws = run_nuts(gaussian(2, 0.9), config(4, 1000, 1000, 7));
  for (int j = 0; j < 2; ++j) check_moments(draws, j);
  const Eigen::VectorXd a = draws.unconstrained.col(0), b = draws.unconstrained.col(1);
  const double corr = ((a.array() - a.mean()) * (b.array() - b.mean())).mean() /
                      std::sqrt((a.array() - a.mean()).square().mean() * (b.array() - b.mean()).square().mean());
  EXPECT_NEAR(corr, 0.9, 0.02);
}

TEST(Sampler, SeedDeterminismAndThreadInvariance) {
  auto cfg = config(3, 150, 100, 99);
  const auto a = run_nuts(gaussian(3), cfg);
  const auto b = run_nuts(gaussian(3), cfg);
  cfg.threads = 3;
  const auto c = run_nuts(gaussian(3), cfg);
  EXPECT_TRUE((a.unconstrained.array() == b.unconstrained.array()).all());
  EXPECT_TRUE((a.unconstrained.array() == c.unconstrained.array()).all());
  EXPECT_EQ(a.energy, c.energy);
  cfg.seed = 100;
  const auto d = run_nuts(gaussian(3), cfg);
  EXPECT_FALSE((a.unconstrained.array() == d.unconstrained.array()).all());
}

TEST(Sampler, ThinningAndLabels) {
  auto cfg = config(2, 100, 60, 5);
  cfg.thin = 3;
  const auto draws = run_nuts(gaussian(1), cfg);
  ASSERT_EQ(draws.rows(), 40);
  EXPECT_EQ(draws.chain[0], 0);
  EXPECT_EQ(draws.chain[39], 1);
  EXPECT_EQ(draws.iter[1], 3);
  cfg.thin = 7;
  EXPECT_THROW(run_nuts(gaussian(1), cfg), ValidationError);
}

TEST(Sampler, KolmogorovSmirnovOneDimensional) {
  const auto draws = run_nuts(gaussian(1), config(2, 500, 5000, 3));
  std::vector<double> v(draws.unconstrained.data(), draws.unconstrained.data() + draws.rows());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = numerics::normal_cdf(v[i]);
    ks = std::max({ks, std::fabs(F - i / n), std::fabs(F - (i + 1) / n)});
  }
  EXPECT_LT(ks, 0.03);
}

TEST(Sampler, LeapfrogEnergyConservation) {
  const auto target = gaussian(4);
  HmcState s;
  s.q = Eigen::VectorXd::LinSpaced(4, -1.0, 1.5);
  s.p = Eigen::VectorXd::LinSpaced(4, 0.7, -0.4);
  s.log_density = target.log_density_gradient({s.q.data(), 4}, s.grad);
  const Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(4);
  const double h0 = hamiltonian(s, inv_metric);
  leapfrog(target, inv_metric, 1e-4, s);
  EXPECT_LT(std::fabs(hamiltonian(s, inv_metric) - h0), 1e-6);
}

TEST(Sampler, RejectsStatesOutsideSupport) {
  // Half-normal on x > 0: proposals crossing zero have log density -inf.
  DensityModel m;
  m.dim = 1;
  m.log_density_gradient = [](std::span<const double> z, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Constant(1, -z[0]);
    return z[0] > 0.0 ? -0.5 * z[0] * z[0] : -numerics::kInf;
  };
  const auto draws = run_nuts(m, config(4, 500, 5000, 11));
  EXPECT_GT(draws.unconstrained.minCoeff(), 0.0);
  for (int r = 0; r < draws.rows(); ++r) EXPECT_TRUE(std::isfinite(draws.log_density[r]));
  EXPECT_GT(draws.num_divergent(), 0);
  // Half-normal mean sqrt(2/pi), sd sqrt(1 - 2/pi).
  const double mcse = std::sqrt(1.0 - 2.0 / M_PI) / std::sqrt(ess(draws, 0, false));
  EXPECT_NEAR(draws.unconstrained.mean(), std::sqrt(2.0 / M_PI), 4 * mcse);
}

TEST(Sampler, InitializationFailure) {
  DensityModel m;
  m.dim = 2;
  m.log_density_gradient = [](std::span<const double>, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(2);
    return -numerics::kInf;
  };
  EXPECT_THROW(run_nuts(m, config(1, 10, 10, 1)), NumericalError);
}

TEST(Diagnostics, RhatDuplicatedChains) {
  Rng rng(2024);
  const int half = 1000000;
  Eigen::VectorXd block(half);
  for (int i = 0; i < half; ++i) block(i) = rng.normal();
  Eigen::VectorXd chain(2 * half);
  chain << block, block;
  const std::vector<Eigen::VectorXd> chains{chain, chain};
  EXPECT_NEAR(rhat(chains), 1.0, 1e-6);
}

TEST(Diagnostics, RhatSeparatedChains) {
  Rng rng(1);
  Eigen::VectorXd a(1000), b(1000);
  for (int i = 0; i < 1000; ++i) {
    a(i) = rng.normal();
    b(i) = 5.0 + rng.normal();
  }
  const std::vector<Eigen::VectorXd> chains{a, b};
  EXPECT_GT(rhat(chains), 1.2);
  const std::vector<Eigen::VectorXd> one{a};
  EXPECT_THROW(rhat(one), ValidationError);
  const std::vector<Eigen::VectorXd> short_chains{a.head(50), b.head(50)};
  EXPECT_THROW(rhat(short_chains), ValidationError);
}

TEST(Diagnostics, EssReferenceCases) {
  Rng rng(77);
  const int M = 4000;
  Eigen::VectorXd iid(M);
  for (int i = 0; i < M; ++i) iid(i) = rng.normal();
  const double e_iid = ess(std::vector<Eigen::VectorXd>{iid});
  EXPECT_GE(e_iid, 3200);
  EXPECT_LE(e_iid, 4800);
  // A single AR(1) path of length 4000 gives a noisy estimate; average 10 independent paths.
  const double phi = 0.9;
  double total = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd ar(M);
    double x = rng.normal() / std::sqrt(1 - phi * phi);
    for (int i = 0; i < M; ++i) ar(i) = x = phi * x + rng.normal();
    total += ess(std::vector<Eigen::VectorXd>{ar});
  }
  const double expected = M * (1 - phi) / (1 + phi);
  EXPECT_NEAR(total / 10, expected, 0.3 * expected);
  EXPECT_EQ(ess(std::vector<Eigen::VectorXd>{Eigen::VectorXd::Constant(100, 3.0)}), 0.0);
}
