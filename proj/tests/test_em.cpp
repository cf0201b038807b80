#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmrf/checks.hpp"
#include "gmrf/degrade.hpp"
#include "gmrf/em.hpp"
#include "gmrf/em_spectral.hpp"
#include "gmrf/oracle.hpp"

using namespace gmrf;

namespace {

// ln p(Y | Theta) from the dense free energies.
double log_likelihood(const LatticeSpec& s, const ObservationSet& obs, const Hyperparams& th) {
  const double nk = static_cast<double>(s.size() * obs.k_count());
  return oracle::prior_free_energy(s, th) - oracle::posterior_free_energy(s, obs, th) -
         0.5 * nk * std::log(2.0 * kPi * th.sigma2);
}

ObservationSet noisy_zero(std::size_t v, std::size_t k, double sigma, std::uint64_t seed) {
  const LatticeSpec s(v);
  return center(degrade(s, ImageBuffer(s.size()), {sigma, k, seed})).obs;
}

}  // namespace

TEST(EMConfig, DefaultsAndValidation) {
  const EMConfig c;
  EXPECT_EQ(c.eta_b, 1e-9);
  EXPECT_EQ(c.eta_alpha, 1e-9);
  EXPECT_EQ(c.eta_lambda, 1e-13);
  EXPECT_EQ(c.t_m, 1u);
  EXPECT_EQ(c.t_mf, 1u);
  EXPECT_EQ(c.epsilon, 1e-5);
  EXPECT_EQ(c.max_em_iters, 100u);
  EXPECT_EQ(c.theta_init, (Hyperparams{2000.0, 0.0, 1e-7, 1e-4}));
  EXPECT_NO_THROW(c.validate());
  EMConfig bad = c;
  bad.t_mf = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.eta_b = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.theta_init.lambda = 0;
  EXPECT_THROW(bad.validate(), std::domain_error);
}

TEST(RunEm, ZeroIterationsReturnsInit) {
  const ObservationSet obs = noisy_zero(8, 2, 30.0, 1);
  EMConfig c;
  c.max_em_iters = 0;
  const auto tr = run_em(obs.spec(), obs, c);
  EXPECT_EQ(tr.theta, c.theta_init);
  EXPECT_FALSE(tr.converged);
  EXPECT_EQ(tr.iterations_used, 0u);
  EXPECT_EQ(tr.m, obs.avg());
}

TEST(RunEm, RecoversNoiseLevelOnFlatImage) {
  const ObservationSet obs = noisy_zero(64, 4, 30.0, 2);
  const auto tr = run_em(obs.spec(), obs, EMConfig{});
  const double sigma = std::sqrt(tr.theta.sigma2);
  EXPECT_GE(sigma, 25.5);
  EXPECT_LE(sigma, 34.5);
  EXPECT_NEAR(tr.theta.b, tr.theta.lambda * obs.avg_intensity(), 1e-6);
  EXPECT_LE(tr.iterations_used, 100u);
  if (tr.converged) { EXPECT_LT(tr.records.back().max_param_delta, 1e-5); }
}

TEST(RunEm, SelfConsistentOnModelData) {
  const LatticeSpec s(64);
  const Hyperparams truth{900.0, 0.0, 1e-4, 5e-3};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ImageBuffer x = sample_prior(s, truth, 100 + seed);
    const ObservationSet obs = center(degrade(s, x, {30.0, 8, 200 + seed})).obs;
    const auto tr = run_em(s, obs, EMConfig{});
    EXPECT_NEAR(tr.theta.sigma2, truth.sigma2, 0.15 * truth.sigma2) << seed;
    EXPECT_GT(tr.theta.alpha, truth.alpha / 2) << seed;
    EXPECT_LT(tr.theta.alpha, truth.alpha * 2) << seed;
  }
}

TEST(RunEm, FloorsAndSmallBHoldThroughout) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const LatticeSpec s(32);
    const ObservationSet obs = center(degrade(s, natural_scene(s), {15.0 + 10 * seed, 1 + seed, seed})).obs;
    EMConfig c;
    c.lambda_floor = 1e-9;  // the raw step would go below this
    const auto tr = run_em(s, obs, c);
    for (const auto& rec : tr.records) {
      EXPECT_GE(rec.theta.lambda, c.lambda_floor);
      EXPECT_GE(rec.theta.alpha, c.alpha_floor);
      EXPECT_GE(rec.theta.sigma2, c.sigma2_floor);
      EXPECT_LT(std::fabs(rec.theta.b), 1e-4);
    }
  }
}

TEST(RunEm, PixelTouchesAreLinearInN) {
  EMConfig c;
  c.max_em_iters = 3;
  double prev = 0;
  for (std::size_t v : {64u, 128u, 256u}) {
    const ObservationSet obs = noisy_zero(v, 1, 30.0, 3);
    const auto tr = run_em(obs.spec(), obs, c);
    const double per_iter = static_cast<double>(tr.records.back().pixel_touches);
    EXPECT_LE(per_iter, 6.0 * v * v);
    if (prev > 0) {
      EXPECT_GE(per_iter / prev, 3.8);
      EXPECT_LE(per_iter / prev, 4.2);
    }
    prev = per_iter;
  }
}

TEST(RunEm, AscendsLogLikelihood) {
  for (bool reinit : {false, true}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const LatticeSpec s(8);
      const ObservationSet obs = center(degrade(s, natural_scene(s), {30.0, 1 + seed, seed})).obs;
      EMConfig c;
      c.use_alpha_init = reinit;
      c.max_em_iters = 30;
      const auto tr = oracle::run_em_dense(s, obs, c);
      double prev = log_likelihood(s, obs, c.theta_init);
      for (const auto& rec : tr.records) {
        const double ll = log_likelihood(s, obs, rec.theta);
        EXPECT_GE(ll, prev - 1e-8 * std::fabs(prev)) << reinit << " " << seed;
        prev = ll;
      }
    }
  }
}

TEST(RunEm, LinearTracksDenseEm) {
  const LatticeSpec s(16);
  const ObservationSet obs = center(degrade(s, natural_scene(s), {30.0, 3, 5})).obs;
  EMConfig c;
  const auto lin = run_em(s, obs, c);
  const auto den = oracle::run_em_dense(s, obs, c);
  EXPECT_NEAR(lin.theta.sigma2, den.theta.sigma2, 1e-2 * den.theta.sigma2);
  EXPECT_NEAR(lin.theta.alpha, den.theta.alpha, 1e-2 * den.theta.alpha);
}

TEST(RunEm, NonFiniteGradientAborts) {
  const LatticeSpec s(8);
  const ObservationSet obs = noisy_zero(8, 1, 30.0, 4);
  EMConfig c;
  c.eta_b = 1e308;
  c.theta_init.b = 1e300;
  try {
    (void)run_em(s, obs, c);
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_GE(e.trace().iterations_used, 1u);
    EXPECT_FALSE(e.trace().records.empty());
  }
}

TEST(RunEm, DeterministicAcrossRuns) {
  const ObservationSet obs = noisy_zero(32, 2, 20.0, 6);
  const auto a = run_em(obs.spec(), obs, EMConfig{});
  const auto b = run_em(obs.spec(), obs, EMConfig{});
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.m, b.m);
}

TEST(Restore, ZeroAlphaScalesAverage) {
  std::mt19937_64 rng(7);
  const LatticeSpec s(6);
  const auto obs = checks::random_problem(s, rng).obs;
  const Hyperparams th{80.0, 0.0, 1e-3, 0.0};
  const auto m = restore(s, obs, th, 10);
  const double beta = data_precision(obs, th);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(m[i], beta * obs.avg()[i] / (th.lambda + beta), 1e-12);
}

TEST(Restore, MatchesDenseSolve) {
  std::mt19937_64 rng(8);
  const LatticeSpec s(8);
  for (int i = 0; i < 10; ++i) {
    const auto [obs, th] = checks::random_problem(s, rng, 1e-3, 1e-1);
    const auto m = restore(s, obs, th, 1000000, nullptr, 1e-13);
    const auto dense = oracle::build_posterior(s, obs, th).mean();
    EXPECT_LT((oracle::to_eigen(m) - dense).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Restore, MatchesSpectralMean) {
  std::mt19937_64 rng(9);
  const LatticeSpec s(32);
  const auto spectrum = cached_eigenvalues(s, Boundary::Free);
  const TransformPlan plan(s, Boundary::Free);
  for (int i = 0; i < 5; ++i) {
    const auto [obs, th] = checks::random_problem(s, rng);
    const auto m = restore(s, obs, th, 2000000, nullptr, 1e-12);
    const auto w = spectral_map(s, *spectrum, plan, make_spectral_obs(plan, obs), obs, th);
    EXPECT_LT((oracle::to_eigen(m) - oracle::to_eigen(w)).cwiseAbs().maxCoeff(), 1e-6);
  }
}
