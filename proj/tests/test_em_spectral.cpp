#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmrf/checks.hpp"
#include "gmrf/degrade.hpp"
#include "gmrf/em.hpp"
#include "gmrf/em_spectral.hpp"

using namespace gmrf;

TEST(SpectralGradients, ZeroDataLeavesTraceOnly) {
  const LatticeSpec s(6);
  const auto t = eigenvalues(s, Boundary::Free);
  const TransformPlan plan(s, Boundary::Free);
  const ObservationSet obs(s, {ImageBuffer(s.size()), ImageBuffer(s.size())});
  const Hyperparams th{50.0, 0.0, 1e-3, 0.2};
  const auto g = spectral_posterior_gradients(s, t, make_spectral_obs(plan, obs), obs, th);
  const auto tr = trace_sums(t, th.lambda + 2.0 / th.sigma2, th.alpha);
  EXPECT_NEAR(g.d_lambda, 0.5 * tr.inv, 1e-12 * tr.inv);
  EXPECT_NEAR(g.d_alpha, 0.5 * tr.phi_inv, 1e-12 * tr.phi_inv);
  EXPECT_EQ(g.d_b, 0.0);
}

TEST(SpectralGradients, EqualMeanFieldGradients) {
  std::mt19937_64 rng(1);
  const LatticeSpec s(8);
  const auto t = eigenvalues(s, Boundary::Free);
  const TransformPlan plan(s, Boundary::Free);
  for (int i = 0; i < 20; ++i) {
    const auto [obs, th] = checks::random_problem(s, rng);
    const auto sg = spectral_posterior_gradients(s, t, make_spectral_obs(plan, obs), obs, th);
    const auto mg = posterior_gradients(s, t, obs, th, checks::converged_mean(s, obs, th));
    EXPECT_LT(checks::rel_err(sg.d_b, mg.d_b), 1e-8);
    EXPECT_LT(checks::rel_err(sg.d_lambda, mg.d_lambda), 1e-8);
    EXPECT_LT(checks::rel_err(sg.d_alpha, mg.d_alpha), 1e-8);
    EXPECT_LT(checks::rel_err(sg.d_sigma2, mg.d_sigma2), 1e-8);
  }
}

TEST(SpectralGradients, BoundaryMismatchThrows) {
  const LatticeSpec s(4);
  const auto t = eigenvalues(s, Boundary::Free);
  const TransformPlan torus(s, Boundary::Torus);
  const ObservationSet obs(s, {ImageBuffer(16)});
  EXPECT_THROW(spectral_moments(s, t, make_spectral_obs(torus, obs), obs, Hyperparams{}),
               std::invalid_argument);
}

TEST(SpectralMap, ZeroAlphaIsPixelwise) {
  std::mt19937_64 rng(2);
  const LatticeSpec s(7);
  const auto t = eigenvalues(s, Boundary::Free);
  const TransformPlan plan(s, Boundary::Free);
  auto [obs, th] = checks::random_problem(s, rng);
  th.alpha = 0.0;
  const auto m = spectral_map(s, t, plan, make_spectral_obs(plan, obs), obs, th);
  const double beta = data_precision(obs, th);
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_NEAR(m[i], (th.b + beta * obs.avg()[i]) / (th.lambda + beta), 1e-10);
}

TEST(SpectralMap, AllOnesAverageGivesConstant) {
  const LatticeSpec s(9);
  const auto t = eigenvalues(s, Boundary::Free);
  const TransformPlan plan(s, Boundary::Free);
  const ObservationSet obs(s, {ImageBuffer(s.size(), 1.0)});
  const Hyperparams th{4.0, 0.0, 1e-3, 0.7};
  const auto sobs = make_spectral_obs(plan, obs);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_NEAR(sobs.z[i], 0.0, 1e-12);
  const auto m = spectral_map(s, t, plan, sobs, obs, th);
  const double beta = 0.25;
  for (double x : m.data) EXPECT_NEAR(x, beta / (th.lambda + beta), 1e-12);
}

TEST(SpectralMap, MatchesMeanField) {
  const auto r = checks::check_spectral_map(LatticeSpec(32), 5, 3);
  EXPECT_TRUE(r.pass) << r.worst;
}

TEST(RunEmSpectral, ZeroIterationsPassThrough) {
  const LatticeSpec s(8);
  const ObservationSet obs = center(degrade(s, natural_scene(s), {30.0, 1, 1})).obs;
  EMConfig c;
  c.max_em_iters = 0;
  for (Boundary b : {Boundary::Free, Boundary::Torus}) {
    const auto tr = run_em_spectral(s, obs, c, b);
    EXPECT_EQ(tr.theta, c.theta_init);
    EXPECT_FALSE(tr.converged);
  }
}

// With T_mf = 1 the mean-field iterate lags the exact mean, so the two
// trajectories differ early on and come together as the iterate catches up.
TEST(RunEmSpectral, AgreesWithLinearAtFixedIterations) {
  const LatticeSpec s(64);
  for (std::size_t k : {1u, 4u}) {
    const ObservationSet obs = center(degrade(s, natural_scene(s), {30.0, k, 10 + k})).obs;
    EMConfig c;
    c.epsilon = 1e-300;
    double prev_alpha = 1.0;
    for (std::size_t iters : {50u, 100u, 200u}) {
      c.max_em_iters = iters;
      const auto lin = run_em(s, obs, c);
      const auto fft = run_em_spectral(s, obs, c, Boundary::Free);
      const double da = checks::rel_err(lin.theta.alpha, fft.theta.alpha);
      EXPECT_LT(da, prev_alpha) << k << " " << iters;
      prev_alpha = da;
      if (iters == 200) {
        EXPECT_LT(checks::rel_err(lin.theta.sigma2, fft.theta.sigma2), 1e-3);
        EXPECT_LT(checks::rel_err(lin.theta.lambda, fft.theta.lambda), 1e-3);
        EXPECT_LT(da, 1e-3);
        double worst = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
          worst = std::max(worst, std::fabs(lin.m[i] - fft.m[i]));
        EXPECT_LT(worst, 0.5);
      }
    }
  }
}

// Enough sweeps per iteration to converge the mean field makes the linear
// method follow the spectral trajectory to high accuracy.
TEST(RunEmSpectral, MatchesLinearWithConvergedMeanField) {
  const LatticeSpec s(32);
  const ObservationSet obs = center(degrade(s, natural_scene(s), {30.0, 2, 3})).obs;
  EMConfig c;
  c.max_em_iters = 20;
  c.epsilon = 1e-300;
  c.t_mf = 400;
  const auto lin = run_em(s, obs, c);
  const auto fft = run_em_spectral(s, obs, c, Boundary::Free);
  EXPECT_LT(checks::rel_err(lin.theta.sigma2, fft.theta.sigma2), 1e-8);
  EXPECT_LT(checks::rel_err(lin.theta.lambda, fft.theta.lambda), 1e-8);
  EXPECT_LT(checks::rel_err(lin.theta.alpha, fft.theta.alpha), 1e-8);
}

TEST(RunEmSpectral, FreeBeatsTorusOnFreeBoundaryScene) {
  const LatticeSpec s(64);
  const ImageBuffer truth = natural_scene(s);
  const auto [obs, offset] = center(degrade(s, truth, {30.0, 1, 5}));
  const EMConfig c;
  const auto free = run_em_spectral(s, obs, c, Boundary::Free);
  const auto torus = run_em_spectral(s, obs, c, Boundary::Torus);
  EXPECT_LE(mse(shifted(free.m, offset), truth), mse(shifted(torus.m, offset), truth));
}

TEST(Torus, ConstantImageStaysConstant) {
  const LatticeSpec s(16);
  const auto t = eigenvalues(s, Boundary::Torus);
  const TransformPlan plan(s, Boundary::Torus);
  const ObservationSet obs(s, {ImageBuffer(s.size(), -3.0)});
  const Hyperparams th{10.0, 0.0, 1e-6, 2.0};
  const auto m = spectral_map(s, t, plan, make_spectral_obs(plan, obs), obs, th);
  for (double x : m.data) EXPECT_NEAR(x, m[0], 1e-12);
}

TEST(Torus, SpectralMapMatchesDenseCirculantSolve) {
  std::mt19937_64 rng(4);
  for (std::size_t v : {3u, 4u, 8u}) {
    const LatticeSpec s(v);
    const auto t = eigenvalues(s, Boundary::Torus);
    const TransformPlan plan(s, Boundary::Torus);
    const auto [obs, th] = checks::random_problem(s, rng, 1e-3, 1e-1);
    const auto m = spectral_map(s, t, plan, make_spectral_obs(plan, obs), obs, th);
    const auto dense = oracle::build_posterior(s, obs, th, Boundary::Torus).mean();
    EXPECT_LT((oracle::to_eigen(m) - dense).cwiseAbs().maxCoeff(), 1e-8) << v;
  }
}
