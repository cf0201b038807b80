#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmrf/checks.hpp"
#include "gmrf/oracle.hpp"

using namespace gmrf;

TEST(BuildPrior, LaplacianRowsAndSpectrum) {
  const LatticeSpec s(2);
  const Eigen::MatrixXd lap = oracle::laplacian(s);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(lap.row(i).sum(), 0.0);
  const Eigen::VectorXd ev = checks::sorted(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lap).eigenvalues());
  const double want[] = {0, 2, 2, 4};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(ev(i), want[i], 1e-12);
  // lambda = 0 is singular, so only the Laplacian itself is checked here.
  EXPECT_THROW(oracle::build_prior(s, {1.0, 0.0, 0.0, 1.0}), std::domain_error);
}

TEST(BuildPrior, ZeroAlphaIsScaledIdentity) {
  const auto g = oracle::build_prior(LatticeSpec(2), {1.0, 0.0, 0.5, 0.0});
  EXPECT_TRUE(g.precision().isApprox(0.5 * Eigen::MatrixXd::Identity(4, 4)));
}

TEST(BuildPrior, LaplacianTrace) {
  for (std::size_t v = 2; v <= 16; ++v)
    EXPECT_EQ(oracle::laplacian(LatticeSpec(v)).trace(), 4.0 * v * (v - 1.0));
}

TEST(BuildPrior, SymmetricPrecision) {
  const auto g = oracle::build_prior(LatticeSpec(5), {1.0, 1.0, 0.01, 0.3}, Boundary::Torus);
  EXPECT_LT((g.precision() - g.precision().transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildPrior, RejectsLargeLattice) {
  EXPECT_THROW(oracle::build_prior(LatticeSpec(33), Hyperparams{}), std::invalid_argument);
}

TEST(BuildPosterior, UnitPrecision) {
  std::mt19937_64 rng(1);
  const LatticeSpec s(3);
  const auto obs = checks::random_problem(s, rng).obs;
  const Hyperparams th{static_cast<double>(obs.k_count()), 0.5, 0.0, 0.0};
  const auto g = oracle::build_posterior(s, obs, th);
  EXPECT_TRUE(g.precision().isApprox(Eigen::MatrixXd::Identity(9, 9)));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(g.mean()(i), 0.5 + obs.avg()[i], 1e-12);
}

TEST(BuildPosterior, MeanMatchesMeanField) {
  std::mt19937_64 rng(2);
  const LatticeSpec s(4);
  for (int i = 0; i < 10; ++i) {
    const auto [obs, th] = checks::random_problem(s, rng, 1e-3, 1e-1);
    const auto m = checks::converged_mean(s, obs, th);
    EXPECT_LT((oracle::build_posterior(s, obs, th).mean() - oracle::to_eigen(m)).cwiseAbs().maxCoeff(),
              1e-8);
  }
}

TEST(BuildPosterior, LogDetMatchesSpectrum) {
  std::mt19937_64 rng(3);
  const LatticeSpec s(6);
  const auto t = eigenvalues(s, Boundary::Free);
  for (int i = 0; i < 10; ++i) {
    const auto [obs, th] = checks::random_problem(s, rng);
    EXPECT_NEAR(oracle::build_posterior(s, obs, th).logdet(),
                log_sum(t, th.lambda + data_precision(obs, th), th.alpha), 1e-8 * s.size());
  }
}

TEST(ExactQGradients, BGradientAtZeroAlpha) {
  std::mt19937_64 rng(4);
  const LatticeSpec s(4);
  auto [obs, old] = checks::random_problem(s, rng);
  Hyperparams neu{200.0, 0.4, 0.05, 0.0};
  const auto g = oracle::exact_q_gradients(s, obs, neu, old);
  const double post_sum = oracle::build_posterior(s, obs, old).mean().sum();
  EXPECT_NEAR(g.d_b, post_sum - s.size() * neu.b / neu.lambda, 1e-8 * std::fabs(post_sum) + 1e-8);
}

TEST(ExactQGradients, FisherIdentityAgainstFreeEnergies) {
  // With theta_new = theta_old the Q gradient equals the gradient of
  // ln p(Y | Theta) = F_pri - F_post - (nK/2) ln(2 pi sigma2).
  std::mt19937_64 rng(5);
  const LatticeSpec s(3);
  const auto [obs, th] = checks::random_problem(s, rng, 1e-2, 1.0);
  const auto g = oracle::exact_q_gradients(s, obs, th, th);
  const double nk = static_cast<double>(s.size() * obs.k_count());
  auto ll = [&](double Hyperparams::* f) {
    return [&, f](double x) {
      Hyperparams h = th;
      h.*f = x;
      return oracle::prior_free_energy(s, h) - oracle::posterior_free_energy(s, obs, h) -
             0.5 * nk * std::log(2 * kPi * h.sigma2);
    };
  };
  auto fd = [&](double Hyperparams::* f) {
    return oracle::finite_difference(ll(f), th.*f, 1e-5 * std::max(1e-2, std::fabs(th.*f)));
  };
  EXPECT_LE(checks::scaled_err(g.d_b, fd(&Hyperparams::b), 1e-6, 1e-4), 1.0);
  EXPECT_LE(checks::scaled_err(g.d_lambda, fd(&Hyperparams::lambda), 1e-6, 1e-4), 1.0);
  EXPECT_LE(checks::scaled_err(g.d_alpha, fd(&Hyperparams::alpha), 1e-6, 1e-4), 1.0);
  EXPECT_LE(checks::scaled_err(g.d_sigma2, fd(&Hyperparams::sigma2), 1e-6, 1e-4), 1.0);
}

TEST(FiniteDifference, Square) {
  EXPECT_NEAR(oracle::finite_difference([](double x) { return x * x; }, 3.0, 1e-5), 6.0, 1e-8);
}

TEST(FiniteDifference, PriorLambdaAndPosteriorSigma) {
  std::mt19937_64 rng(6);
  const LatticeSpec s(4);
  const auto t = eigenvalues(s, Boundary::Free);
  const auto [obs, th] = checks::random_problem(s, rng, 1e-2, 1.0);
  const double fl = oracle::finite_difference(
      [&](double x) {
        Hyperparams h = th;
        h.lambda = x;
        return oracle::prior_free_energy(s, h);
      },
      th.lambda, 1e-5 * th.lambda);
  EXPECT_LT(checks::rel_err(prior_gradients(s, t, th).d_lambda, fl), 1e-4);
  const double fs = oracle::finite_difference(
      [&](double x) {
        Hyperparams h = th;
        h.sigma2 = x;
        return oracle::posterior_free_energy(s, obs, h);
      },
      th.sigma2, 1e-5 * th.sigma2);
  const auto m = checks::converged_mean(s, obs, th);
  EXPECT_LT(checks::rel_err(posterior_gradients(s, t, obs, th, m).d_sigma2, fs), 1e-4);
  const double fb = oracle::finite_difference(
      [&](double x) {
        Hyperparams h = th;
        h.b = x;
        return oracle::posterior_free_energy(s, obs, h);
      },
      th.b, 1e-5);
  EXPECT_LT(checks::rel_err(-posterior_mean_sum(s, obs, th), fb), 1e-4);
}
