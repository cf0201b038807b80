#pragma once

// Property suites that compare the fast paths against the dense reference.
// Used by the `check` subcommand and by the acceptance tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gmrf/degrade.hpp"
#include "gmrf/em_spectral.hpp"
#include "gmrf/free_energy.hpp"
#include "gmrf/meanfield.hpp"
#include "gmrf/oracle.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf::checks {

struct SuiteResult {
  std::string name;
  bool pass = true;
  double worst = 0.0;  // worst observed error in the suite's own metric
  double tol = 0.0;
  std::size_t cases = 0;
  std::string detail;

  void observe(double err) {
    worst = std::max(worst, err);
    pass = pass && err <= tol;
    ++cases;
  }
};

/// A random, reasonably conditioned problem instance.
struct Problem {
  ObservationSet obs;
  Hyperparams theta;
};

/// Observations are a smooth pattern plus noise; theta is drawn so that
/// alpha / (lambda + K / sigma2) stays within [1e-2, ratio_hi], which keeps
/// the mean-field iteration count bounded at desk scale.
inline Problem random_problem(const LatticeSpec& spec, std::mt19937_64& rng,
                              double lambda_lo = 1e-8, double lambda_hi = 1e-1,
                              double ratio_hi = 30.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * u(rng));
  };
  const std::size_t k = 1 + static_cast<std::size_t>(u(rng) * 4.0);
  const double amp = 10.0 + 90.0 * u(rng);
  const double phase = 6.0 * u(rng);
  std::normal_distribution<double> noise(0.0, 20.0);
  std::vector<ImageBuffer> ys;
  for (std::size_t j = 0; j < k; ++j) {
    ImageBuffer y(spec.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = static_cast<double>(spec.row_of(i)), c = static_cast<double>(spec.col_of(i));
      y[i] = amp * std::sin(0.7 * r + 0.3 * c + phase) + noise(rng);
    }
    ys.push_back(std::move(y));
  }
  Hyperparams t;
  t.sigma2 = log_uniform(10.0, 2000.0);
  t.lambda = log_uniform(lambda_lo, lambda_hi);
  t.b = -2.0 + 4.0 * u(rng);
  const double p = t.lambda + static_cast<double>(k) / t.sigma2;
  t.alpha = p * log_uniform(1e-2, ratio_hi);
  return {ObservationSet(spec, std::move(ys)), t};
}

inline double rel_err(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

/// max(abs, rel) style tolerance: passes when |a - b| <= max(abs_tol, rel_tol |b|).
inline double scaled_err(double a, double b, double abs_tol, double rel_tol) {
  return std::fabs(a - b) / std::max(abs_tol, rel_tol * std::fabs(b));
}

inline Eigen::MatrixXd kron_dct(std::size_t v) {
  const DenseMatrix k = dct_matrix(v);
  const auto n = static_cast<Eigen::Index>(v * v);
  Eigen::MatrixXd u(n, n);
  for (std::size_t r = 0; r < v; ++r)
    for (std::size_t c = 0; c < v; ++c)
      for (std::size_t p = 0; p < v; ++p)
        for (std::size_t q = 0; q < v; ++q)
          u(static_cast<Eigen::Index>(r * v + c), static_cast<Eigen::Index>(p * v + q)) =
              k(r, p) * k(c, q);
  return u;
}

inline Eigen::VectorXd sorted(Eigen::VectorXd x) {
  std::sort(x.data(), x.data() + x.size());
  return x;
}

inline ImageBuffer converged_mean(const LatticeSpec& spec, const ObservationSet& obs,
                                  const Hyperparams& theta, double tol = 1e-13) {
  return solve_to_tolerance(spec, obs, theta, obs.avg(), tol, 2000000).m;
}

inline SuiteResult check_lattice(const LatticeSpec& spec) {
  SuiteResult r{"lattice.structure", true, 0.0, 0.0, 0, "degree sum and neighbour symmetry"};
  std::size_t deg_sum = 0;
  double bad = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto nb = spec.neighbors(i);
    deg_sum += nb.size();
    for (std::size_t j : nb) {
      const auto back = spec.neighbors(j);
      if (std::find(back.begin(), back.end(), i) == back.end()) bad += 1.0;
    }
  }
  r.observe(bad);
  r.observe(std::fabs(static_cast<double>(deg_sum) - 2.0 * static_cast<double>(spec.edge_count())));
  return r;
}

inline SuiteResult check_eigenvalues(const LatticeSpec& spec) {
  SuiteResult r{"spectral.eigenvalues", true, 0.0, 1e-8, 0,
                "dense Laplacian spectrum vs closed-form table (multiset)"};
  for (Boundary b : {Boundary::Free, Boundary::Torus}) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::laplacian(spec, b),
                                                            Eigen::EigenvaluesOnly);
    const auto table = eigenvalues(spec, b);
    const Eigen::VectorXd closed = Eigen::Map<const Eigen::VectorXd>(
        table.values.data(), static_cast<Eigen::Index>(table.values.size()));
    r.observe((sorted(es.eigenvalues()) - sorted(closed)).cwiseAbs().maxCoeff());
  }
  return r;
}

inline SuiteResult check_diagonalization(const LatticeSpec& spec) {
  SuiteResult r{"spectral.diagonalization", true, 0.0, 1e-8, 0,
                "U Phi U^t vs dense Laplacian, entrywise"};
  const Eigen::MatrixXd u = kron_dct(spec.side());
  const auto table = eigenvalues(spec, Boundary::Free);
  const Eigen::VectorXd phi = Eigen::Map<const Eigen::VectorXd>(
      table.values.data(), static_cast<Eigen::Index>(table.values.size()));
  const Eigen::MatrixXd rebuilt = u * phi.asDiagonal() * u.transpose();
  r.observe((rebuilt - oracle::laplacian(spec)).cwiseAbs().maxCoeff());
  return r;
}

inline SuiteResult check_transforms(const LatticeSpec& spec, std::size_t trials,
                                    std::uint64_t seed) {
  SuiteResult r{"spectral.transforms", true, 0.0, 1e-10, 0,
                "fast DCT vs dense U^t, round trip, Parseval (relative)"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::MatrixXd u = kron_dct(spec.side());
  for (Boundary b : {Boundary::Free, Boundary::Torus}) {
    const TransformPlan plan(spec, b);
    for (std::size_t t = 0; t < trials; ++t) {
      ImageBuffer x(spec.size());
      for (auto& p : x.data) p = g(rng);
      const ImageBuffer z = plan.forward(x);
      const ImageBuffer back = plan.inverse(z);
      const double nx = oracle::to_eigen(x).norm();
      r.observe((oracle::to_eigen(back) - oracle::to_eigen(x)).cwiseAbs().maxCoeff() / nx);
      r.observe(std::fabs(oracle::to_eigen(z).norm() - nx) / nx);
      if (b == Boundary::Free) {
        const Eigen::VectorXd dense = u.transpose() * oracle::to_eigen(x);
        r.observe((dense - oracle::to_eigen(z)).cwiseAbs().maxCoeff() / nx);
      }
    }
  }
  return r;
}

inline SuiteResult check_meanfield(const LatticeSpec& spec, std::size_t trials, std::uint64_t seed) {
  SuiteResult r{"meanfield.exactness", true, 0.0, 1e-8, 0,
                "||S_post m - c||_inf at the mean-field fixed point"};
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [obs, theta] = random_problem(spec, rng);
    auto state = solve_to_tolerance(spec, obs, theta, obs.avg(), 1e-12, 5000000);
    while (mf_residual(spec, obs, theta, state.m) >= 1e-10) mf_sweep(state, spec, obs, theta);
    const auto post = oracle::build_posterior(spec, obs, theta);
    const Eigen::VectorXd res = post.precision() * oracle::to_eigen(state.m) - post.shift();
    r.observe(res.cwiseAbs().maxCoeff());
  }
  return r;
}

inline SuiteResult check_free_energies(const LatticeSpec& spec, std::size_t trials,
                                       std::uint64_t seed) {
  SuiteResult r{"free_energy.dense", true, 0.0, 1e-8, 0,
                "spectral F_pri and F_post vs dense Cholesky, per pixel"};
  std::mt19937_64 rng(seed);
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  const double n = static_cast<double>(spec.size());
  for (std::size_t t = 0; t < trials; ++t) {
    // lambda >= 1e-3 keeps cond(S_pri) small enough that the dense Cholesky
    // reference itself is accurate to the tolerance.
    const auto [obs, theta] = random_problem(spec, rng, 1e-3, 1.0);
    r.observe(std::fabs(prior_free_energy(spec, *spectrum, theta) -
                        oracle::prior_free_energy(spec, theta)) / n);
    r.observe(std::fabs(posterior_free_energy(spec, *spectrum, obs, theta) -
                        oracle::posterior_free_energy(spec, obs, theta)) / n);
  }
  return r;
}

inline SuiteResult check_log_dets(const LatticeSpec& spec, std::size_t trials,
                                  std::uint64_t seed) {
  SuiteResult r{"spectral.log_dets", true, 0.0, 1e-8, 0,
                "sum ln(p + alpha Phi) vs dense Cholesky log-det, per pixel"};
  std::mt19937_64 rng(seed);
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  const double n = static_cast<double>(spec.size());
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [obs, theta] = random_problem(spec, rng);
    const double beta = data_precision(obs, theta);
    r.observe(std::fabs(log_sum(*spectrum, theta.lambda, theta.alpha) -
                        oracle::build_prior(spec, theta).logdet()) / n);
    r.observe(std::fabs(log_sum(*spectrum, theta.lambda + beta, theta.alpha) -
                        oracle::build_posterior(spec, obs, theta).logdet()) / n);
  }
  return r;
}

inline SuiteResult check_ridge_identity(const LatticeSpec& spec, std::size_t trials,
                                        std::uint64_t seed) {
  SuiteResult r{"prior.ridge_identity", true, 0.0, 1e-8, 0,
                "b^t S_pri^-1 b = n b^2 / lambda (relative)"};
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    auto [obs, theta] = random_problem(spec, rng);
    if (theta.b == 0.0) theta.b = 1.0;
    const auto pri = oracle::build_prior(spec, theta);
    const double n = static_cast<double>(spec.size());
    r.observe(rel_err(pri.quadratic(), n * theta.b * theta.b / theta.lambda));
  }
  return r;
}

/// Central differences of the free energies against every analytic
/// derivative, with step 1e-6 max(1, |gamma|).
inline SuiteResult check_fd_gradients(const LatticeSpec& spec, std::size_t trials,
                                      std::uint64_t seed) {
  SuiteResult r{"gradients.finite_difference", true, 0.0, 1.0, 0,
                "analytic vs central difference; error / max(1e-6, 1e-4 |fd|)"};
  std::mt19937_64 rng(seed);
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  const TransformPlan plan(spec, Boundary::Free);
  auto step = [](double x) { return 1e-6 * std::max(1.0, std::fabs(x)); };
  auto fd = [&](const Hyperparams& at, double Hyperparams::* field,
                const std::function<double(const Hyperparams&)>& f) {
    return oracle::finite_difference(
        [&](double x) {
          Hyperparams t = at;
          t.*field = x;
          return f(t);
        },
        at.*field, step(at.*field));
  };
  auto observe = [&](double analytic, double numeric) {
    r.observe(scaled_err(analytic, numeric, 1e-6, 1e-4));
  };
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [obs, theta] = random_problem(spec, rng, 1e-3, 1.0);
    auto f_pri = [&](const Hyperparams& h) { return prior_free_energy(spec, *spectrum, h); };
    const ImageBuffer z = plan.forward(obs.avg());
    auto f_post = [&](const Hyperparams& h) {
      return posterior_free_energy(spec, *spectrum, obs, z, h);
    };
    const PriorGradients pg = prior_gradients(spec, *spectrum, theta);
    observe(pg.d_b, fd(theta, &Hyperparams::b, f_pri));
    observe(pg.d_lambda, fd(theta, &Hyperparams::lambda, f_pri));
    observe(pg.d_alpha, fd(theta, &Hyperparams::alpha, f_pri));

    const ImageBuffer m = converged_mean(spec, obs, theta);
    const PosteriorGradients qg = posterior_gradients(spec, *spectrum, obs, theta, m);
    observe(qg.d_b, fd(theta, &Hyperparams::b, f_post));
    observe(qg.d_lambda, fd(theta, &Hyperparams::lambda, f_post));
    observe(qg.d_sigma2, fd(theta, &Hyperparams::sigma2, f_post));
    observe(qg.d_alpha, fd(theta, &Hyperparams::alpha, f_post));

    const SpectralObs sobs = make_spectral_obs(plan, obs);
    const PosteriorGradients sg = spectral_posterior_gradients(spec, *spectrum, sobs, obs, theta);
    observe(sg.d_b, fd(theta, &Hyperparams::b, f_post));
    observe(sg.d_lambda, fd(theta, &Hyperparams::lambda, f_post));
    observe(sg.d_sigma2, fd(theta, &Hyperparams::sigma2, f_post));
    observe(sg.d_alpha, fd(theta, &Hyperparams::alpha, f_post));
  }
  return r;
}

inline SuiteResult check_q_gradients(const LatticeSpec& spec, std::size_t trials,
                                     std::uint64_t seed) {
  SuiteResult r{"q_gradients.oracle", true, 0.0, 1e-6, 0,
                "spectral Q-gradients vs dense Gaussian expectations (relative)"};
  std::mt19937_64 rng(seed);
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [obs, theta_old] = random_problem(spec, rng, 1e-4, 1e-1);
    const Hyperparams theta_new = random_problem(spec, rng, 1e-4, 1e-1).theta;
    const ImageBuffer m_old = converged_mean(spec, obs, theta_old);
    const GradientReport fast =
        q_gradients(spec, *spectrum, obs, theta_new, theta_old, m_old);
    const GradientReport exact = oracle::exact_q_gradients(spec, obs, theta_new, theta_old);
    r.observe(rel_err(fast.d_b, exact.d_b));
    r.observe(rel_err(fast.d_lambda, exact.d_lambda));
    r.observe(rel_err(fast.d_alpha, exact.d_alpha));
    r.observe(rel_err(fast.d_sigma2, exact.d_sigma2));
  }
  return r;
}

inline SuiteResult check_spectral_map(const LatticeSpec& spec, std::size_t trials,
                                      std::uint64_t seed) {
  SuiteResult r{"spectral_map.meanfield", true, 0.0, 1e-6, 0,
                "spectral posterior mean vs converged mean field, max-abs"};
  std::mt19937_64 rng(seed);
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  const TransformPlan plan(spec, Boundary::Free);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [obs, theta] = random_problem(spec, rng);
    const ImageBuffer a = spectral_map(spec, *spectrum, plan, make_spectral_obs(plan, obs), obs, theta);
    const ImageBuffer b = converged_mean(spec, obs, theta);
    r.observe((oracle::to_eigen(a) - oracle::to_eigen(b)).cwiseAbs().maxCoeff());
  }
  return r;
}

/// Everything `check` runs. Dense suites need v <= 32; the diagonalisation
/// suite builds the n x n DCT and is limited to v <= 16.
inline std::vector<SuiteResult> run_all(std::size_t v, std::size_t trials, std::uint64_t seed) {
  const LatticeSpec spec(v);
  oracle::require_desk_scale(spec);
  std::vector<SuiteResult> out;
  out.push_back(check_lattice(spec));
  out.push_back(check_eigenvalues(spec));
  if (v <= 16) out.push_back(check_diagonalization(spec));
  out.push_back(check_transforms(spec, trials, seed));
  out.push_back(check_meanfield(spec, trials, seed + 1));
  out.push_back(check_free_energies(spec, trials, seed + 2));
  out.push_back(check_log_dets(spec, trials, seed + 7));
  out.push_back(check_ridge_identity(spec, trials, seed + 3));
  out.push_back(check_fd_gradients(spec, trials, seed + 4));
  out.push_back(check_q_gradients(spec, trials, seed + 5));
  out.push_back(check_spectral_map(spec, trials, seed + 6));
  return out;
}

}  // namespace gmrf::checks
