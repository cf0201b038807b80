#pragma once

// Spectral closed forms for the prior and posterior free energies
// F = -ln Z, their parameter derivatives, and the Q-function gradients that
// drive the M-step. Everything here is O(n) given the spectrum and the
// posterior mean; only posterior_free_energy needs a transform of y_avg.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

#include "gmrf/lattice.hpp"
#include "gmrf/meanfield.hpp"
#include "gmrf/numeric.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf {

inline constexpr double kLambdaMin = 1e-12;

struct GradientReport {
  double d_b = 0.0;
  double d_lambda = 0.0;
  double d_alpha = 0.0;
  double d_sigma2 = 0.0;
  std::optional<double> f_pri;
  std::optional<double> f_post;
};

struct PriorGradients {
  double d_b, d_lambda, d_alpha;
};

struct PosteriorGradients {
  double d_b, d_lambda, d_sigma2, d_alpha;
};

/// Posterior quantities at Theta_old that the Q-gradients depend on.
///   sum_mean  = 1^t m (closed form, exact even when m is a truncated iterate)
///   mean_sq   = ||m||^2,  mean_dot = m . y_avg,  edge_sq = m^t Lambda m
///   trace     = tr S_post^{-1},  trace_lap = tr(Lambda S_post^{-1})
struct PosteriorMoments {
  double sum_mean = 0.0;
  double mean_sq = 0.0;
  double mean_dot = 0.0;
  double edge_sq = 0.0;
  double trace = 0.0;
  double trace_lap = 0.0;
};

namespace detail {

inline void require_spectrum(const LatticeSpec& spec, const SpectrumTable& spectrum) {
  if (spectrum.side != spec.side() || spectrum.size() != spec.size())
    throw std::invalid_argument("spectrum does not match lattice");
}

inline double floored_lambda(double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("lambda must be positive");
  return std::max(lambda, kLambdaMin);
}

inline void require_posterior_theta(const Hyperparams& theta) {
  floored_lambda(theta.lambda);
  if (!(theta.sigma2 > 0.0)) throw std::domain_error("sigma2 must be positive");
  if (!(theta.alpha >= 0.0)) throw std::domain_error("alpha must be non-negative");
}

}  // namespace detail

inline double prior_free_energy(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                const Hyperparams& theta) {
  detail::require_spectrum(spec, spectrum);
  const double lam = detail::floored_lambda(theta.lambda);
  const double n = static_cast<double>(spec.size());
  return -0.5 * n * theta.b * theta.b / lam + 0.5 * log_sum(spectrum, lam, theta.alpha) -
         0.5 * n * kLog2Pi;
}

inline PriorGradients prior_gradients(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                      const Hyperparams& theta) {
  detail::require_spectrum(spec, spectrum);
  const double lam = detail::floored_lambda(theta.lambda);
  const double n = static_cast<double>(spec.size());
  const TraceSums s = trace_sums(spectrum, lam, theta.alpha);
  return {-n * theta.b / lam, 0.5 * n * theta.b * theta.b / (lam * lam) + 0.5 * s.inv,
          0.5 * s.phi_inv};
}

/// F_post with the quadratic form evaluated in the spectral domain from
/// z = U^t y_avg.
inline double posterior_free_energy(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                    const ObservationSet& obs, const ImageBuffer& z,
                                    const Hyperparams& theta) {
  detail::require_spectrum(spec, spectrum);
  detail::require_posterior_theta(theta);
  require_shape(spec, z, "posterior_free_energy");
  const double lam = detail::floored_lambda(theta.lambda);
  const double n = static_cast<double>(spec.size());
  const double beta = data_precision(obs, theta);
  const double p = lam + beta;
  NeumaierSum quad;
  const double dc = std::sqrt(n) * theta.b;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double num = (i == 0 ? dc : 0.0) + beta * z[i];
    quad.add(num * num / (p + theta.alpha * spectrum[i]));
  }
  return obs.sq_norm_sum() / (2.0 * theta.sigma2) - 0.5 * quad.value() +
         0.5 * log_sum(spectrum, p, theta.alpha) - 0.5 * n * kLog2Pi;
}

inline double posterior_free_energy(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                    const ObservationSet& obs, const Hyperparams& theta) {
  const TransformPlan plan(spec, spectrum.boundary);
  return posterior_free_energy(spec, spectrum, obs, plan.forward(obs.avg()), theta);
}

/// Closed-form 1^t m = -dF_post/db.
inline double posterior_mean_sum(const LatticeSpec& spec, const ObservationSet& obs,
                                 const Hyperparams& theta) {
  const double n = static_cast<double>(spec.size());
  const double beta = data_precision(obs, theta);
  return (n * theta.b + n * beta * obs.avg_intensity()) /
         (detail::floored_lambda(theta.lambda) + beta);
}

/// Moments from a mean-field iterate m.
inline PosteriorMoments posterior_moments(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                          const ObservationSet& obs, const Hyperparams& theta,
                                          const ImageBuffer& m) {
  detail::require_spectrum(spec, spectrum);
  require_shape(spec, m, "posterior_moments");
  detail::require_posterior_theta(theta);
  const SweepStats st = detail::image_stats(spec.side(), m.data.data(), obs.avg().data.data());
  const TraceSums tr = trace_sums(
      spectrum, detail::floored_lambda(theta.lambda) + data_precision(obs, theta), theta.alpha);
  return {posterior_mean_sum(spec, obs, theta), st.mean_sq, st.mean_dot, st.edge_sq, tr.inv,
          tr.phi_inv};
}

/// sum_k ||m - y^(k)||^2 without revisiting the K images.
inline double residual_sum(const ObservationSet& obs, const PosteriorMoments& pm) {
  const double k = static_cast<double>(obs.k_count());
  return std::max(0.0, obs.sq_norm_sum() - 2.0 * k * pm.mean_dot + k * pm.mean_sq);
}

inline PosteriorGradients posterior_gradients(const PosteriorMoments& pm,
                                              const ObservationSet& obs,
                                              const Hyperparams& theta) {
  const double s4 = theta.sigma2 * theta.sigma2;
  const double k = static_cast<double>(obs.k_count());
  return {-pm.sum_mean, 0.5 * pm.mean_sq + 0.5 * pm.trace,
          -residual_sum(obs, pm) / (2.0 * s4) - k * pm.trace / (2.0 * s4),
          0.5 * pm.edge_sq + 0.5 * pm.trace_lap};
}

inline PosteriorGradients posterior_gradients(const LatticeSpec& spec,
                                              const SpectrumTable& spectrum,
                                              const ObservationSet& obs, const Hyperparams& theta,
                                              const ImageBuffer& m) {
  return posterior_gradients(posterior_moments(spec, spectrum, obs, theta, m), obs, theta);
}

/// grad_sigma2 Q at a new sigma2, given moments at Theta_old.
inline double sigma2_gradient(const ObservationSet& obs, const PosteriorMoments& pm_old,
                              double sigma2, std::size_t n) {
  const double k = static_cast<double>(obs.k_count());
  const double s4 = sigma2 * sigma2;
  return (residual_sum(obs, pm_old) + k * pm_old.trace) / (2.0 * s4) -
         static_cast<double>(n) * k / (2.0 * sigma2);
}

/// Q-gradients assembled as dF_pri(theta_new) - dF_post(Theta_old).
inline GradientReport q_gradients(const PriorGradients& prior, const PosteriorMoments& pm_old,
                                  const ObservationSet& obs, const Hyperparams& theta_new,
                                  std::size_t n) {
  GradientReport g;
  g.d_b = pm_old.sum_mean + prior.d_b;
  g.d_lambda = -0.5 * (pm_old.mean_sq + pm_old.trace) + prior.d_lambda;
  g.d_alpha = -0.5 * (pm_old.edge_sq + pm_old.trace_lap) + prior.d_alpha;
  g.d_sigma2 = sigma2_gradient(obs, pm_old, theta_new.sigma2, n);
  return g;
}

inline GradientReport q_gradients(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                  const ObservationSet& obs, const Hyperparams& theta_new,
                                  const Hyperparams& theta_old, const ImageBuffer& m_old) {
  const PosteriorMoments pm = posterior_moments(spec, spectrum, obs, theta_old, m_old);
  GradientReport g =
      q_gradients(prior_gradients(spec, spectrum, theta_new), pm, obs, theta_new, spec.size());
  g.f_pri = prior_free_energy(spec, spectrum, theta_new);
  return g;
}

/// The sigma2 that zeroes grad_sigma2 Q.
inline double sigma2_from_moments(const ObservationSet& obs, const PosteriorMoments& pm,
                                  std::size_t n) {
  const double nd = static_cast<double>(n);
  const double k = static_cast<double>(obs.k_count());
  return residual_sum(obs, pm) / (nd * k) + pm.trace / nd;
}

inline double sigma2_update(const LatticeSpec& spec, const SpectrumTable& spectrum,
                            const ObservationSet& obs, const Hyperparams& theta_old,
                            const ImageBuffer& m_old) {
  return sigma2_from_moments(obs, posterior_moments(spec, spectrum, obs, theta_old, m_old),
                             spec.size());
}

/// alpha from 1/alpha ~ (edge_sq + trace_lap) / (n - 1), the small-lambda
/// stationary point of grad_alpha Q.
inline double alpha_from_moments(const PosteriorMoments& pm, std::size_t n, double alpha_min) {
  const double denom = pm.edge_sq + pm.trace_lap;
  if (!(denom > 0.0)) return alpha_min;
  return std::max(alpha_min, static_cast<double>(n - 1) / denom);
}

inline double alpha_init(const LatticeSpec& spec, const SpectrumTable& spectrum,
                         const ObservationSet& obs, const Hyperparams& theta_old,
                         const ImageBuffer& m_old, double alpha_min = 1e-12) {
  if (spec.size() < 2) throw std::invalid_argument("alpha_init: need at least two pixels");
  return alpha_from_moments(posterior_moments(spec, spectrum, obs, theta_old, m_old), spec.size(),
                            alpha_min);
}

}  // namespace gmrf
