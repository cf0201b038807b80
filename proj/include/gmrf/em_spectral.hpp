#pragma once

// O(n ln n) EM: the posterior moments are evaluated exactly in the spectral
// domain from z = U^t y_avg, so no mean-field solve is needed. The same code
// serves the torus approximation when given the torus spectrum and plan.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>

#include "gmrf/em.hpp"
#include "gmrf/free_energy.hpp"
#include "gmrf/lattice.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf {

struct SpectralObs {
  ImageBuffer z;
  Boundary boundary = Boundary::Free;
  double sq_norm_sum = 0.0;
};

inline SpectralObs make_spectral_obs(const TransformPlan& plan, const ObservationSet& obs) {
  return {plan.forward(obs.avg()), plan.boundary(), obs.sq_norm_sum()};
}

namespace detail {

inline void require_spectral(const LatticeSpec& spec, const SpectrumTable& spectrum,
                             const SpectralObs& sobs) {
  require_spectrum(spec, spectrum);
  require_shape(spec, sobs.z, "spectral");
  if (sobs.boundary != spectrum.boundary)
    throw std::invalid_argument("spectral observation and spectrum use different boundaries");
}

}  // namespace detail

/// Exact posterior moments. The spectral coefficient of the posterior mean is
///   w_i = (sqrt(n) b [i == 0] + beta z_i) / (lambda + beta + alpha Phi_i).
inline PosteriorMoments spectral_moments(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                         const SpectralObs& sobs, const ObservationSet& obs,
                                         const Hyperparams& theta) {
  detail::require_spectral(spec, spectrum, sobs);
  detail::require_posterior_theta(theta);
  const double n = static_cast<double>(spec.size());
  const double beta = data_precision(obs, theta);
  const double p = detail::floored_lambda(theta.lambda) + beta;
  const double q = theta.alpha;
  const std::size_t v = spec.side();
  const double* z = sobs.z.data.data();
  const double* phi = spectrum.values.data();
  NeumaierSum wsq, wz, wphi, inv, phinv;
  for (std::size_t r = 0; r < v; ++r) {
    double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0;
    for (std::size_t c = 0; c < v; ++c) {
      const std::size_t i = r * v + c;
      const double rd = 1.0 / (p + q * phi[i]);
      const double w = beta * z[i] * rd;
      a0 += w * w;
      a1 += w * z[i];
      a2 += w * w * phi[i];
      a3 += rd;
      a4 += phi[i] * rd;
    }
    wsq.add(a0), wz.add(a1), wphi.add(a2), inv.add(a3), phinv.add(a4);
  }
  // The b term only touches the DC bin (Phi_0 = 0).
  const double w0_plain = beta * z[0] / p;
  const double w0 = (std::sqrt(n) * theta.b + beta * z[0]) / p;
  PosteriorMoments pm;
  pm.sum_mean = std::sqrt(n) * w0;
  pm.mean_sq = wsq.value() - w0_plain * w0_plain + w0 * w0;
  pm.mean_dot = wz.value() - w0_plain * z[0] + w0 * z[0];
  pm.edge_sq = wphi.value();
  pm.trace = inv.value();
  pm.trace_lap = phinv.value();
  return pm;
}

/// dF_post / d{lambda, alpha, sigma2} without a mean-field solve.
inline PosteriorGradients spectral_posterior_gradients(const LatticeSpec& spec,
                                                       const SpectrumTable& spectrum,
                                                       const SpectralObs& sobs,
                                                       const ObservationSet& obs,
                                                       const Hyperparams& theta) {
  return posterior_gradients(spectral_moments(spec, spectrum, sobs, obs, theta), obs, theta);
}

/// Posterior mean by one elementwise solve and one inverse transform.
inline ImageBuffer spectral_map(const LatticeSpec& spec, const SpectrumTable& spectrum,
                                const TransformPlan& plan, const SpectralObs& sobs,
                                const ObservationSet& obs, const Hyperparams& theta) {
  detail::require_spectral(spec, spectrum, sobs);
  detail::require_posterior_theta(theta);
  const double beta = data_precision(obs, theta);
  const double p = detail::floored_lambda(theta.lambda) + beta;
  ImageBuffer w(spec.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = beta * sobs.z[i] / (p + theta.alpha * spectrum[i]);
  w[0] += std::sqrt(static_cast<double>(spec.size())) * theta.b / p;
  return plan.inverse(w);
}

/// Moments provider for run_em_loop; z is computed once up front.
class SpectralMoments {
 public:
  SpectralMoments(const LatticeSpec& spec, const ObservationSet& obs, const SpectrumTable& spectrum,
                  const TransformPlan& plan, SpectralObs sobs)
      : spec_(spec), obs_(obs), spectrum_(spectrum), plan_(plan), sobs_(std::move(sobs)) {}

  PosteriorMoments e_step(const Hyperparams& old, EMIteration& rec) {
    rec.pixel_touches += spec_.size();
    return spectral_moments(spec_, spectrum_, sobs_, obs_, old);
  }

  PriorGradients prior(const Hyperparams& theta) const {
    return prior_gradients(spec_, spectrum_, theta);
  }

  ImageBuffer mean(const Hyperparams& theta) const {
    return spectral_map(spec_, spectrum_, plan_, sobs_, obs_, theta);
  }
  ImageBuffer initial_mean() const { return obs_.avg(); }

 private:
  const LatticeSpec& spec_;
  const ObservationSet& obs_;
  const SpectrumTable& spectrum_;
  const TransformPlan& plan_;
  SpectralObs sobs_;
};

/// Spectral-domain EM with final restoration by spectral_map. With
/// Boundary::Torus this is the periodic-boundary approximation.
inline EMTrace run_em_spectral(const LatticeSpec& spec, const ObservationSet& obs,
                               const EMConfig& config, Boundary boundary = Boundary::Free) {
  require_shape(spec, obs.avg(), "run_em_spectral");
  const auto t0 = std::chrono::steady_clock::now();
  const auto spectrum = cached_eigenvalues(spec, boundary);
  const TransformPlan plan(spec, boundary);
  SpectralObs sobs = make_spectral_obs(plan, obs);
  const double transform_s = detail::seconds_since(t0);
  SpectralMoments provider(spec, obs, *spectrum, plan, std::move(sobs));
  EMTrace trace = run_em_loop(spec, obs, config, provider);
  trace.phases.transform_s += transform_s;
  return trace;
}

}  // namespace gmrf
