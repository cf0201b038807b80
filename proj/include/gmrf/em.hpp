#pragma once

// EM hyperparameter estimation. The outer loop is shared by every method;
// a "moments provider" supplies the posterior quantities at Theta_old:
//
//   LinearMoments   - warm-restarted mean-field sweeps + spectral trace sums, O(n)
//   SpectralMoments - exact spectral-domain moments from z = U^t y_avg (em_spectral.hpp)
//   DenseMoments    - dense Cholesky reference (oracle.hpp)
//
// Each outer iteration: E-step at Theta_old, closed-form sigma2, optional
// alpha re-initialisation, T_M gradient steps gamma += (eta_gamma / n) grad_gamma Q
// on (b, lambda, alpha), projection onto the floors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmrf/free_energy.hpp"
#include "gmrf/lattice.hpp"
#include "gmrf/meanfield.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf {

struct EMConfig {
  double eta_b = 1e-9;
  double eta_lambda = 1e-13;
  double eta_alpha = 1e-9;
  std::size_t t_m = 1;
  std::size_t t_mf = 1;
  double epsilon = 1e-5;
  std::size_t max_em_iters = 100;
  Hyperparams theta_init{2000.0, 0.0, 1e-7, 1e-4};
  bool use_alpha_init = true;
  bool relative_tolerance = false;
  double lambda_floor = 1e-12;
  double alpha_floor = 1e-12;
  double sigma2_floor = 1e-6;
  SweepOptions sweep{};

  void validate() const {
    if (!(eta_b > 0 && eta_lambda > 0 && eta_alpha > 0))
      throw std::invalid_argument("EMConfig: step rates must be positive");
    if (t_m < 1 || t_mf < 1) throw std::invalid_argument("EMConfig: t_m and t_mf must be >= 1");
    if (!(epsilon > 0)) throw std::invalid_argument("EMConfig: epsilon must be positive");
    if (!(lambda_floor > 0 && alpha_floor > 0 && sigma2_floor > 0))
      throw std::invalid_argument("EMConfig: floors must be positive");
    theta_init.validate();
  }
};

struct EMIteration {
  Hyperparams theta;
  double max_param_delta = 0.0;
  double mf_residual = 0.0;
  std::uint64_t pixel_touches = 0;
};

struct PhaseTimes {
  double transform_s = 0.0;
  double e_step_s = 0.0;  // mean-field sweeps or spectral moments
  double m_step_s = 0.0;  // gradients and updates
  double restore_s = 0.0;
};

struct EMTrace {
  std::vector<EMIteration> records;
  Hyperparams theta;
  ImageBuffer m;
  bool converged = false;
  std::size_t iterations_used = 0;
  PhaseTimes phases;
};

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, EMTrace partial)
      : std::runtime_error(what), trace_(std::move(partial)) {}
  const EMTrace& trace() const noexcept { return trace_; }

 private:
  EMTrace trace_;
};

inline std::uint64_t trace_sum_visits(std::size_t v) { return v * (v + 1) / 2; }

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double param_delta(const Hyperparams& a, const Hyperparams& b, bool relative) {
  auto d = [relative](double x, double y) {
    const double diff = std::fabs(x - y);
    if (!relative) return diff;
    const double scale = std::max(std::fabs(x), std::fabs(y));
    return scale > 0.0 ? diff / scale : 0.0;
  };
  return std::max({d(a.b, b.b), d(a.lambda, b.lambda), d(a.alpha, b.alpha), d(a.sigma2, b.sigma2)});
}

inline bool finite(const GradientReport& g) {
  return std::isfinite(g.d_b) && std::isfinite(g.d_lambda) && std::isfinite(g.d_alpha) &&
         std::isfinite(g.d_sigma2);
}

}  // namespace detail

/// Provider concept:
///   PosteriorMoments e_step(const Hyperparams& theta_old, EMIteration& record);
///   PriorGradients   prior(const Hyperparams& theta);
///   ImageBuffer      mean(const Hyperparams& theta_final);
///   ImageBuffer      initial_mean();
template <class Provider>
EMTrace run_em_loop(const LatticeSpec& spec, const ObservationSet& obs, const EMConfig& config,
                    Provider& provider) {
  config.validate();
  const std::size_t n = spec.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  EMTrace trace;
  Hyperparams theta_old = config.theta_init;
  trace.theta = theta_old;

  for (std::size_t it = 0; it < config.max_em_iters; ++it) {
    EMIteration rec;
    auto t0 = std::chrono::steady_clock::now();
    const PosteriorMoments pm = provider.e_step(theta_old, rec);
    trace.phases.e_step_s += detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    Hyperparams theta = theta_old;
    theta.sigma2 = std::max(config.sigma2_floor, sigma2_from_moments(obs, pm, n));
    if (config.use_alpha_init) theta.alpha = alpha_from_moments(pm, n, config.alpha_floor);

    GradientReport g;
    for (std::size_t t = 0; t < config.t_m; ++t) {
      g = q_gradients(provider.prior(theta), pm, obs, theta, n);
      rec.pixel_touches += trace_sum_visits(spec.side());
      if (!detail::finite(g) || !std::isfinite(theta.sigma2)) {
        trace.records.push_back(rec);
        trace.theta = theta_old;
        trace.iterations_used = it + 1;
        throw NumericalFailure("EM produced a non-finite gradient at iteration " +
                                   std::to_string(it + 1),
                               std::move(trace));
      }
      theta.b += config.eta_b * inv_n * g.d_b;
      theta.lambda = std::max(config.lambda_floor, theta.lambda + config.eta_lambda * inv_n * g.d_lambda);
      theta.alpha = std::max(config.alpha_floor, theta.alpha + config.eta_alpha * inv_n * g.d_alpha);
    }
    trace.phases.m_step_s += detail::seconds_since(t0);

    rec.theta = theta;
    rec.max_param_delta = detail::param_delta(theta, theta_old, config.relative_tolerance);
    trace.records.push_back(rec);
    trace.iterations_used = it + 1;
    theta_old = theta;
    trace.theta = theta;
    if (rec.max_param_delta < config.epsilon) {
      trace.converged = true;
      break;
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  trace.m = trace.iterations_used == 0 ? provider.initial_mean() : provider.mean(trace.theta);
  trace.phases.restore_s += detail::seconds_since(t0);
  return trace;
}

/// Warm-restarted mean-field iterate; the linear-time method.
class LinearMoments {
 public:
  LinearMoments(const LatticeSpec& spec, const ObservationSet& obs, const SpectrumTable& spectrum,
                const EMConfig& config)
      : spec_(spec), obs_(obs), spectrum_(spectrum), config_(config),
        state_{obs.avg(), 0, 0.0} {}

  PosteriorMoments e_step(const Hyperparams& old, EMIteration& rec) {
    SweepStats st;
    for (std::size_t t = 0; t < config_.t_mf; ++t) mf_sweep(state_, spec_, obs_, old, config_.sweep, &st);
    const TraceSums tr =
        trace_sums(spectrum_, std::max(old.lambda, kLambdaMin) + data_precision(obs_, old), old.alpha);
    rec.mf_residual = state_.last_delta;
    rec.pixel_touches += st.touches + trace_sum_visits(spec_.side());
    return {posterior_mean_sum(spec_, obs_, old), st.mean_sq, st.mean_dot, st.edge_sq, tr.inv,
            tr.phi_inv};
  }

  PriorGradients prior(const Hyperparams& theta) const {
    return prior_gradients(spec_, spectrum_, theta);
  }

  ImageBuffer mean(const Hyperparams&) const { return state_.m; }
  ImageBuffer initial_mean() const { return obs_.avg(); }

 private:
  const LatticeSpec& spec_;
  const ObservationSet& obs_;
  const SpectrumTable& spectrum_;
  const EMConfig& config_;
  MeanFieldState state_;
};

/// Linear-time EM. Expects centred observations.
inline EMTrace run_em(const LatticeSpec& spec, const ObservationSet& obs, const EMConfig& config) {
  require_shape(spec, obs.avg(), "run_em");
  const auto spectrum = cached_eigenvalues(spec, Boundary::Free);
  LinearMoments provider(spec, obs, *spectrum, config);
  return run_em_loop(spec, obs, config, provider);
}

/// Mean-field restoration under fixed theta: sweeps from init until the
/// per-sweep change drops below tol, at most t_final sweeps.
inline ImageBuffer restore(const LatticeSpec& spec, const ObservationSet& obs,
                           const Hyperparams& theta, std::size_t t_final,
                           const ImageBuffer* init = nullptr, double tol = 1e-8,
                           const SweepOptions& opt = {}) {
  theta.validate();
  return solve_to_tolerance(spec, obs, theta, init ? *init : obs.avg(), tol, t_final, opt).m;
}

}  // namespace gmrf
