#pragma once

// End-to-end restoration: centre the observations, estimate Theta with the
// selected method, compute the posterior mean and shift it back.

#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gmrf/em.hpp"
#include "gmrf/em_spectral.hpp"
#include "gmrf/lattice.hpp"
#include "gmrf/oracle.hpp"

namespace gmrf {

enum class Method { Linear, DctFft, Torus, Oracle };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Linear: return "linear";
    case Method::DctFft: return "dctfft";
    case Method::Torus: return "torus";
    case Method::Oracle: return "oracle";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "linear") return Method::Linear;
  if (s == "dctfft") return Method::DctFft;
  if (s == "torus") return Method::Torus;
  if (s == "oracle") return Method::Oracle;
  throw std::invalid_argument("unknown method '" + std::string(s) +
                              "' (expected linear, dctfft, torus or oracle)");
}

struct DenoiseOptions {
  EMConfig em{};
  // Linear method only: extra mean-field sweeps after EM, warm-started from
  // the EM iterate, until the per-sweep change is below polish_tol. Zero
  // returns the EM iterate as is.
  std::size_t polish_sweeps = 0;
  double polish_tol = 1e-8;
};

struct Restoration {
  EMTrace trace;
  ImageBuffer restored;  // de-centred, unclipped
  double offset = 0.0;
  double wall_time_s = 0.0;
};

/// Runs one method on raw (uncentred) observations.
inline Restoration denoise(const ObservationSet& raw, Method method, const DenoiseOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const LatticeSpec& spec = raw.spec();
  auto [obs, offset] = center(raw);
  Restoration out;
  out.offset = offset;
  switch (method) {
    case Method::Linear:
      out.trace = run_em(spec, obs, opt.em);
      if (opt.polish_sweeps > 0 && out.trace.iterations_used > 0) {
        const auto t1 = std::chrono::steady_clock::now();
        out.trace.m = restore(spec, obs, out.trace.theta, opt.polish_sweeps, &out.trace.m,
                              opt.polish_tol, opt.em.sweep);
        out.trace.phases.restore_s += detail::seconds_since(t1);
      }
      break;
    case Method::DctFft:
      out.trace = run_em_spectral(spec, obs, opt.em, Boundary::Free);
      break;
    case Method::Torus:
      out.trace = run_em_spectral(spec, obs, opt.em, Boundary::Torus);
      break;
    case Method::Oracle:
      out.trace = oracle::run_em_dense(spec, obs, opt.em);
      break;
  }
  out.restored = shifted(out.trace.m, offset);
  out.wall_time_s = detail::seconds_since(t0);
  return out;
}

}  // namespace gmrf
