#pragma once

// Posterior mean by successive substitution in the coordinatewise
// fixed-point equation
//
//   m_i = (b + beta y_i + alpha sum_{j ~ i} m_j) / (lambda + alpha deg(i) + beta),
//
// with beta = K / sigma^2. For a Gaussian this fixed point is the exact
// posterior mean S_post^{-1} c.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <thread>
#include <vector>

#include "gmrf/lattice.hpp"
#include "gmrf/numeric.hpp"

namespace gmrf {

enum class SweepMode { GaussSeidel, Jacobi };

struct MeanFieldState {
  ImageBuffer m;
  std::size_t sweeps_done = 0;
  double last_delta = 0.0;  // max |change| over the last sweep
};

/// Reductions of the iterate gathered during the final sweep.
struct SweepStats {
  double mean_sq = 0.0;    // ||m||^2
  double mean_dot = 0.0;   // m . y_avg
  double edge_sq = 0.0;    // sum over edges (m_i - m_j)^2
  std::uint64_t touches = 0;
};

struct SweepOptions {
  SweepMode mode = SweepMode::GaussSeidel;
  unsigned threads = 1;  // Jacobi only
};

namespace detail {

struct SweepCoefficients {
  double b, beta, alpha;
  std::array<double, 5> inv_denom;  // indexed by vertex degree
};

inline SweepCoefficients sweep_coefficients(const ObservationSet& obs, const Hyperparams& theta) {
  SweepCoefficients k{theta.b, data_precision(obs, theta), theta.alpha, {}};
  for (std::size_t d = 0; d < 5; ++d)
    k.inv_denom[d] = 1.0 / (theta.lambda + theta.alpha * static_cast<double>(d) + k.beta);
  return k;
}

struct RowSums {
  double max_delta = 0.0, sq = 0.0, dot = 0.0, edge = 0.0;
};

// One row of the in-place raster sweep. The left neighbour is carried in a
// register instead of being re-read from the row just written. Left and upper
// neighbours are final when pixel c is written, so the two edge terms added
// here are exact for the iterate this sweep produces.
template <bool Up, bool Down>
inline void gauss_seidel_row(std::size_t v, double* row, const double* above,
                             const double* below, const double* y, const SweepCoefficients& k,
                             RowSums& out) {
  constexpr std::size_t vert = (Up ? 1 : 0) + (Down ? 1 : 0);
  auto vertical = [&](std::size_t c) {
    double s = 0.0;
    if constexpr (Up) s += above[c];
    if constexpr (Down) s += below[c];
    return s;
  };
  double mx = 0.0, sq = 0.0, dot = 0.0, edge = 0.0;
  auto account = [&](std::size_t c, double mi) {
    mx = std::max(mx, std::fabs(mi - row[c]));
    if constexpr (Up) edge += (mi - above[c]) * (mi - above[c]);
    sq += mi * mi;
    dot += mi * y[c];
  };
  if (v == 1) {
    const double mi = (k.b + k.beta * y[0] + k.alpha * vertical(0)) * k.inv_denom[vert];
    account(0, mi);
    row[0] = mi;
    out = {mx, sq, dot, edge};
    return;
  }
  const double inv_edge = k.inv_denom[vert + 1];
  const double inv_mid = k.inv_denom[vert + 2];
  const double carry = k.alpha * inv_mid;
  double prev = (k.b + k.beta * y[0] + k.alpha * (vertical(0) + row[1])) * inv_edge;
  account(0, prev);
  row[0] = prev;
  for (std::size_t c = 1; c + 1 < v; ++c) {
    const double rest = (k.b + k.beta * y[c] + k.alpha * (vertical(c) + row[c + 1])) * inv_mid;
    const double mi = rest + carry * prev;
    account(c, mi);
    edge += (mi - prev) * (mi - prev);
    row[c] = mi;
    prev = mi;
  }
  const std::size_t c = v - 1;
  const double mi = (k.b + k.beta * y[c] + k.alpha * (vertical(c) + prev)) * inv_edge;
  account(c, mi);
  edge += (mi - prev) * (mi - prev);
  row[c] = mi;
  out = {mx, sq, dot, edge};
}

inline double gauss_seidel_sweep(std::size_t v, double* m, const double* y,
                                 const SweepCoefficients& k, SweepStats& st) {
  double max_delta = 0.0;
  NeumaierSum sq, dot, edge;
  auto fold = [&](const RowSums& rs) {
    max_delta = std::max(max_delta, rs.max_delta);
    sq.add(rs.sq);
    dot.add(rs.dot);
    edge.add(rs.edge);
  };
  for (std::size_t r = 0; r < v; ++r) {
    const bool up = r > 0, down = r + 1 < v;
    double* row = m + r * v;
    const double* yrow = y + r * v;
    RowSums rs;
    if (up && down)
      gauss_seidel_row<true, true>(v, row, row - v, row + v, yrow, k, rs);
    else if (up)
      gauss_seidel_row<true, false>(v, row, row - v, nullptr, yrow, k, rs);
    else if (down)
      gauss_seidel_row<false, true>(v, row, nullptr, row + v, yrow, k, rs);
    else
      gauss_seidel_row<false, false>(v, row, nullptr, nullptr, yrow, k, rs);
    fold(rs);
  }
  st.mean_sq = sq.value();
  st.mean_dot = dot.value();
  st.edge_sq = edge.value();
  // one write per pixel plus one read per neighbour: n + 2|E|
  st.touches += static_cast<std::uint64_t>(v) * v + 4 * static_cast<std::uint64_t>(v) * (v - 1);
  return max_delta;
}

inline double jacobi_rows(std::size_t v, std::size_t r0, std::size_t r1, const double* m,
                          double* out, const double* y, const SweepCoefficients& k) {
  double max_delta = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = 0; c < v; ++c) {
      const std::size_t i = r * v + c;
      double nb = 0.0;
      std::size_t deg = 0;
      if (r > 0) nb += m[i - v], ++deg;
      if (c > 0) nb += m[i - 1], ++deg;
      if (c + 1 < v) nb += m[i + 1], ++deg;
      if (r + 1 < v) nb += m[i + v], ++deg;
      out[i] = (k.b + k.beta * y[i] + k.alpha * nb) * k.inv_denom[deg];
      max_delta = std::max(max_delta, std::fabs(out[i] - m[i]));
    }
  }
  return max_delta;
}

inline SweepStats image_stats(std::size_t v, const double* m, const double* y) {
  SweepStats st;
  NeumaierSum sq, dot, edge;
  for (std::size_t r = 0; r < v; ++r) {
    double rsq = 0.0, rdot = 0.0, redge = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      const std::size_t i = r * v + c;
      rsq += m[i] * m[i];
      rdot += m[i] * y[i];
      if (c > 0) redge += (m[i] - m[i - 1]) * (m[i] - m[i - 1]);
      if (r > 0) redge += (m[i] - m[i - v]) * (m[i] - m[i - v]);
    }
    sq.add(rsq);
    dot.add(rdot);
    edge.add(redge);
  }
  st.mean_sq = sq.value();
  st.mean_dot = dot.value();
  st.edge_sq = edge.value();
  return st;
}

inline double jacobi_sweep(std::size_t v, std::vector<double>& m, const double* y,
                           const SweepCoefficients& k, unsigned threads, SweepStats& st) {
  std::vector<double> next(m.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(v)));
  double max_delta = 0.0;
  if (threads == 1) {
    max_delta = jacobi_rows(v, 0, v, m.data(), next.data(), y, k);
  } else {
    std::vector<double> part(threads, 0.0);
    std::vector<std::jthread> pool;
    const std::size_t chunk = (v + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t r0 = std::min(v, t * chunk), r1 = std::min(v, r0 + chunk);
      pool.emplace_back([&, t, r0, r1] {
        part[t] = jacobi_rows(v, r0, r1, m.data(), next.data(), y, k);
      });
    }
    pool.clear();
    max_delta = *std::max_element(part.begin(), part.end());
  }
  m.swap(next);
  const std::uint64_t touches = st.touches + m.size() + 4 * v * (v - 1);
  st = image_stats(v, m.data(), y);
  st.touches = touches;
  return max_delta;
}

}  // namespace detail

/// One sweep over the lattice; updates m, sweeps_done and last_delta.
inline void mf_sweep(MeanFieldState& state, const LatticeSpec& spec, const ObservationSet& obs,
                     const Hyperparams& theta, const SweepOptions& opt = {},
                     SweepStats* stats = nullptr) {
  require_shape(spec, state.m, "mf_sweep");
  require_shape(spec, obs.avg(), "mf_sweep");
  const auto k = detail::sweep_coefficients(obs, theta);
  SweepStats local;
  SweepStats& st = stats ? *stats : local;
  if (opt.mode == SweepMode::GaussSeidel)
    state.last_delta =
        detail::gauss_seidel_sweep(spec.side(), state.m.data.data(), obs.avg().data.data(), k, st);
  else
    state.last_delta =
        detail::jacobi_sweep(spec.side(), state.m.data, obs.avg().data.data(), k, opt.threads, st);
  ++state.sweeps_done;
}

/// Exactly t_mf sweeps from init (a warm restart when init is a previous iterate).
inline MeanFieldState solve_map(const LatticeSpec& spec, const ObservationSet& obs,
                                const Hyperparams& theta, const ImageBuffer& init,
                                std::size_t t_mf, const SweepOptions& opt = {},
                                SweepStats* stats = nullptr) {
  if (t_mf < 1) throw std::invalid_argument("solve_map: t_mf must be >= 1");
  MeanFieldState state{init, 0, 0.0};
  for (std::size_t t = 0; t < t_mf; ++t) mf_sweep(state, spec, obs, theta, opt, stats);
  return state;
}

/// Sweeps until last_delta < tol or max_sweeps is reached.
inline MeanFieldState solve_to_tolerance(const LatticeSpec& spec, const ObservationSet& obs,
                                         const Hyperparams& theta, const ImageBuffer& init,
                                         double tol, std::size_t max_sweeps,
                                         const SweepOptions& opt = {}) {
  MeanFieldState state{init, 0, 0.0};
  do {
    mf_sweep(state, spec, obs, theta, opt);
  } while (state.last_delta >= tol && state.sweeps_done < max_sweeps);
  return state;
}

/// max_i |m_i - RHS_i(m)| for the fixed-point equation.
inline double mf_residual(const LatticeSpec& spec, const ObservationSet& obs,
                          const Hyperparams& theta, const ImageBuffer& m) {
  require_shape(spec, m, "mf_residual");
  const auto k = detail::sweep_coefficients(obs, theta);
  std::vector<double> out(m.size());
  return detail::jacobi_rows(spec.side(), 0, spec.side(), m.data.data(), out.data(),
                             obs.avg().data.data(), k);
}

}  // namespace gmrf
