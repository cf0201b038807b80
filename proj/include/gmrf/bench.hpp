#pragma once

// Timing harness: full restoration per method on synthetic scenes, excluding
// file I/O. One untimed warm-up per (size, method) fills the eigenvalue cache
// and FFTW's internal tables so the first trial is not penalised.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "gmrf/degrade.hpp"
#include "gmrf/pipeline.hpp"

namespace gmrf {

struct BenchConfig {
  std::vector<std::size_t> sizes{128, 256, 512};
  std::vector<Method> methods{Method::Linear, Method::DctFft};
  std::size_t trials = 3;
  double sigma = 30.0;
  std::size_t k_count = 8;
  std::uint64_t seed = 0;
  DenoiseOptions options{};
  // Run exactly this many EM iterations (no early stop), so that times at
  // different sizes are comparable per iteration.
  std::optional<std::size_t> fixed_iters;
};

struct BenchRow {
  std::size_t side = 0;
  Method method = Method::Linear;
  std::vector<double> times_s;
  double mean_s = 0.0, stddev_s = 0.0;
  double mean_iters = 0.0;
  double per_iter_s = 0.0;        // mean_s / mean_iters
  double touches_per_iter = 0.0;  // instrumented pixel touches
};

struct SpeedUp {
  std::size_t side = 0;
  double linear_s = 0.0, dctfft_s = 0.0;
  double sur_percent = 0.0;
};

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Sample standard deviation (zero for fewer than two values).
inline double stddev_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// (t_dctfft - t_linear) / t_dctfft * 100.
inline double speed_up_rate(double linear_s, double dctfft_s) {
  return (dctfft_s - linear_s) / dctfft_s * 100.0;
}

inline std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  DenoiseOptions opt = cfg.options;
  if (cfg.fixed_iters) {
    opt.em.max_em_iters = *cfg.fixed_iters;
    opt.em.epsilon = 1e-300;
  }
  std::vector<BenchRow> rows;
  for (std::size_t v : cfg.sizes) {
    const LatticeSpec spec(v);
    const ImageBuffer truth = natural_scene(spec);
    for (Method method : cfg.methods) {
      BenchRow row{v, method, {}, 0.0, 0.0, 0.0, 0.0, 0.0};
      {
        const ObservationSet warm = degrade(spec, truth, {cfg.sigma, cfg.k_count, cfg.seed});
        (void)denoise(warm, method, opt);
      }
      double iters = 0.0, touches = 0.0;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const ObservationSet obs = degrade(spec, truth, {cfg.sigma, cfg.k_count, cfg.seed + t});
        const Restoration res = denoise(obs, method, opt);
        row.times_s.push_back(res.wall_time_s);
        iters += static_cast<double>(res.trace.iterations_used);
        for (const auto& rec : res.trace.records) touches += static_cast<double>(rec.pixel_touches);
      }
      row.mean_s = mean_of(row.times_s);
      row.stddev_s = stddev_of(row.times_s);
      row.mean_iters = iters / static_cast<double>(cfg.trials);
      row.per_iter_s = row.mean_iters > 0 ? row.mean_s / row.mean_iters : 0.0;
      row.touches_per_iter = iters > 0 ? touches / iters : 0.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<SpeedUp> speed_ups(const std::vector<BenchRow>& rows) {
  std::vector<SpeedUp> out;
  for (const auto& a : rows) {
    if (a.method != Method::Linear) continue;
    for (const auto& b : rows)
      if (b.method == Method::DctFft && b.side == a.side)
        out.push_back({a.side, a.mean_s, b.mean_s, speed_up_rate(a.mean_s, b.mean_s)});
  }
  return out;
}

}  // namespace gmrf
