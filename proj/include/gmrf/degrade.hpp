#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gmrf/lattice.hpp"
#include "gmrf/numeric.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf {

struct NoiseSpec {
  double sigma = 30.0;
  std::size_t k_count = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("NoiseSpec: sigma must be positive");
    if (k_count < 1) throw std::invalid_argument("NoiseSpec: need at least one image");
  }
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stateless standard-normal stream: the value at (seed, stream, counter)
/// depends on nothing else, so draws can be generated in any order.
class CounterNormal {
 public:
  CounterNormal(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

  double operator()(std::uint64_t counter) const noexcept {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  // (0, 1]
  double uniform(std::uint64_t c) const noexcept {
    const std::uint64_t bits = splitmix64(key_ + splitmix64(c));
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
  }

  std::uint64_t key_;
};

/// K independent AWGN degradations y^(k) = x + nu^(k).
inline ObservationSet degrade(const LatticeSpec& spec, const ImageBuffer& x,
                              const NoiseSpec& noise) {
  noise.validate();
  require_shape(spec, x, "degrade");
  std::vector<ImageBuffer> ys;
  ys.reserve(noise.k_count);
  for (std::size_t k = 0; k < noise.k_count; ++k) {
    const CounterNormal gauss(noise.seed, k);
    ImageBuffer y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + noise.sigma * gauss(i);
    ys.push_back(std::move(y));
  }
  return ObservationSet(spec, std::move(ys));
}

/// Exact draw from the GMRF prior via its spectral factorisation:
/// x = (b / lambda) 1 + U diag((lambda + alpha Phi)^{-1/2}) xi.
inline ImageBuffer sample_prior(const LatticeSpec& spec, const Hyperparams& theta,
                                std::uint64_t seed, Boundary boundary = Boundary::Free) {
  if (!(theta.lambda > 0.0) || !(theta.alpha >= 0.0))
    throw std::domain_error("sample_prior: need lambda > 0 and alpha >= 0");
  const auto spectrum = cached_eigenvalues(spec, boundary);
  const TransformPlan plan(spec, boundary);
  const CounterNormal gauss(seed, 0xF00DULL);
  ImageBuffer coeff(spec.size());
  for (std::size_t i = 0; i < coeff.size(); ++i)
    coeff[i] = gauss(i) / std::sqrt(theta.lambda + theta.alpha * (*spectrum)[i]);
  return shifted(plan.inverse(coeff), theta.b / theta.lambda);
}

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.size() != b.size() || a.size() == 0)
    throw std::invalid_argument("mse: images differ in size");
  NeumaierSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add((a[i] - b[i]) * (a[i] - b[i]));
  return s.value() / static_cast<double>(a.size());
}

/// 10 log10(255^2 / mse); +inf for identical images.
inline double psnr_from_mse(double err) {
  if (err <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / err);
}

inline double psnr(const ImageBuffer& a, const ImageBuffer& b) { return psnr_from_mse(mse(a, b)); }

inline ImageBuffer clipped(ImageBuffer img, double lo = 0.0, double hi = 255.0) {
  for (auto& p : img.data) p = std::clamp(p, lo, hi);
  return img;
}

/// Deterministic piecewise-smooth test scene in [0, 255]: a tilted ramp with
/// slow undulation, a bright disc, a dark rectangle and a soft blob. Shapes
/// are defined in unit coordinates so the same scene is produced at any v.
inline ImageBuffer natural_scene(const LatticeSpec& spec) {
  const std::size_t v = spec.side();
  ImageBuffer img(spec.size());
  for (std::size_t r = 0; r < v; ++r)
    for (std::size_t c = 0; c < v; ++c) {
      const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(v);
      const double w = (static_cast<double>(r) + 0.5) / static_cast<double>(v);
      double val = 70.0 + 90.0 * u + 25.0 * w + 18.0 * std::sin(2.0 * kPi * (1.3 * u + 0.7 * w));
      const double dx = u - 0.68, dy = w - 0.32;
      if (dx * dx + dy * dy < 0.18 * 0.18) val += 55.0;
      if (u > 0.12 && u < 0.42 && w > 0.55 && w < 0.88) val -= 50.0;
      const double bx = u - 0.75, by = w - 0.75;
      val += 35.0 * std::exp(-(bx * bx + by * by) / (2.0 * 0.08 * 0.08));
      img[spec.index(r, c)] = std::clamp(val, 5.0, 250.0);
    }
  return img;
}

}  // namespace gmrf
