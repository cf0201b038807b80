#pragma once

// Closed-form grid-Laplacian spectra and the fast orthonormal transforms that
// diagonalise them.
//
//   Free boundary: separable orthonormal DCT-II, forward = U^t, inverse = U.
//   Torus:         separable orthonormal real Fourier basis (halfcomplex
//                  packing per axis); eigenvalues are paired so |z|^2 per
//                  complex bin is carried by two real coefficients.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmrf/lattice.hpp"
#include "gmrf/numeric.hpp"

namespace gmrf {

enum class Boundary { Free, Torus };

inline const char* to_string(Boundary b) { return b == Boundary::Free ? "free" : "torus"; }

/// Eigenvalues of the grid Laplacian, raster order over the v x v table of
/// (row frequency, column frequency). Phi(i, j) = axis[i] + axis[j].
struct SpectrumTable {
  Boundary boundary = Boundary::Free;
  std::size_t side = 0;
  std::vector<double> axis;    // 1-D path/cycle Laplacian eigenvalues, length v
  std::vector<double> values;  // length n

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

inline std::vector<double> axis_eigenvalues(std::size_t v, Boundary boundary) {
  std::vector<double> a(v);
  const double denom = (boundary == Boundary::Free ? 2.0 : 1.0) * static_cast<double>(v);
  for (std::size_t k = 0; k < v; ++k) {
    const double s = std::sin(kPi * static_cast<double>(k) / denom);
    a[k] = 4.0 * s * s;
  }
  return a;
}

inline SpectrumTable eigenvalues(const LatticeSpec& spec, Boundary boundary) {
  SpectrumTable t;
  t.boundary = boundary;
  t.side = spec.side();
  t.axis = axis_eigenvalues(spec.side(), boundary);
  const std::size_t v = spec.side();
  t.values.resize(spec.size());
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) t.values[i * v + j] = t.axis[i] + t.axis[j];
  return t;
}

/// Process-wide cache; tables are pure functions of (v, boundary).
inline std::shared_ptr<const SpectrumTable> cached_eigenvalues(const LatticeSpec& spec,
                                                               Boundary boundary) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, Boundary>, std::shared_ptr<const SpectrumTable>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{spec.side(), boundary}];
  if (!slot) slot = std::make_shared<const SpectrumTable>(eigenvalues(spec, boundary));
  return slot;
}

/// Sums over the spectrum of 1/(p + q Phi) and Phi/(p + q Phi).
struct TraceSums {
  double inv = 0.0;      // sum 1 / (p + q Phi_i)
  double phi_inv = 0.0;  // sum Phi_i / (p + q Phi_i)
};

/// Exploits Phi(i,j) = Phi(j,i): only the upper triangle of the table is
/// visited, so this costs n/2 divisions.
inline TraceSums trace_sums(const SpectrumTable& spectrum, double p, double q) {
  const auto& a = spectrum.axis;
  const std::size_t v = a.size();
  NeumaierSum inv_total, phi_total;
  for (std::size_t i = 0; i < v; ++i) {
    const double ai = a[i];
    const double base = p + q * ai;
    const double d_diag = 1.0 / (base + q * ai);
    double s0[4] = {d_diag, 0.0, 0.0, 0.0};
    double s1[4] = {2.0 * ai * d_diag, 0.0, 0.0, 0.0};
    double o0 = 0.0, o1 = 0.0;
    std::size_t j = i + 1;
    for (; j + 4 <= v; j += 4) {
      for (std::size_t l = 0; l < 4; ++l) {
        const double aj = a[j + l];
        const double r = 1.0 / (base + q * aj);
        s0[l] += 2.0 * r;
        s1[l] += 2.0 * (ai + aj) * r;
      }
    }
    for (; j < v; ++j) {
      const double r = 1.0 / (base + q * a[j]);
      o0 += 2.0 * r;
      o1 += 2.0 * (ai + a[j]) * r;
    }
    inv_total.add((s0[0] + s0[1]) + (s0[2] + s0[3]) + o0);
    phi_total.add((s1[0] + s1[1]) + (s1[2] + s1[3]) + o1);
  }
  return {inv_total.value(), phi_total.value()};
}

/// sum ln(p + q Phi_i); used only by the free-energy values.
inline double log_sum(const SpectrumTable& spectrum, double p, double q) {
  const auto& a = spectrum.axis;
  const std::size_t v = a.size();
  NeumaierSum total;
  for (std::size_t i = 0; i < v; ++i) {
    double row = std::log(p + 2.0 * q * a[i]);
    for (std::size_t j = i + 1; j < v; ++j) row += 2.0 * std::log(p + q * (a[i] + a[j]));
    total.add(row);
  }
  return total.value();
}

/// Small row-major dense matrix used only by verification paths.
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

/// Orthonormal inverse-DCT matrix K (columns are the DCT-II basis vectors).
inline DenseMatrix dct_matrix(std::size_t v) {
  if (v == 0) throw std::invalid_argument("dct_matrix: v must be positive");
  DenseMatrix k(v, v);
  const double vd = static_cast<double>(v);
  for (std::size_t i = 0; i < v; ++i) {
    k(i, 0) = 1.0 / std::sqrt(vd);
    for (std::size_t j = 1; j < v; ++j)
      k(i, j) = std::sqrt(2.0 / vd) *
                std::cos(kPi * static_cast<double>(j) / vd * (static_cast<double>(i) + 0.5));
  }
  return k;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

using PlanHandle = std::shared_ptr<fftw_plan_s>;

inline PlanHandle make_r2r_plan(std::size_t v, fftw_r2r_kind kind) {
  std::lock_guard lock(fftw_planner_mutex());
  const int nn = static_cast<int>(v);
  std::vector<double> buf(v * v);
  fftw_plan p = fftw_plan_r2r_2d(nn, nn, buf.data(), buf.data(), kind, kind,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (p == nullptr) throw std::runtime_error("FFTW could not create a transform plan");
  return PlanHandle(p, PlanDeleter{});
}

}  // namespace detail

/// Fast forward/inverse transform pair for one lattice and boundary.
/// Immutable once built. forward/inverse may be called concurrently; each
/// call works in caller-owned output storage.
class TransformPlan {
 public:
  TransformPlan(const LatticeSpec& spec, Boundary boundary) : spec_(spec), boundary_(boundary) {
    const std::size_t v = spec.side();
    const double vd = static_cast<double>(v);
    fwd_scale_.resize(v);
    inv_scale_.resize(v);
    if (boundary == Boundary::Free) {
      forward_ = detail::make_r2r_plan(v, FFTW_REDFT10);
      inverse_ = detail::make_r2r_plan(v, FFTW_REDFT01);
      for (std::size_t k = 0; k < v; ++k) {
        fwd_scale_[k] = k == 0 ? 1.0 / (2.0 * std::sqrt(vd)) : 1.0 / std::sqrt(2.0 * vd);
        inv_scale_[k] = 1.0 / (fwd_scale_[k] * 2.0 * vd);
      }
    } else {
      forward_ = detail::make_r2r_plan(v, FFTW_R2HC);
      inverse_ = detail::make_r2r_plan(v, FFTW_HC2R);
      for (std::size_t k = 0; k < v; ++k) {
        const bool unpaired = k == 0 || 2 * k == v;
        fwd_scale_[k] = unpaired ? 1.0 / std::sqrt(vd) : std::sqrt(2.0 / vd);
        inv_scale_[k] = 1.0 / (fwd_scale_[k] * vd);
      }
    }
  }

  const LatticeSpec& spec() const noexcept { return spec_; }
  Boundary boundary() const noexcept { return boundary_; }

  /// out = U^t in
  void forward(std::span<const double> in, std::span<double> out) const {
    check(in, out);
    std::copy(in.begin(), in.end(), out.begin());
    fftw_execute_r2r(forward_.get(), out.data(), out.data());
    apply_scale(out, fwd_scale_);
  }

  /// out = U in
  void inverse(std::span<const double> in, std::span<double> out) const {
    check(in, out);
    std::copy(in.begin(), in.end(), out.begin());
    apply_scale(out, inv_scale_);
    fftw_execute_r2r(inverse_.get(), out.data(), out.data());
  }

  ImageBuffer forward(const ImageBuffer& img) const {
    require_shape(spec_, img, "TransformPlan::forward");
    ImageBuffer out(img.size());
    forward(img.view(), out.view());
    return out;
  }

  ImageBuffer inverse(const ImageBuffer& coeffs) const {
    require_shape(spec_, coeffs, "TransformPlan::inverse");
    ImageBuffer out(coeffs.size());
    inverse(coeffs.view(), out.view());
    return out;
  }

 private:
  void check(std::span<const double> in, std::span<double> out) const {
    if (in.size() != spec_.size() || out.size() != spec_.size())
      throw std::invalid_argument("TransformPlan: buffer size does not match lattice (n=" +
                                  std::to_string(spec_.size()) + ")");
  }

  void apply_scale(std::span<double> x, const std::vector<double>& s) const {
    const std::size_t v = spec_.side();
    for (std::size_t r = 0; r < v; ++r) {
      const double sr = s[r];
      double* row = x.data() + r * v;
      for (std::size_t c = 0; c < v; ++c) row[c] *= sr * s[c];
    }
  }

  LatticeSpec spec_;
  Boundary boundary_;
  detail::PlanHandle forward_, inverse_;
  std::vector<double> fwd_scale_, inv_scale_;
};

inline ImageBuffer forward(const TransformPlan& plan, const ImageBuffer& img) {
  return plan.forward(img);
}
inline ImageBuffer inverse(const TransformPlan& plan, const ImageBuffer& coeffs) {
  return plan.inverse(coeffs);
}

}  // namespace gmrf
