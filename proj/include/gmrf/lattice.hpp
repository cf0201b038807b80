#pragma once

// Grid geometry, image buffers, observation sets and hyperparameters shared by
// every solver in the library.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmrf/numeric.hpp"

namespace gmrf {

/// Square v x v pixel lattice with a free boundary; pixels are indexed 0..n-1
/// in raster (row-major) order.
class LatticeSpec {
 public:
  explicit LatticeSpec(std::size_t side) : v_(side), n_(side * side) {
    if (side == 0) throw std::invalid_argument("LatticeSpec: side length must be positive");
  }

  std::size_t side() const noexcept { return v_; }
  std::size_t size() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return 2 * v_ * (v_ - 1); }

  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * v_ + col; }
  std::size_t row_of(std::size_t i) const noexcept { return i / v_; }
  std::size_t col_of(std::size_t i) const noexcept { return i % v_; }

  std::size_t degree(std::size_t i) const {
    check_index(i);
    const std::size_t r = row_of(i), c = col_of(i);
    return static_cast<std::size_t>(r > 0) + (r + 1 < v_) + (c > 0) + (c + 1 < v_);
  }

  /// Up, left, right, down neighbours that exist (ascending index order).
  std::vector<std::size_t> neighbors(std::size_t i) const {
    check_index(i);
    const std::size_t r = row_of(i), c = col_of(i);
    std::vector<std::size_t> out;
    out.reserve(4);
    if (r > 0) out.push_back(i - v_);
    if (c > 0) out.push_back(i - 1);
    if (c + 1 < v_) out.push_back(i + 1);
    if (r + 1 < v_) out.push_back(i + v_);
    return out;
  }

  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;

 private:
  void check_index(std::size_t i) const {
    if (i >= n_)
      throw std::invalid_argument("pixel index " + std::to_string(i) + " out of range for n=" +
                                  std::to_string(n_));
  }

  std::size_t v_;
  std::size_t n_;
};

inline std::vector<std::size_t> neighbors(const LatticeSpec& spec, std::size_t i) {
  return spec.neighbors(i);
}

/// Real-valued image in raster order.
struct ImageBuffer {
  std::vector<double> data;

  ImageBuffer() = default;
  explicit ImageBuffer(std::size_t n, double fill = 0.0) : data(n, fill) {}
  explicit ImageBuffer(std::vector<double> values) : data(std::move(values)) {}

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<const double> view() const noexcept { return data; }
  std::span<double> view() noexcept { return data; }

  bool all_finite() const noexcept {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

inline void require_shape(const LatticeSpec& spec, const ImageBuffer& img, const char* what) {
  if (img.size() != spec.size())
    throw std::invalid_argument(std::string(what) + ": image has " + std::to_string(img.size()) +
                                " pixels, lattice expects " + std::to_string(spec.size()));
}

/// The K degraded images together with the cached quantities every solver
/// needs: the average image, the sum of squared norms and the average
/// intensity of the average image.
class ObservationSet {
 public:
  ObservationSet(const LatticeSpec& spec, std::vector<ImageBuffer> images)
      : spec_(spec), images_(std::move(images)) {
    if (images_.empty()) throw std::invalid_argument("ObservationSet: need at least one image");
    const std::size_t n = spec_.size();
    avg_ = ImageBuffer(n);
    NeumaierSum sq;
    for (const auto& y : images_) {
      require_shape(spec_, y, "ObservationSet");
      if (!y.all_finite()) throw std::invalid_argument("ObservationSet: non-finite pixel");
      NeumaierSum row;
      for (std::size_t i = 0; i < n; ++i) {
        avg_[i] += y[i];
        row.add(y[i] * y[i]);
      }
      sq.add(row.value());
    }
    const double inv_k = 1.0 / static_cast<double>(images_.size());
    NeumaierSum total;
    for (auto& a : avg_.data) {
      a *= inv_k;
      total.add(a);
    }
    sq_norm_sum_ = sq.value();
    avg_intensity_ = total.value() / static_cast<double>(n);
  }

  const LatticeSpec& spec() const noexcept { return spec_; }
  const std::vector<ImageBuffer>& images() const noexcept { return images_; }
  std::size_t k_count() const noexcept { return images_.size(); }
  const ImageBuffer& avg() const noexcept { return avg_; }
  double sq_norm_sum() const noexcept { return sq_norm_sum_; }
  double avg_intensity() const noexcept { return avg_intensity_; }

 private:
  LatticeSpec spec_;
  std::vector<ImageBuffer> images_;
  ImageBuffer avg_;
  double sq_norm_sum_ = 0.0;
  double avg_intensity_ = 0.0;
};

struct Centered {
  ObservationSet obs;
  double offset;
};

/// Subtracts the global mean over all K*n pixels from every pixel.
inline Centered center(const ObservationSet& obs) {
  NeumaierSum total;
  for (const auto& y : obs.images())
    for (double p : y.data) total.add(p);
  const double offset =
      total.value() / static_cast<double>(obs.k_count() * obs.spec().size());
  std::vector<ImageBuffer> shifted = obs.images();
  for (auto& y : shifted)
    for (auto& p : y.data) p -= offset;
  return {ObservationSet(obs.spec(), std::move(shifted)), offset};
}

inline ImageBuffer shifted(ImageBuffer img, double offset) {
  for (auto& p : img.data) p += offset;
  return img;
}

/// Theta = {sigma^2, b, lambda, alpha}.
struct Hyperparams {
  double sigma2 = 2000.0;
  double b = 0.0;
  double lambda = 1e-7;
  double alpha = 1e-4;

  bool valid() const noexcept {
    return std::isfinite(sigma2) && std::isfinite(b) && std::isfinite(lambda) &&
           std::isfinite(alpha) && sigma2 > 0.0 && lambda > 0.0 && alpha >= 0.0;
  }

  void validate() const {
    if (!valid())
      throw std::domain_error("invalid hyperparameters: need sigma2 > 0, lambda > 0, alpha >= 0");
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// K / sigma^2, the data precision.
inline double data_precision(const ObservationSet& obs, const Hyperparams& theta) noexcept {
  return static_cast<double>(obs.k_count()) / theta.sigma2;
}

}  // namespace gmrf
