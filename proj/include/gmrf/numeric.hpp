#pragma once

#include <cmath>
#include <numbers>

namespace gmrf {

/// Compensated (Neumaier) accumulator. Reductions over the lattice sum each
/// row in plain double and feed row totals through this, so the error stays
/// O(v eps) instead of O(n eps).
class NeumaierSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  NeumaierSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)
inline constexpr double kPi = std::numbers::pi;

}  // namespace gmrf
