#pragma once

// Dense reference computations at desk scale (v <= 32). Nothing here uses the
// spectral closed forms: precisions are assembled entrywise from the lattice,
// moments come from a Cholesky factorisation, and the Q-gradients are the
// plain Gaussian expectations.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gmrf/em.hpp"
#include "gmrf/free_energy.hpp"
#include "gmrf/lattice.hpp"
#include "gmrf/numeric.hpp"
#include "gmrf/spectral.hpp"

namespace gmrf::oracle {

inline constexpr std::size_t kMaxDenseSide = 32;

inline void require_desk_scale(const LatticeSpec& spec) {
  if (spec.side() > kMaxDenseSide)
    throw std::invalid_argument("dense oracle limited to v <= 32");
}

/// Undirected edges of the lattice; the torus adds wrap-around edges (for
/// v = 2 these duplicate the interior ones, as in the 2-cycle multigraph).
inline std::vector<std::pair<std::size_t, std::size_t>> edges(const LatticeSpec& spec,
                                                              Boundary boundary = Boundary::Free) {
  const std::size_t v = spec.side();
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t r = 0; r < v; ++r)
    for (std::size_t c = 0; c < v; ++c) {
      const std::size_t i = spec.index(r, c);
      if (c + 1 < v) e.emplace_back(i, i + 1);
      if (r + 1 < v) e.emplace_back(i, i + v);
      if (boundary == Boundary::Torus && v >= 2) {
        if (c + 1 == v) e.emplace_back(i, spec.index(r, 0));
        if (r + 1 == v) e.emplace_back(i, spec.index(0, c));
      }
    }
  return e;
}

inline Eigen::MatrixXd laplacian(const LatticeSpec& spec, Boundary boundary = Boundary::Free) {
  require_desk_scale(spec);
  const auto n = static_cast<Eigen::Index>(spec.size());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : edges(spec, boundary)) {
    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
    lap(a, a) += 1.0;
    lap(b, b) += 1.0;
    lap(a, b) -= 1.0;
    lap(b, a) -= 1.0;
  }
  return lap;
}

inline Eigen::VectorXd to_eigen(const ImageBuffer& img) {
  return Eigen::Map<const Eigen::VectorXd>(img.data.data(), static_cast<Eigen::Index>(img.size()));
}

inline ImageBuffer from_eigen(const Eigen::VectorXd& x) {
  return ImageBuffer(std::vector<double>(x.data(), x.data() + x.size()));
}

/// Gaussian with density proportional to exp(shift^t x - x^t precision x / 2).
class DenseGaussian {
 public:
  DenseGaussian(Eigen::MatrixXd precision, Eigen::VectorXd shift)
      : precision_(std::move(precision)), shift_(std::move(shift)), llt_(precision_) {
    factorised();
    mean_ = llt_.solve(shift_);
    mean_ += llt_.solve(shift_ - precision_ * mean_);
  }

  /// precision = diag I + scale lap with an integer-valued lap. When diag is
  /// tiny next to scale * degree, the assembled diagonal rounds most of diag
  /// away; the mean is therefore refined against residuals formed from the
  /// split in long double, which recovers it to working precision.
  DenseGaussian(double diag, double scale, const Eigen::MatrixXd& lap, Eigen::VectorXd shift)
      : precision_(scale * lap), shift_(std::move(shift)) {
    precision_.diagonal().array() += diag;
    llt_.compute(precision_);
    factorised();
    mean_ = llt_.solve(shift_);
    const Eigen::Index n = lap.rows();
    Eigen::VectorXd r(n);
    for (int pass = 0; pass < 3; ++pass) {
      for (Eigen::Index i = 0; i < n; ++i) {
        long double acc = 0.0L;
        for (Eigen::Index j = 0; j < n; ++j)
          if (lap(i, j) != 0.0) acc += static_cast<long double>(lap(i, j)) * mean_(j);
        r(i) = static_cast<double>(static_cast<long double>(shift_(i)) -
                                   static_cast<long double>(diag) * mean_(i) -
                                   static_cast<long double>(scale) * acc);
      }
      mean_ += llt_.solve(r);
    }
  }

  const Eigen::MatrixXd& precision() const noexcept { return precision_; }
  const Eigen::VectorXd& shift() const noexcept { return shift_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  double logdet() const noexcept { return logdet_; }

  Eigen::MatrixXd covariance() const {
    return llt_.solve(Eigen::MatrixXd::Identity(precision_.rows(), precision_.cols()));
  }

  /// shift^t precision^{-1} shift
  double quadratic() const { return shift_.dot(mean_); }

  /// -ln of the normaliser of exp(shift^t x - x^t P x / 2).
  double neg_log_partition() const {
    const double n = static_cast<double>(precision_.rows());
    return -0.5 * quadratic() + 0.5 * logdet_ - 0.5 * n * kLog2Pi;
  }

 private:
  void factorised() {
    if (llt_.info() != Eigen::Success)
      throw std::domain_error("precision matrix is not positive definite");
    const Eigen::MatrixXd lower = llt_.matrixL();
    logdet_ = 2.0 * lower.diagonal().array().log().sum();
  }

  Eigen::MatrixXd precision_;
  Eigen::VectorXd shift_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double logdet_ = 0.0;
  Eigen::VectorXd mean_;
};

inline DenseGaussian build_prior(const LatticeSpec& spec, const Hyperparams& theta,
                                 Boundary boundary = Boundary::Free) {
  require_desk_scale(spec);
  theta.validate();
  const auto n = static_cast<Eigen::Index>(spec.size());
  return DenseGaussian(theta.lambda, theta.alpha, laplacian(spec, boundary),
                       Eigen::VectorXd::Constant(n, theta.b));
}

inline DenseGaussian build_posterior(const LatticeSpec& spec, const ObservationSet& obs,
                                     const Hyperparams& theta,
                                     Boundary boundary = Boundary::Free) {
  require_desk_scale(spec);
  require_shape(spec, obs.avg(), "build_posterior");
  // The noise term keeps the posterior proper even without the ridge.
  if (!(theta.sigma2 > 0.0) || !(theta.lambda >= 0.0) || !(theta.alpha >= 0.0))
    throw std::domain_error("posterior needs sigma2 > 0, lambda >= 0, alpha >= 0");
  const double beta = static_cast<double>(obs.k_count()) / theta.sigma2;
  Eigen::VectorXd c = beta * to_eigen(obs.avg());
  c.array() += theta.b;
  return DenseGaussian(theta.lambda + beta, theta.alpha, laplacian(spec, boundary), std::move(c));
}

inline double prior_free_energy(const LatticeSpec& spec, const Hyperparams& theta) {
  return build_prior(spec, theta).neg_log_partition();
}

inline double posterior_free_energy(const LatticeSpec& spec, const ObservationSet& obs,
                                    const Hyperparams& theta) {
  return obs.sq_norm_sum() / (2.0 * theta.sigma2) +
         build_posterior(spec, obs, theta).neg_log_partition();
}

/// Expectations of a Gaussian that the gradients need.
struct GaussianExpectations {
  double sum = 0.0;        // sum_i E[x_i]
  double sq_norm = 0.0;    // E ||x||^2
  double edge_sq = 0.0;    // sum_{ij in E} E (x_i - x_j)^2
  double mean_sq = 0.0;    // ||E x||^2
  double mean_edge = 0.0;  // sum_{ij in E} (E x_i - E x_j)^2
  double trace = 0.0;      // tr Cov
  double trace_edge = 0.0; // sum_{ij in E} Var(x_i - x_j)
  Eigen::VectorXd mean;
};

inline GaussianExpectations expectations(const LatticeSpec& spec, const DenseGaussian& g) {
  GaussianExpectations e;
  const Eigen::MatrixXd cov = g.covariance();
  e.mean = g.mean();
  e.sum = e.mean.sum();
  e.mean_sq = e.mean.squaredNorm();
  e.trace = cov.trace();
  for (auto [i, j] : edges(spec)) {
    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
    const double d = e.mean(a) - e.mean(b);
    e.mean_edge += d * d;
    e.trace_edge += cov(a, a) + cov(b, b) - 2.0 * cov(a, b);
  }
  e.sq_norm = e.mean_sq + e.trace;
  e.edge_sq = e.mean_edge + e.trace_edge;
  return e;
}

/// Q-function gradients from exact prior and posterior moments.
inline GradientReport exact_q_gradients(const LatticeSpec& spec, const ObservationSet& obs,
                                        const Hyperparams& theta_new,
                                        const Hyperparams& theta_old) {
  const auto post = expectations(spec, build_posterior(spec, obs, theta_old));
  const auto pri = expectations(spec, build_prior(spec, theta_new));
  const double n = static_cast<double>(spec.size());
  const double k = static_cast<double>(obs.k_count());

  // sum_k E_post ||x - y^(k)||^2
  double resid = 0.0;
  for (const auto& y : obs.images())
    resid += (post.mean - to_eigen(y)).squaredNorm() + post.trace;

  GradientReport g;
  g.d_b = post.sum - pri.sum;
  g.d_lambda = -0.5 * post.sq_norm + 0.5 * pri.sq_norm;
  g.d_sigma2 = resid / (2.0 * theta_new.sigma2 * theta_new.sigma2) - n * k / (2.0 * theta_new.sigma2);
  g.d_alpha = -0.5 * post.edge_sq + 0.5 * pri.edge_sq;
  g.f_pri = prior_free_energy(spec, theta_new);
  g.f_post = posterior_free_energy(spec, obs, theta_old);
  return g;
}

/// Central difference (fn(at + h) - fn(at - h)) / 2h.
inline double finite_difference(const std::function<double(double)>& fn, double at, double h) {
  return (fn(at + h) - fn(at - h)) / (2.0 * h);
}

/// Dense moments provider so run_em_loop can run on exact Cholesky moments.
class DenseMoments {
 public:
  DenseMoments(const LatticeSpec& spec, const ObservationSet& obs) : spec_(spec), obs_(obs) {
    require_desk_scale(spec);
  }

  PosteriorMoments e_step(const Hyperparams& old, EMIteration& rec) {
    const auto e = expectations(spec_, build_posterior(spec_, obs_, old));
    rec.pixel_touches += spec_.size() * spec_.size();
    return {e.sum, e.mean_sq, e.mean.dot(to_eigen(obs_.avg())), e.mean_edge, e.trace,
            e.trace_edge};
  }

  PriorGradients prior(const Hyperparams& theta) const {
    const auto e = expectations(spec_, build_prior(spec_, theta));
    return {-e.sum, 0.5 * e.sq_norm, 0.5 * e.edge_sq};
  }

  ImageBuffer mean(const Hyperparams& theta) const {
    return from_eigen(build_posterior(spec_, obs_, theta).mean());
  }
  ImageBuffer initial_mean() const { return obs_.avg(); }

 private:
  const LatticeSpec& spec_;
  const ObservationSet& obs_;
};

inline EMTrace run_em_dense(const LatticeSpec& spec, const ObservationSet& obs,
                            const EMConfig& config) {
  DenseMoments provider(spec, obs);
  return run_em_loop(spec, obs, config, provider);
}

}  // namespace gmrf::oracle
