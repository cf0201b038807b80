#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "gmrf/checks.hpp"
#include "gmrf/oracle.hpp"
#include "gmrf/spectral.hpp"

using namespace gmrf;

namespace {

std::vector<double> sorted_values(const SpectrumTable& t) {
  auto v = t.values;
  std::sort(v.begin(), v.end());
  return v;
}

ImageBuffer random_image(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  ImageBuffer x(n);
  for (auto& p : x.data) p = g(rng);
  return x;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double norm(const ImageBuffer& a) { return oracle::to_eigen(a).norm(); }

}  // namespace

TEST(Eigenvalues, SingleVertex) {
  EXPECT_EQ(eigenvalues(LatticeSpec(1), Boundary::Free).values, std::vector<double>{0.0});
}

TEST(Eigenvalues, TwoByTwoMatchesDense) {
  const auto got = sorted_values(eigenvalues(LatticeSpec(2), Boundary::Free));
  const std::vector<double> want{0, 2, 2, 4};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::laplacian(LatticeSpec(2)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()(static_cast<Eigen::Index>(i)), want[i], 1e-12);
}

TEST(Eigenvalues, ThreeByThreeMultiset) {
  const auto got = sorted_values(eigenvalues(LatticeSpec(3), Boundary::Free));
  const std::vector<double> want{0, 1, 1, 2, 3, 3, 4, 4, 6};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Eigenvalues, TableInvariants) {
  for (std::size_t v : {1u, 2u, 5u, 8u, 13u}) {
    for (Boundary b : {Boundary::Free, Boundary::Torus}) {
      const auto t = eigenvalues(LatticeSpec(v), b);
      ASSERT_EQ(t.size(), v * v);
      EXPECT_EQ(t[0], 0.0);
      std::size_t zeros = 0;
      double sum = 0.0;
      for (double x : t.values) {
        EXPECT_GE(x, 0.0);
        zeros += x == 0.0;
        sum += x;
      }
      EXPECT_EQ(zeros, 1u);
      const double trace = b == Boundary::Free ? 4.0 * v * (v - 1.0) : 4.0 * v * v;
      if (v > 1 || b == Boundary::Free) { EXPECT_NEAR(sum, trace, 1e-9 * std::max(1.0, trace)); }
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < v; ++j) {
          const double d = (b == Boundary::Free ? 2.0 : 1.0) * v;
          const double si = std::sin(kPi * i / d), sj = std::sin(kPi * j / d);
          EXPECT_NEAR(t[i * v + j], 4 * si * si + 4 * sj * sj, 1e-12);
        }
    }
  }
}

TEST(Eigenvalues, DenseSpectrumAndDiagonalisation) {
  for (std::size_t v = 1; v <= 16; ++v) {
    const LatticeSpec s(v);
    EXPECT_TRUE(checks::check_eigenvalues(s).pass) << v;
    EXPECT_TRUE(checks::check_diagonalization(s).pass) << v;
  }
}

TEST(Eigenvalues, CacheReturnsSharedTable) {
  const LatticeSpec s(9);
  auto a = cached_eigenvalues(s, Boundary::Free);
  auto b = cached_eigenvalues(s, Boundary::Free);
  auto c = cached_eigenvalues(s, Boundary::Torus);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_NE(a.get(), c.get());
  EXPECT_EQ(a->values, eigenvalues(s, Boundary::Free).values);
}

TEST(TraceSums, MatchDirectSummation) {
  const auto t = eigenvalues(LatticeSpec(11), Boundary::Free);
  const double p = 0.013, q = 0.27;
  double inv = 0, phi = 0;
  for (double x : t.values) inv += 1 / (p + q * x), phi += x / (p + q * x);
  const auto s = trace_sums(t, p, q);
  EXPECT_NEAR(s.inv, inv, 1e-12 * inv);
  EXPECT_NEAR(s.phi_inv, phi, 1e-12 * phi);
  double ls = 0;
  for (double x : t.values) ls += std::log(p + q * x);
  EXPECT_NEAR(log_sum(t, p, q), ls, 1e-10 * std::fabs(ls));
}

TEST(DctMatrix, SizeOne) {
  const auto k = dct_matrix(1);
  EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
}

TEST(DctMatrix, SizeTwo) {
  const auto k = dct_matrix(2);
  EXPECT_NEAR(k(0, 0), 0.70710678, 1e-8);
  EXPECT_NEAR(k(0, 1), 0.70710678, 1e-8);
  EXPECT_NEAR(k(1, 0), 0.70710678, 1e-8);
  EXPECT_NEAR(k(1, 1), -0.70710678, 1e-8);
}

TEST(DctMatrix, OrthonormalAndConstantFirstColumn) {
  for (std::size_t v = 1; v <= 16; ++v) {
    const auto k = dct_matrix(v);
    for (std::size_t a = 0; a < v; ++a) {
      EXPECT_NEAR(k(a, 0), 1.0 / std::sqrt(double(v)), 1e-14);
      for (std::size_t b = 0; b < v; ++b) {
        double dot = 0;
        for (std::size_t i = 0; i < v; ++i) dot += k(i, a) * k(i, b);
        EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
      }
    }
    // K^t 1 = sqrt(v) e_0
    for (std::size_t j = 0; j < v; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < v; ++i) s += k(i, j);
      EXPECT_NEAR(s, j == 0 ? std::sqrt(double(v)) : 0.0, 1e-10);
    }
  }
  EXPECT_THROW(dct_matrix(0), std::invalid_argument);
}

TEST(Transform, AllOnesMapsToDcOnly) {
  for (std::size_t v : {1u, 2u, 3u, 8u, 17u}) {
    const LatticeSpec s(v);
    const TransformPlan plan(s, Boundary::Free);
    const ImageBuffer z = forward(plan, ImageBuffer(s.size(), 1.0));
    EXPECT_NEAR(z[0], std::sqrt(double(s.size())), 1e-10);
    for (std::size_t i = 1; i < z.size(); ++i) EXPECT_NEAR(z[i], 0.0, 1e-10);
    ImageBuffer dc(s.size());
    dc[0] = std::sqrt(double(s.size()));
    const ImageBuffer ones = inverse(plan, dc);
    for (double x : ones.data) EXPECT_NEAR(x, 1.0, 1e-10);
  }
}

TEST(Transform, ForwardMatchesDenseKronecker) {
  const LatticeSpec s(4);
  const TransformPlan plan(s, Boundary::Free);
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd u = checks::kron_dct(4);
  for (int t = 0; t < 5; ++t) {
    const ImageBuffer x = random_image(16, rng);
    const ImageBuffer z = forward(plan, x);
    const Eigen::VectorXd dense = u.transpose() * oracle::to_eigen(x);
    EXPECT_LT((dense - oracle::to_eigen(z)).cwiseAbs().maxCoeff(), 1e-10);
    // entry 0 is sum / sqrt(n)
    EXPECT_NEAR(z[0], oracle::to_eigen(x).sum() / 4.0, 1e-12);
    const ImageBuffer c = random_image(16, rng);
    const Eigen::VectorXd dense_inv = u * oracle::to_eigen(c);
    EXPECT_LT((dense_inv - oracle::to_eigen(inverse(plan, c))).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Transform, RoundTripAndParseval) {
  std::mt19937_64 rng(5);
  for (Boundary b : {Boundary::Free, Boundary::Torus}) {
    for (std::size_t v : {1u, 2u, 3u, 8u, 16u, 31u}) {
      const LatticeSpec s(v);
      const TransformPlan plan(s, b);
      const ImageBuffer x = random_image(s.size(), rng);
      const ImageBuffer z = plan.forward(x);
      EXPECT_LT(max_abs_diff(plan.inverse(z), x), 1e-10 * norm(x)) << v;
      EXPECT_NEAR(norm(z), norm(x), 1e-10 * norm(x)) << v;
    }
  }
}

TEST(Transform, TorusDiagonalisesCirculantLaplacian) {
  for (std::size_t v : {2u, 3u, 4u, 7u, 8u}) {
    const LatticeSpec s(v);
    const TransformPlan plan(s, Boundary::Torus);
    const auto table = eigenvalues(s, Boundary::Torus);
    const Eigen::MatrixXd lap = oracle::laplacian(s, Boundary::Torus);
    // U^t L U should be diag(Phi): apply to each basis vector.
    for (std::size_t k = 0; k < s.size(); ++k) {
      ImageBuffer e(s.size());
      e[k] = 1.0;
      const ImageBuffer col = plan.inverse(e);
      const Eigen::VectorXd lcol = lap * oracle::to_eigen(col);
      const ImageBuffer back = plan.forward(oracle::from_eigen(lcol));
      for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_NEAR(back[i], i == k ? table[k] : 0.0, 1e-10) << v << " " << k << " " << i;
    }
  }
}

TEST(Transform, ShapeMismatchThrows) {
  const TransformPlan plan(LatticeSpec(4), Boundary::Free);
  EXPECT_THROW(plan.forward(ImageBuffer(15)), std::invalid_argument);
  EXPECT_THROW(plan.inverse(ImageBuffer(17)), std::invalid_argument);
}

TEST(Transform, ConcurrentCallsOnSharedPlan) {
  const LatticeSpec s(32);
  const TransformPlan plan(s, Boundary::Free);
  std::mt19937_64 rng(9);
  const ImageBuffer x = random_image(s.size(), rng);
  const ImageBuffer want = plan.forward(x);
  std::vector<ImageBuffer> got(4);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 4; ++t)
      pool.emplace_back([&, t] { got[t] = plan.forward(x); });
  }
  for (const auto& g : got) EXPECT_EQ(g, want);
}
