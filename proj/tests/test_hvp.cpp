#include <gtest/gtest.h>

#include <sstream>

#include "pcdm/hvp.hpp"
#include "pcdm/rng.hpp"

using namespace pcdm;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t h = rows.size(), w = rows.begin()->size();
  Tensor t = Tensor::image(h, w, 1);
  std::size_t i = 0;
  for (auto r : rows) {
    std::size_t j = 0;
    for (double v : r) t(i, j++, 0) = v;
    ++i;
  }
  return t;
}

}  // namespace

TEST(Resample, DownsampleKernel) {
  Tensor c = Tensor::constant({4, 4, 2}, 0.75);
  Tensor d = downsample_np(c);
  EXPECT_EQ(d.shape(), (Shape{2, 2, 2}));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], 1.5);
  EXPECT_EQ(downsample_np(from_rows({{2, 0}, {0, 0}}))[0], 1.0);
  EXPECT_THROW(downsample_np(Tensor::image(3, 4, 1)), ShapeError);
}

TEST(Resample, NormsAndAdjoint) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tensor x = random_tensor({8, 8, 1}, seed);
    EXPECT_LE(norm(downsample_np(x)), norm(x) + 1e-12);
    Tensor y = random_tensor({4, 4, 3}, seed + 500);
    Tensor uy = upsample_np(y);
    EXPECT_NEAR(norm(uy), norm(y), 1e-12 * norm(y));
    EXPECT_LE(max_abs_diff(downsample_np(uy), y), 1e-15);
    // <d x, y> == <x, u y>
    Tensor x2 = random_tensor({8, 8, 3}, seed + 900);
    EXPECT_NEAR(downsample_np(x2).data().dot(y.data()), x2.data().dot(uy.data()), 1e-12);
  }
  Tensor one = Tensor::constant({1, 1, 1}, 2.0);
  EXPECT_EQ(upsample_np(one), Tensor::constant({2, 2, 1}, 1.0));
}

TEST(Haar, ConstantImage) {
  const double v = 0.375;
  auto rep = haar_forward(Tensor::constant({2, 2, 1}, v), 2);
  EXPECT_EQ(rep.scale(1)[0], 2 * v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(rep.scale(2)[i], 0.0);
}

TEST(Haar, TwoByTwoKernels) {
  auto rep = haar_forward(from_rows({{2, 0}, {0, 0}}), 2);
  EXPECT_EQ(rep.scale(1)[0], 1.0);   // LL
  EXPECT_EQ(rep.scale(2)[0], 1.0);   // HH
  EXPECT_EQ(rep.scale(2)[1], -1.0);  // HL
  EXPECT_EQ(rep.scale(2)[2], -1.0);  // LH
  auto rep2 = haar_forward(from_rows({{0, 1}, {2, 3}}), 2);
  // a=0 b=1 c=2 d=3: HL=(-a-b+c+d)/2=2, LH=(-a+b-c+d)/2=1, HH=(a-b-c+d)/2=0
  EXPECT_EQ(rep2.scale(2)[0], 0.0);
  EXPECT_EQ(rep2.scale(2)[1], 2.0);
  EXPECT_EQ(rep2.scale(2)[2], 1.0);
}

TEST(Haar, Shapes) {
  auto rep = haar_forward(random_tensor({8, 8, 3}, 1), 3);
  EXPECT_EQ(rep.scale(1).shape(), (Shape{2, 2, 3}));
  EXPECT_EQ(rep.scale(2).shape(), (Shape{2, 2, 9}));
  EXPECT_EQ(rep.scale(3).shape(), (Shape{4, 4, 9}));
  EXPECT_EQ(rep.spec.total_dim(), 8u * 8 * 3);
  EXPECT_THROW(haar_forward(Tensor::image(6, 8, 1), 3), ShapeError);
}

TEST(Haar, InverseCases) {
  auto zero = MultiScaleRep::zeros(spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2));
  EXPECT_EQ(haar_inverse(zero), Tensor::image(4, 4, 1));
  auto rep = MultiScaleRep::zeros(spec_for(HierarchyKind::HaarWavelet, {2, 2, 1}, 2));
  rep.scale(1)[0] = 2 * 0.625;
  EXPECT_EQ(haar_inverse(rep), Tensor::constant({2, 2, 1}, 0.625));
}

TEST(Haar, RoundTripAndParseval) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tensor x = random_tensor({8, 8, 1 + 2 * (seed % 2)}, seed);
    auto rep = haar_forward(x, 3);
    EXPECT_LT(max_abs_diff(haar_inverse(rep), x), 1e-9);
    EXPECT_NEAR(flatten(rep).squaredNorm(), squared_norm(x), 1e-9 * squared_norm(x));
  }
}

TEST(Laplacian, ConstantImage) {
  const double v = -0.25;
  auto rep = lp_forward(Tensor::constant({4, 4, 1}, v), 2);
  EXPECT_EQ(rep.scale(2), Tensor::image(4, 4, 1));
  EXPECT_EQ(rep.scale(1), Tensor::constant({2, 2, 1}, 2 * v));
  EXPECT_EQ(lp_inverse(rep), Tensor::constant({4, 4, 1}, v));
}

TEST(Laplacian, Shapes) {
  for (std::size_t c : {1u, 3u}) {
    auto rep = lp_forward(random_tensor({8, 8, c}, 2), 3);
    EXPECT_EQ(rep.scale(1).size(), 4 * c);
    EXPECT_EQ(rep.scale(2).size(), 16 * c);
    EXPECT_EQ(rep.scale(3).size(), 64 * c);
  }
}

TEST(Laplacian, NormsCoincideWithWavelet) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = random_tensor({8, 8, 2}, seed);
    auto lp = lp_forward(x, 3);
    auto hw = haar_forward(x, 3);
    for (std::size_t s = 1; s <= 3; ++s) EXPECT_NEAR(norm(lp.scale(s)), norm(hw.scale(s)), 1e-12);
  }
}

TEST(Laplacian, RoundTripAndTightFrame) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tensor x = random_tensor({8, 8, 1}, seed + 77);
    auto rep = lp_forward(x, 3);
    EXPECT_LT(max_abs_diff(lp_inverse(rep), x), 1e-9);
    EXPECT_NEAR(flatten(rep).squaredNorm(), squared_norm(x), 1e-9 * squared_norm(x));
  }
  auto rep = MultiScaleRep::zeros(spec_for(HierarchyKind::LaplacianPyramid, {4, 4, 1}, 3));
  rep.scale(1)[0] = 3.0;
  EXPECT_EQ(lp_inverse(rep), upsample_np(upsample_np(rep.scale(1))));
}

TEST(NearestNeighbor, Structure) {
  Tensor x = random_tensor({4, 4, 1}, 3);
  auto one = nn_forward(x, 1);
  EXPECT_EQ(one.scale(1), x);
  auto rep = nn_forward(Tensor::constant({4, 4, 1}, 0.5), 3);
  for (std::size_t s = 1; s <= 3; ++s) {
    const auto& z = rep.scale(s);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], z[0]);
  }
  EXPECT_GT(rep.spec.total_dim(), 16u);
  EXPECT_EQ(nn_inverse(nn_forward(x, 2)), x);
}

TEST(NearestNeighbor, OneDimensionalAnalog) {
  Tensor x = Tensor::image(1, 2, 1);
  x[0] = 3;
  x[1] = 5;
  auto rep = nn_forward(x, 2);
  EXPECT_EQ(rep.scale(1)[0], 4.0);
  EXPECT_EQ(rep.scale(2), x);
}

TEST(Jacobian, HaarOrthonormal) {
  auto A = jacobian_matrix(spec_for(HierarchyKind::HaarWavelet, {2, 2, 1}, 2));
  ASSERT_EQ(A.rows(), 4);
  ASSERT_EQ(A.cols(), 4);
  EXPECT_LT((A.transpose() * A - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Jacobian, LaplacianOneDimensional) {
  auto A = jacobian_matrix(spec_for(HierarchyKind::LaplacianPyramid, {1, 2, 1}, 2));
  Eigen::MatrixXd expected(3, 2);
  const double r = 1 / std::sqrt(2.0);
  // z^(1) row first, then z^(2).
  expected << r, r, 0.5, -0.5, -0.5, 0.5;
  EXPECT_LT((A - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Jacobian, NearestS1Identity) {
  auto A = jacobian_matrix(spec_for(HierarchyKind::NearestNeighbor, {4, 4, 1}, 1));
  EXPECT_EQ(A, Eigen::MatrixXd::Identity(16, 16));
}

TEST(VolumeFactor, Values) {
  for (auto kind : {HierarchyKind::HaarWavelet, HierarchyKind::LaplacianPyramid}) {
    for (std::size_t n : {4u, 8u})
      for (std::size_t S = 1; S <= 3; ++S) EXPECT_NEAR(volume_factor(spec_for(kind, {n, n, 1}, S)), 1.0, 1e-9);
  }
  EXPECT_GT(volume_factor(spec_for(HierarchyKind::NearestNeighbor, {4, 4, 1}, 2)), 1.0 + 1e-3);
  // 1-D pair: A^T A = I + 11^T/4, det = 3/2.
  EXPECT_NEAR(volume_factor(spec_for(HierarchyKind::NearestNeighbor, {1, 2, 1}, 2)), std::sqrt(1.5), 1e-12);
}

TEST(VolumeFactor, SingularThrows) {
  Eigen::MatrixXd A(2, 2);
  A << 1, 2, 2, 4;
  EXPECT_THROW(volume_factor(A), SingularError);
}

TEST(Linearity, AllMaps) {
  for (auto kind : {HierarchyKind::HaarWavelet, HierarchyKind::LaplacianPyramid, HierarchyKind::NearestNeighbor}) {
    Tensor x = random_tensor({8, 8, 1}, 10), y = random_tensor({8, 8, 1}, 11);
    // Dyadic coefficients keep everything exact.
    Tensor comb = 0.5 * x + (-2.0) * y;
    Eigen::VectorXd lhs = flatten(forward(kind, comb, 3));
    Eigen::VectorXd rhs = 0.5 * flatten(forward(kind, x, 3)) - 2.0 * flatten(forward(kind, y, 3));
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14) << to_string(kind);
  }
}

TEST(CondInput, MatchesLiteralDefinition) {
  for (auto kind : {HierarchyKind::HaarWavelet, HierarchyKind::LaplacianPyramid}) {
    Tensor x = random_tensor({8, 8, 3}, 21);
    auto rep = forward(kind, x, 3);
    for (std::size_t s = 2; s <= 3; ++s) {
      auto masked = rep;
      for (std::size_t k = s; k <= 3; ++k) masked.scale(k) = Tensor(masked.spec.scale_shape(k));
      Tensor lit = inverse(masked);
      while (lit.width() > rep.scale(s).width()) lit = downsample_np(lit);
      Tensor c = cond_input(rep.spec, rep.scales, s);
      EXPECT_EQ(c.height(), rep.scale(s).height());
      EXPECT_EQ(c.width(), rep.scale(s).width());
      EXPECT_EQ(c.channels(), 3u);
      EXPECT_LT(max_abs_diff(c, lit), 1e-12);
    }
  }
}

TEST(CondInput, ConstantAndZero) {
  auto rep = haar_forward(Tensor::constant({8, 8, 1}, 0.5), 3);
  Tensor c = cond_input(rep.spec, rep.scales, 3);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(c[i], 1.0);  // LL of constant 0.5 one level down
  auto zero = MultiScaleRep::zeros(rep.spec);
  EXPECT_EQ(l1_norm(cond_input(zero.spec, zero.scales, 2)), 0.0);
  EXPECT_THROW(cond_input(rep.spec, rep.scales, 1), ShapeError);
}

TEST(Rep, SerializeRoundTrip) {
  auto rep = lp_forward(random_tensor({4, 4, 1}, 5), 2);
  std::stringstream ss;
  write_rep(ss, rep);
  auto r = read_rep(ss);
  EXPECT_EQ(r.spec, rep.spec);
  for (std::size_t s = 1; s <= 2; ++s) EXPECT_EQ(r.scale(s), rep.scale(s));
}
