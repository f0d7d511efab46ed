#include <gtest/gtest.h>

#include <cmath>

#include "pcdm/error.hpp"
#include "pcdm/ood.hpp"

using namespace pcdm;

namespace {

CascadedModel toy_model() {
  Rng init(4);
  DiffusionSetup setup;
  setup.T = 50;
  return CascadedModel::create(spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2), setup, {8}, init, true);
}

ImageU8 flat(std::uint8_t v) {
  ImageU8 img(4, 4, 1);
  for (auto& p : img.pixels) p = v;
  return img;
}

}  // namespace

TEST(Auroc, Examples) {
  EXPECT_DOUBLE_EQ(auroc({0, 0}, {1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auroc({3, 1, 2}, {2, 3, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auroc({0, 2}, {1, 3}), 0.75);
  EXPECT_DOUBLE_EQ(auroc({5}, {1, 2}), 0.0);
}

TEST(Auroc, MonotoneInvariantAndComplementary) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(7 + trial), b(5 + trial);
    for (auto& v : a) v = std::floor(10 * rng.uniform());
    for (auto& v : b) v = std::floor(10 * rng.uniform()) + 1;
    std::vector<double> ta = a, tb = b;
    for (auto& v : ta) v = std::exp(0.3 * v) - 4;
    for (auto& v : tb) v = std::exp(0.3 * v) - 4;
    EXPECT_DOUBLE_EQ(auroc(a, b), auroc(ta, tb));
    EXPECT_DOUBLE_EQ(auroc(a, b) + auroc(b, a), 1.0);

    double brute = 0;
    for (double x : a)
      for (double y : b) brute += y > x ? 1.0 : (y == x ? 0.5 : 0.0);
    EXPECT_NEAR(auroc(a, b), brute / double(a.size() * b.size()), 1e-15);
  }
}

TEST(Auroc, RejectsEmptyAndNaN) {
  EXPECT_THROW(auroc({}, {1}), ConfigError);
  EXPECT_THROW(auroc({1}, {}), ConfigError);
  EXPECT_THROW(auroc({std::nan("")}, {1}), RangeError);
}

TEST(Typicality, ScoreIsAbsoluteDeviation) {
  EXPECT_DOUBLE_EQ(typicality_score(12.5, 12.5), 0.0);
  EXPECT_DOUBLE_EQ(typicality_score(10.0, 12.5), typicality_score(15.0, 12.5));
  EXPECT_DOUBLE_EQ(typicality_score({10.0, 14.0}, 11.0), 1.0);
  EXPECT_THROW(typicality_score(std::vector<double>{}, 1.0), ConfigError);
}

TEST(Typicality, SingleImageEntropyIsItsNll) {
  const CascadedModel m = toy_model();
  const std::vector<ImageU8> train = {flat(90)};
  Rng a(7), b(7);
  const double H = estimate_entropy(m, train, 5, a);
  EXPECT_DOUBLE_EQ(H, image_nlls(m, train, 5, b)[0]);
  Rng c(1);
  EXPECT_THROW(estimate_entropy(m, {}, 5, c), ConfigError);
}

TEST(Typicality, GroupOfOneMatchesNllDeviation) {
  const CascadedModel m = toy_model();
  Rng r0(2);
  const OodScorer sc = make_scorer(m, {flat(80), flat(100)}, 4, 1, r0);
  const std::vector<ImageU8> test = {flat(10), flat(200), flat(90)};
  Rng a(9), b(9);
  const auto scores = typicality_scores(sc, test, a);
  const auto nll = image_nlls(m, test, 4, b);
  ASSERT_EQ(scores.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(scores[i], std::abs(nll[i] - sc.entropy));

  OodScorer bad = sc;
  bad.m = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Typicality, StdErrorHalvesWithFourTimesN) {
  const CascadedModel m = toy_model();
  const ImageU8 img = flat(120);
  auto spread = [&](std::size_t n) {
    double s = 0, s2 = 0;
    const int reps = 300;
    for (int r = 0; r < reps; ++r) {
      Rng rng(1000 + r);
      const double v = image_nll(m, img, n, rng);
      s += v;
      s2 += v * v;
    }
    const double mean = s / reps;
    return std::sqrt(s2 / reps - mean * mean);
  };
  const double ratio = spread(4) / spread(16);
  EXPECT_GT(ratio, 1.6);
  EXPECT_LT(ratio, 2.5);
}

TEST(Typicality, ParallelMatchesSerial) {
  const CascadedModel m = toy_model();
  std::vector<ImageU8> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(flat(std::uint8_t(30 * i)));
  setenv("PCDM_THREADS", "1", 1);
  Rng a(3);
  const auto serial = image_nlls(m, imgs, 3, a);
  setenv("PCDM_THREADS", "3", 1);
  Rng b(3);
  const auto par = image_nlls(m, imgs, 3, b);
  unsetenv("PCDM_THREADS");
  EXPECT_EQ(serial, par);
}
