#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "pcdm/diffusion.hpp"
#include "pcdm/emd.hpp"
#include "pcdm/error.hpp"

using namespace pcdm;

namespace {

Tensor gaussian_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  Tensor x = Tensor::image(h, w, c);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  return x;
}

// Denoiser for data concentrated on one point: predicts epsilon exactly.
AnalyticGaussianDenoiser point_denoiser(const Tensor& z0) {
  return AnalyticGaussianDenoiser({z0.data()}, {Eigen::MatrixXd::Zero(long(z0.size()), long(z0.size()))});
}

}  // namespace

TEST(Schedule, AlphaSigmaPartitionUnity) {
  NoiseSchedule s;
  for (double t = 0.0; t <= 1.0; t += 0.01) EXPECT_NEAR(s.alpha2(t) + s.sigma2(t), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.gamma(0.0), 5.0);
  EXPECT_DOUBLE_EQ(s.gamma(1.0), -13.3);
  EXPECT_NEAR(std::log(s.alpha2(0.3) / s.sigma2(0.3)), s.gamma(0.3), 1e-12);
}

TEST(Schedule, Validation) {
  NoiseSchedule s{5.0, -1.0};
  EXPECT_THROW(s.validate(), ConfigError);
  DiffusionSetup d;
  d.T = 0;
  EXPECT_THROW(d.validate(), ConfigError);
  d.T = 10;
  d.decoder_var = -1.0;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Schedule, TermWeightIsSnrRatio) {
  DiffusionSetup d;
  d.T = 50;
  for (std::size_t k = 1; k < d.T; ++k) {
    const double snr_s = std::exp(d.schedule.gamma(d.t(k))), snr_t = std::exp(d.schedule.gamma(d.t(k + 1)));
    EXPECT_NEAR(d.w(k), 0.5 * (snr_s / snr_t - 1.0), 1e-12);
    EXPECT_GT(d.w(k), 0.0);
  }
  EXPECT_NEAR(d.decoder_variance(), std::exp(-d.schedule.gamma(1.0 / 50)), 1e-15);
}

TEST(Diffuse, MomentsMatch) {
  NoiseSchedule s;
  Rng rng(3);
  const std::size_t n = 40000;
  Tensor z0 = Tensor::constant({n, 1, 1}, 0.7);
  Tensor eps = gaussian_image(n, 1, 1, rng);
  Tensor zt = diffuse(s, z0, 0.4, eps);
  const double mean = zt.data().mean();
  const double var = (zt.data().array() - mean).square().mean();
  EXPECT_NEAR(mean, s.alpha(0.4) * 0.7, 0.02);
  EXPECT_NEAR(var, s.sigma2(0.4), 0.02);
}

TEST(Posterior, MarginalisesToForwardProcess) {
  NoiseSchedule sch;
  for (double s : {0.01, 0.3, 0.77}) {
    const double t = s + 0.05;
    const auto pc = posterior_coeffs(sch, s, t);
    EXPECT_NEAR(pc.coef_z * sch.alpha(t) + pc.coef_x, sch.alpha(s), 1e-12);
    EXPECT_NEAR(pc.coef_z * pc.coef_z * sch.sigma2(t) + pc.var, sch.sigma2(s), 1e-12);
    EXPECT_GT(pc.var, 0.0);
  }
}

TEST(Posterior, KlMatchesWeightedEpsilonError) {
  DiffusionSetup d;
  d.T = 30;
  Rng rng(6);
  for (std::size_t k : {1u, 7u, 29u}) {
    const double s = d.t(k), t = d.t(k + 1);
    const auto pc = posterior_coeffs(d.schedule, s, t);
    Tensor z0 = gaussian_image(2, 2, 1, rng), eps = gaussian_image(2, 2, 1, rng), eh = gaussian_image(2, 2, 1, rng);
    const Tensor zt = diffuse(d.schedule, z0, t, eps);
    Tensor xhat = zt;
    xhat.data() = (zt.data() - d.schedule.sigma(t) * eh.data()) / d.schedule.alpha(t);
    const double kl = pc.coef_x * pc.coef_x * (z0.data() - xhat.data()).squaredNorm() / (2.0 * pc.var);
    EXPECT_NEAR(kl, d.w(k) * (eps.data() - eh.data()).squaredNorm(), 1e-9 * std::max(1.0, kl));
  }
}

TEST(AnalyticEps, KnownValues) {
  Tensor mu = Tensor::constant({1, 1, 1}, 0.3), zero = Tensor::constant({1, 1, 1}, 0.0), one = Tensor::constant({1, 1, 1}, 1.0);
  Tensor z = Tensor::constant({1, 1, 1}, 1.1);
  const double a = 0.8, s = 0.6;
  EXPECT_NEAR(analytic_gaussian_eps(mu, zero, z, a, s)[0], (1.1 - a * 0.3) / s, 1e-14);
  // gamma = 0 with unit data: E[z0|z] = alpha z, so eps = sigma z.
  const double h = std::sqrt(0.5);
  EXPECT_NEAR(analytic_gaussian_eps(zero, one, z, h, h)[0], h * 1.1, 1e-14);
}

TEST(AnalyticEps, MatrixDenoiserMatchesElementwise) {
  HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  Rng rng(8);
  Tensor z = gaussian_image(2, 2, 3, rng);
  NetBatch nb = make_batch({z}, Eigen::VectorXd::Constant(1, 0.4));
  const RowMatrix e = den.predict(2, nb, nullptr);
  const double a = std::sqrt(NoiseSchedule::alpha2_of(0.4)), s = std::sqrt(NoiseSchedule::sigma2_of(0.4));
  Tensor ref = analytic_gaussian_eps(Tensor::constant(z.shape(), 0.0), Tensor::constant(z.shape(), 1.0), z, a, s);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(e.data()[i], ref[i], 1e-12);
}

TEST(Vlb, PerfectDenoiserLeavesOnlyDecoderNormaliser) {
  DiffusionSetup setup;
  setup.T = 64;
  Rng rng(1);
  Tensor z0 = gaussian_image(2, 2, 1, rng);
  auto den = point_denoiser(z0);
  const VlbTerms t = vlb_scale(den, setup, 1, z0, nullptr, rng, EvalMode::full_sum());
  EXPECT_NEAR(t.diffusion, 0.0, 1e-9);
  EXPECT_NEAR(t.l0, 2.0 * std::log(2.0 * std::numbers::pi * setup.decoder_variance()), 1e-9);
  EXPECT_LT(t.l0, 0.0);  // a density, so it can go negative
}

TEST(Vlb, PriorVanishesForVeryNegativeGamma) {
  NoiseSchedule s{-40.0, 5.0};
  Tensor z0 = Tensor::constant({3, 3, 1}, 0.9);
  EXPECT_LT(prior_kl(s, z0), 1e-15);
  EXPECT_GE(prior_kl(NoiseSchedule{}, z0), 0.0);
}

TEST(Vlb, AntitheticStepsCoverRange) {
  const auto ks = antithetic_steps(0.37, 20, 1000);
  ASSERT_EQ(ks.size(), 20u);
  for (auto k : ks) {
    EXPECT_GE(k, 1u);
    EXPECT_LE(k, 999u);
  }
  EXPECT_EQ(antithetic_steps(0.999999999999, 1, 2).front(), 1u);
  EXPECT_TRUE(antithetic_steps(0.5, 5, 1).empty());
}

TEST(Vlb, MonteCarloIsUnbiasedForFullSum) {
  HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  DiffusionSetup setup;
  setup.T = 100;
  Rng rng(11);
  Tensor x = gaussian_image(4, 4, 1, rng);
  double full = 0.0, mc = 0.0, mc2 = 0.0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    full += cascaded_loss(den, setup, spec, x, rng, EvalMode::full_sum()).total_nats() / reps;
    const double v = cascaded_loss(den, setup, spec, x, rng, EvalMode::monte_carlo(20)).total_nats();
    mc += v / reps;
    mc2 += v * v / reps;
  }
  const double se = std::sqrt((mc2 - mc * mc) / reps);
  EXPECT_NEAR(mc, full, 4.0 * se + 0.05);
}

TEST(Vlb, SingleStepChainHasNoDiffusionTerms) {
  HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {2, 2, 1}, 1);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  DiffusionSetup setup;
  setup.T = 1;
  Rng rng(2);
  Tensor x = gaussian_image(2, 2, 1, rng);
  const auto b = cascaded_loss(den, setup, spec, x, rng, EvalMode::monte_carlo(20));
  EXPECT_EQ(b.lk_sum, 0.0);
  EXPECT_TRUE(std::isfinite(b.total_nats()));
}

TEST(Vlb, CascadedIsSumOfScales) {
  HierarchySpec spec = spec_for(HierarchyKind::LaplacianPyramid, {4, 4, 1}, 2);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  DiffusionSetup setup;
  setup.T = 16;
  Rng data_rng(4);
  Tensor x = gaussian_image(4, 4, 1, data_rng);
  Rng a(99), b(99);
  const auto total = cascaded_loss(den, setup, spec, x, a, EvalMode::full_sum());
  const auto rep = forward(spec.kind, x, 2);
  Rng base(b.next_u64());
  double sum = 0.0;
  for (std::size_t s = 1; s <= 2; ++s) {
    Tensor cond;
    if (s == 2) cond = cond_input(spec, rep.scales, 2);
    Rng r = base.child(s);
    sum += vlb_scale(den, setup, s, rep.scale(s), s == 2 ? &cond : nullptr, r, EvalMode::full_sum()).total();
  }
  EXPECT_NEAR(total.total_nats(), sum, 1e-12);
  EXPECT_EQ(total.dim, 16u);
  EXPECT_NEAR(total.bpd, total.total_nats() / (16 * std::numbers::ln2) + 7.0, 1e-12);
}

TEST(Vlb, CvdmSingleScaleMatchesCascaded) {
  const HierarchySpec nn = spec_for(HierarchyKind::NearestNeighbor, {4, 4, 1}, 1);
  DiffusionSetup setup;
  setup.T = 10;
  Rng init(1);
  CascadedModel m = CascadedModel::create(nn, setup, {4}, init, true);
  CascadedModel h = m;
  h.spec.kind = HierarchyKind::HaarWavelet;
  Rng drng(2);
  Tensor x = gaussian_image(4, 4, 1, drng);
  Rng a(3), b(3);
  EXPECT_EQ(cvdm_loss(m, x, a, EvalMode::full_sum()).total_nats(), cascaded_loss(h, x, b, EvalMode::full_sum()).total_nats());
  EXPECT_GT(spec_for(HierarchyKind::NearestNeighbor, {4, 4, 1}, 2).total_dim(), 16u);
  EXPECT_THROW(cvdm_loss(h, x, a, EvalMode::full_sum()), ConfigError);
}

TEST(Vlb, GaussianDataMatchesClosedFormBound) {
  HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  for (std::size_t T : {100, 1000}) {
    DiffusionSetup setup;
    setup.T = T;
    Rng rng(21);
    double mean = 0.0, sq = 0.0;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
      Tensor x = gaussian_image(4, 4, 1, rng);
      const double v = cascaded_loss(den, setup, spec, x, rng, EvalMode::full_sum()).total_nats() / 16;
      mean += v / n;
      sq += v * v / n;
    }
    const double se = std::sqrt((sq - mean * mean) / n);
    EXPECT_NEAR(mean, gaussian_vlb_per_dim(setup, 1.0), 3 * se) << "T=" << T;
  }
}

TEST(Vlb, ClosedFormGapShrinksLikeOneOverT) {
  const double entropy = 0.5 * std::log(2 * std::numbers::pi * std::numbers::e);
  double prev = 0.0;
  for (std::size_t T : {250, 500, 1000, 2000, 4000}) {
    DiffusionSetup setup;
    setup.T = T;
    const double gap = gaussian_vlb_per_dim(setup, 1.0) - entropy;
    EXPECT_GT(gap, 0.0);
    if (prev > 0) EXPECT_NEAR(prev / gap, 2.0, 0.05) << "T=" << T;
    prev = gap;
  }
}

TEST(Vlb, LaplacianPaysDecoderNormaliserOnRedundantDims) {
  const HierarchySpec haar = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  const HierarchySpec lp = spec_for(HierarchyKind::LaplacianPyramid, {4, 4, 1}, 2);
  auto dh = AnalyticGaussianDenoiser::for_standard_normal(haar);
  auto dl = AnalyticGaussianDenoiser::for_standard_normal(lp);
  DiffusionSetup setup;
  setup.T = 200;
  Rng rng(5);
  double diff = 0.0;
  const int n = 60;
  for (int i = 0; i < n; ++i) {
    Tensor x = gaussian_image(4, 4, 1, rng);
    diff += (cascaded_loss(dl, setup, lp, x, rng, EvalMode::full_sum()).total_nats() -
             cascaded_loss(dh, setup, haar, x, rng, EvalMode::full_sum()).total_nats()) / n;
  }
  const double g1 = setup.schedule.gamma(1.0);
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * setup.decoder_variance()) +
                         0.5 * (std::log1p(std::exp(g1)) - NoiseSchedule::alpha2_of(g1));
  const double redundant = double(lp.total_dim() - lp.input_dim());
  EXPECT_NEAR(diff, redundant * per_dim, 0.6);
}

TEST(Gradients, CascadedLossMatchesFiniteDifferences) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  DiffusionSetup setup;
  setup.T = 4;
  Rng init(7);
  CascadedModel m = CascadedModel::create(spec, setup, {4, 4}, init, true);
  Rng data_rng(8);
  Tensor x = gaussian_image(4, 4, 1, data_rng);
  std::vector<Eigen::VectorXd> g;
  Rng r0(12);
  cascaded_loss(m, x, r0, EvalMode::full_sum(), &g);
  ASSERT_EQ(g.size(), 2u);
  Rng pick(13);
  const double h = 1e-5;
  for (std::size_t s = 0; s < 2; ++s) {
    auto& p = m.nets[s].params();
    for (int trial = 0; trial < 25; ++trial) {
      const auto i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(p.size())));
      const double keep = p[i];
      p[i] = keep + h;
      Rng rp(12);
      const double fp = cascaded_loss(m, x, rp, EvalMode::full_sum()).total_nats();
      p[i] = keep - h;
      Rng rm(12);
      const double fm = cascaded_loss(m, x, rm, EvalMode::full_sum()).total_nats();
      p[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LE(std::abs(fd - g[s][i]), 1e-4 * std::max(1.0, std::abs(fd))) << "scale " << s + 1 << " param " << i;
    }
  }
}

TEST(Sampling, AnalyticSamplerReproducesUnitGaussian) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  auto den = AnalyticGaussianDenoiser::for_standard_normal(spec);
  DiffusionSetup setup;
  setup.T = 1000;
  Rng rng(17);
  const auto xs = sample_continuous(den, setup, spec, 10000, rng);
  Eigen::MatrixXd X(16, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = xs[j].data();
  const Eigen::VectorXd mean = X.rowwise().mean();
  const Eigen::MatrixXd centered = X.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / double(xs.size());
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_NEAR(cov.diagonal().mean(), 1.0, 0.03);
  EXPECT_LT((cov - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Sampling, DeterministicPerSeed) {
  const HierarchySpec spec = spec_for(HierarchyKind::LaplacianPyramid, {4, 4, 1}, 2);
  DiffusionSetup setup;
  setup.T = 8;
  Rng init(1);
  CascadedModel m = CascadedModel::create(spec, setup, {4}, init, true);
  Rng a(5), b(5), c(6);
  EXPECT_EQ(sample(m, a), sample(m, b));
  const ImageU8 img = sample(m, c);
  EXPECT_EQ(img.height, 4u);
  EXPECT_EQ(img.pixels.size(), 16u);
}

TEST(Model, SaveLoadRoundTrip) {
  const HierarchySpec spec = spec_for(HierarchyKind::NearestNeighbor, {4, 4, 3}, 3);
  DiffusionSetup setup;
  setup.T = 20;
  setup.decoder_var = 1e-4;
  Rng init(2);
  CascadedModel m = CascadedModel::create(spec, setup, {8}, init, true);
  std::stringstream ss;
  m.save(ss);
  CascadedModel back = CascadedModel::load(ss);
  EXPECT_EQ(back.spec, m.spec);
  EXPECT_EQ(back.setup.T, 20u);
  EXPECT_EQ(*back.setup.decoder_var, 1e-4);
  EXPECT_EQ(back.hash(), m.hash());
  ASSERT_EQ(back.nets.size(), 3u);
  EXPECT_EQ(back.nets[2].params(), m.nets[2].params());

  std::string bytes = ss.str();
  std::stringstream bad("PCDMMODEL kind=haar S=x\n");
  EXPECT_THROW(CascadedModel::load(bad), FormatError);
  std::stringstream empty;
  EXPECT_THROW(CascadedModel::load(empty), TruncationError);
}

TEST(Model, HashChangesWithParams) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  Rng init(2);
  CascadedModel m = CascadedModel::create(spec, DiffusionSetup{}, {4}, init);
  const auto h = m.hash();
  m.nets[0].params()[0] += 1e-9;
  EXPECT_NE(m.hash(), h);
}

namespace {

std::vector<ImageU8> tiny_data(std::size_t n, Rng& rng) {
  std::vector<ImageU8> out;
  for (std::size_t i = 0; i < n; ++i) {
    ImageU8 img(4, 4, 1);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    out.push_back(img);
  }
  return out;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParams) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  DiffusionSetup setup;
  setup.T = 10;
  Rng init(3);
  CascadedModel m = CascadedModel::create(spec, setup, {4}, init, true);
  const auto before = m.nets[1].params();
  Rng rng(4);
  auto data = tiny_data(8, rng);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch = 4;
  cfg.lr = 0.0;
  cfg.log_every = 1;
  const auto rows = train(m, data, cfg, rng);
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_EQ(m.nets[1].params(), before);
}

TEST(Train, SameSeedSameCsvAndLossDrops) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  DiffusionSetup setup;
  setup.T = 50;
  Rng drng(9);
  auto data = tiny_data(4, drng);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.batch = 8;
  cfg.log_every = 20;
  std::string csv[2];
  std::vector<TrainRow> rows;
  for (int r = 0; r < 2; ++r) {
    Rng init(3), rng(4);
    CascadedModel m = CascadedModel::create(spec, setup, {8}, init);
    std::ostringstream os;
    rows = train(m, data, cfg, rng, &os);
    csv[r] = os.str();
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(csv[0].substr(0, csv[0].find('\n')), "step,loss_nats,bpd_estimate,scale1_nats,scale2_nats");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LT(rows.back().loss_nats, rows.front().loss_nats);
}

TEST(Train, RejectsEmptyData) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  Rng init(3), rng(4);
  CascadedModel m = CascadedModel::create(spec, DiffusionSetup{}, {4}, init);
  EXPECT_THROW(train(m, {}, TrainConfig{}, rng), ConfigError);
}

TEST(BoundChain, WeightedL1OfErrorFieldBoundedByScaleNorms) {
  // Cauchy-Schwarz per scale: w_s ||e^(s)||_1 <= w_s sqrt(n_s) ||e^(s)||_2.
  const std::size_t n = 8, S = 4;
  const double p = 1.0;
  Rng rng(31);
  double beta = 0.0;
  for (std::size_t s = 1; s <= S; ++s) {
    const double w = s == 1 ? 1.0 : std::exp2(-double(s) * (p + 1.0));
    const double ns = s == 1 ? 1.0 : 3.0 * std::pow(4.0, double(s - 2));
    beta = std::max(beta, w * std::sqrt(ns));
  }
  for (int draw = 0; draw < 100; ++draw) {
    Histogram2D e(8, 8);
    Tensor et = Tensor::image(n, n, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) et(i, j, 0) = e(long(i), long(j)) = rng.normal();
    const double lhs = emd_wavelet(e, Histogram2D::Zero(8, 8), p);
    const auto rep = haar_forward(et, S);
    double rhs = 0.0, weighted = 0.0;
    for (std::size_t s = 1; s <= S; ++s) {
      rhs += norm(rep.scale(s));
      weighted += (s == 1 ? 1.0 : std::exp2(-double(s) * (p + 1.0))) * l1_norm(rep.scale(s));
    }
    EXPECT_NEAR(lhs, weighted, 1e-12 * std::max(1.0, lhs));
    EXPECT_LE(lhs, beta * rhs);
  }
}
