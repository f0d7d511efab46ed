#include "pcdm/bits_back.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "pcdm/error.hpp"
#include "pcdm/io.hpp"

namespace pcdm {

namespace {

constexpr char kMagic[7] = {'P', 'C', 'D', 'M', 'B', 'B', '1'};

enum class Role : std::uint64_t { Forward = 1, Reverse = 2, Prior = 3, Pixels = 4 };

// Slot rotation shared by a push and the pop that undoes it.
std::uint32_t rotation(Role role, std::size_t s, std::size_t k, std::size_t i) {
  std::uint64_t h = Rng::mix(static_cast<std::uint64_t>(role) * 0x9e3779b97f4a7c15ULL + s);
  h = Rng::mix(h ^ (std::uint64_t{k} << 20) ^ i);
  return static_cast<std::uint32_t>(h >> (64 - AnsState::kPrecision));
}

struct Geometry {
  bool one_d;
  std::size_t children;  // per parent
  double shrink;         // one downsample scales a block sum by this
};

Geometry geometry(const HierarchySpec& spec) {
  if (!spec.one_d()) return {false, 4, 0.5};
  // The nearest-neighbor hierarchy halves block sums in 1-D as well.
  return {true, 2, spec.kind == HierarchyKind::NearestNeighbor ? 0.5 : 1.0 / std::sqrt(2.0)};
}

Shape level_shape(const HierarchySpec& spec, std::size_t s) {
  const std::size_t k = spec.levels - s;
  if (spec.one_d()) return {1, spec.width >> k, spec.channels};
  return {spec.height >> k, spec.width >> k, spec.channels};
}

// Pixels per block at level s and the affine map from block sum to value.
struct LevelMap {
  std::int64_t pixels;
  double a, b;
};

LevelMap level_map(const HierarchySpec& spec, std::size_t s) {
  const Geometry g = geometry(spec);
  const std::size_t k = spec.levels - s;
  std::int64_t n = 1;
  for (std::size_t i = 0; i < k; ++i) n *= static_cast<std::int64_t>(g.children);
  const double f = std::pow(g.shrink, double(k));
  return {n, f / 128.0, double(n) * (0.5 / 128.0 - 1.0) * f};
}

// Child cell indices (into level s, HWC flat) of parent (i, j, c).
void child_cells(const Shape& child, bool one_d, std::size_t i, std::size_t j, std::size_t c, std::size_t* out) {
  const std::size_t W = child[1], C = child[2];
  if (one_d) {
    out[0] = (2 * j) * C + c;
    out[1] = (2 * j + 1) * C + c;
    return;
  }
  out[0] = ((2 * i) * W + 2 * j) * C + c;
  out[1] = ((2 * i) * W + 2 * j + 1) * C + c;
  out[2] = ((2 * i + 1) * W + 2 * j) * C + c;
  out[3] = ((2 * i + 1) * W + 2 * j + 1) * C + c;
}

// Gaussian over the free children of one parent block.
struct BlockCoder {
  Eigen::MatrixXd M;     // rows: target coefficients, cols: children
  Eigen::MatrixXd W;     // (n-1) x rows: least-squares map
  Eigen::MatrixXd L;     // Cholesky factor of the free-variable covariance
  Eigen::VectorXd Mlast, Mones;
  LevelMap map;
  std::int64_t maxv;
};

Eigen::MatrixXd block_matrix(HierarchyKind kind, bool one_d) {
  const std::size_t n = one_d ? 2 : 4;
  if (kind == HierarchyKind::HaarWavelet) {
    if (one_d) return (Eigen::MatrixXd(1, 2) << -1.0, 1.0).finished() / std::sqrt(2.0);
    Eigen::MatrixXd M(3, 4);
    M << 1, -1, -1, 1,   // HH
        -1, -1, 1, 1,    // HL
        -1, 1, -1, 1;    // LH
    return 0.5 * M;
  }
  if (kind == HierarchyKind::LaplacianPyramid) {
    return Eigen::MatrixXd::Identity(long(n), long(n)) - Eigen::MatrixXd::Constant(long(n), long(n), 1.0 / double(n));
  }
  return Eigen::MatrixXd::Identity(long(n), long(n));
}

BlockCoder make_block_coder(const HierarchySpec& spec, std::size_t s, double dec_var) {
  const Geometry g = geometry(spec);
  BlockCoder bc;
  bc.map = level_map(spec, s);
  bc.maxv = 255 * bc.map.pixels;
  bc.M = block_matrix(spec.kind, g.one_d);
  const long n = long(g.children);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n - 1);
  E.topRows(n - 1).setIdentity();
  E.row(n - 1).setConstant(-1.0);
  const Eigen::MatrixXd G = bc.map.a * bc.M * E;
  const Eigen::MatrixXd GtG = G.transpose() * G;
  Eigen::LLT<Eigen::MatrixXd> llt(GtG);
  if (llt.info() != Eigen::Success) throw SingularError("block coder: singular child geometry");
  bc.W = llt.solve(G.transpose());
  const Eigen::MatrixXd cov = dec_var * llt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));
  Eigen::LLT<Eigen::MatrixXd> lc(cov);
  bc.L = lc.matrixL();
  bc.Mlast = bc.M.col(n - 1);
  bc.Mones = bc.M.rowwise().sum();
  return bc;
}

// Index of target coefficient r of parent (i, j, c) inside z^(s).
std::size_t target_index(HierarchyKind kind, const Shape& parent, const Shape& child, bool one_d, std::size_t i, std::size_t j,
                         std::size_t c, std::size_t r, const std::size_t* cells) {
  if (kind == HierarchyKind::HaarWavelet) {
    const std::size_t W = parent[1], C = parent[2];
    const std::size_t bands = one_d ? 1 : 3;
    return (i * W + j) * (bands * C) + r * C + c;
  }
  (void)child;
  return cells[r];
}

class ChainCoder {
 public:
  ChainCoder(const CascadedModel& model, const BbOptions& opt)
      : model_(model), spec_(model.spec), setup_(codec_setup(model, opt.T_codec)), den_(model), delta_(opt.delta) {
    if (!(delta_ > 0.0) || delta_ > 1.0) throw ConfigError("latent bin width must lie in (0, 1]");
    for (std::size_t s = 2; s <= spec_.levels; ++s) blocks_.push_back(make_block_coder(spec_, s, setup_.decoder_variance()));
  }

  void encode(AnsState& st, const ImageU8& img) const {
    const auto sums = level_sums(spec_, img);
    std::vector<Tensor> z0;
    for (std::size_t s = 1; s <= spec_.levels; ++s) z0.push_back(scale_from_sums(spec_, sums, s));
    for (std::size_t s = spec_.levels; s >= 1; --s) {
      const Tensor cond = s >= 2 ? cond_input(spec_, z0, s) : Tensor();
      const Tensor* cp = s >= 2 ? &cond : nullptr;
      const std::size_t T = setup_.T;
      Tensor z = pop_latent(st, z0[s - 1].shape(), q_first(s, z0[s - 1]));
      push_children(st, s, sums, predict_x0(s, z, 1, cp));
      for (std::size_t k = 2; k <= T; ++k) {
        Tensor next = pop_latent(st, z.shape(), q_step(s, z, k));
        push_latent(st, z, p_step(s, next, k, cp));
        z = std::move(next);
      }
      push_latent(st, z, prior(s, z));
    }
  }

  ImageU8 decode(AnsState& st, std::size_t h, std::size_t w, std::size_t c) const {
    if (h != spec_.height || w != spec_.width || c != spec_.channels) throw FormatError("archive image shape does not match the model");
    std::vector<std::vector<std::int64_t>> sums(spec_.levels);
    std::vector<Tensor> z0;
    for (std::size_t s = 1; s <= spec_.levels; ++s) {
      const Tensor cond = s >= 2 ? cond_input(spec_, z0, s) : Tensor();
      const Tensor* cp = s >= 2 ? &cond : nullptr;
      const Shape shape = spec_.scale_shape(s);
      Tensor z = pop_latent(st, shape, prior(s, Tensor(shape)));
      for (std::size_t k = setup_.T; k >= 2; --k) {
        Tensor prev = pop_latent(st, shape, p_step(s, z, k, cp));
        push_latent(st, z, q_step(s, prev, k));
        z = std::move(prev);
      }
      pop_children(st, s, sums, predict_x0(s, z, 1, cp));
      z0.push_back(scale_from_sums(spec_, sums, s));
      push_latent(st, z, q_first(s, z0.back()));
    }
    ImageU8 img(h, w, c);
    const auto& px = sums.back();
    for (std::size_t i = 0; i < px.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(px[i]);
    return img;
  }

 private:
  struct Gauss {
    Eigen::VectorXd mean, sd;  // in bin units
    double bin;
    bool escape;
    Role role;
    std::size_t s, k;
  };

  Gauss q_first(std::size_t s, const Tensor& z0) const {
    const double t = setup_.t(1), b = bin(1);
    return {z0.data() * (setup_.schedule.alpha(t) / b), Eigen::VectorXd::Constant(long(z0.size()), setup_.schedule.sigma(t) / b), b, false,
            Role::Forward, s, 1};
  }
  // q(z_k | z_{k-1})
  Gauss q_step(std::size_t s, const Tensor& prev, std::size_t k) const {
    const auto& sc = setup_.schedule;
    const double gs = sc.gamma(setup_.t(k - 1)), gt = sc.gamma(setup_.t(k));
    const double a = std::sqrt(NoiseSchedule::alpha2_of(gt) / NoiseSchedule::alpha2_of(gs));
    const double var = NoiseSchedule::sigma2_of(gt) * -std::expm1(gt - gs);
    const double b = bin(k);
    return {prev.data() * (a / b), Eigen::VectorXd::Constant(long(prev.size()), std::sqrt(var) / b), b, false, Role::Forward, s, k};
  }
  // p(z_{k-1} | z_k)
  Gauss p_step(std::size_t s, const Tensor& z, std::size_t k, const Tensor* cond) const {
    const Tensor xhat = predict_x0(s, z, k, cond);
    const PosteriorCoeffs pc = posterior_coeffs(setup_.schedule, setup_.t(k - 1), setup_.t(k));
    const double b = bin(k - 1);
    return {(pc.coef_z * z.data() + pc.coef_x * xhat.data()) / b, Eigen::VectorXd::Constant(long(z.size()), std::sqrt(pc.var) / b), b, true,
            Role::Reverse, s, k};
  }
  Gauss prior(std::size_t s, const Tensor& like) const {
    const double b = bin(setup_.T);
    return {Eigen::VectorXd::Zero(long(like.size())), Eigen::VectorXd::Constant(long(like.size()), 1.0 / b), b, true, Role::Prior, s, 0};
  }
  // z_k lives on a grid of delta * sigma(t_k); the widths cancel in the net codelength.
  double bin(std::size_t k) const { return delta_ * setup_.schedule.sigma(setup_.t(k)); }

  Tensor predict_x0(std::size_t s, const Tensor& z, std::size_t k, const Tensor* cond) const {
    const double g = setup_.schedule.gamma(setup_.t(k));
    NetBatch nb = make_batch({z}, Eigen::VectorXd::Constant(1, g));
    RowMatrix cm;
    if (cond) cm = make_batch({*cond}, Eigen::VectorXd::Constant(1, g)).x;
    const RowMatrix eh = den_.predict(s, nb, cond ? &cm : nullptr);
    Tensor x = z;
    const double a = std::sqrt(NoiseSchedule::alpha2_of(g)), sg = std::sqrt(NoiseSchedule::sigma2_of(g));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (z[i] - sg * eh.data()[i]) / a;
    return x;
  }

  // Scales are coded elementwise; the decoder walks forward, so the encoder walks backward.
  void push_latent(AnsState& st, const Tensor& z, const Gauss& g) const {
    for (std::size_t i = z.size(); i-- > 0;) {
      const auto v = static_cast<std::int64_t>(std::llround(z[i] / g.bin));
      DiscreteGaussian::windowed(g.mean[long(i)], g.sd[long(i)], kMinIdx, kMaxIdx, g.escape).push(st, v, rotation(g.role, g.s, g.k, i));
    }
  }
  Tensor pop_latent(AnsState& st, const Shape& shape, const Gauss& g) const {
    Tensor z(shape);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const std::int64_t v = DiscreteGaussian::windowed(g.mean[long(i)], g.sd[long(i)], kMinIdx, kMaxIdx, g.escape).pop(st, rotation(g.role, g.s, g.k, i));
      z[i] = double(v) * g.bin;
    }
    return z;
  }
  // Coarsest scale: independent block sums.
  DiscreteGaussian coarse_table(const Tensor& xhat, std::size_t i) const {
    const LevelMap m = level_map(spec_, 1);
    return DiscreteGaussian::windowed((xhat[i] - m.b) / m.a, std::sqrt(setup_.decoder_variance()) / m.a, 0, 255 * m.pixels, true);
  }

  void push_children(AnsState& st, std::size_t s, const std::vector<std::vector<std::int64_t>>& sums, const Tensor& xhat) const {
    if (s == 1) {
      for (std::size_t i = xhat.size(); i-- > 0;) coarse_table(xhat, i).push(st, sums[0][i], rotation(Role::Pixels, 1, 0, i));
      return;
    }
    const auto& parents = sums[s - 2];
    const auto& kids = sums[s - 1];
    for_blocks(s, xhat, parents, true, [&](std::size_t b, const Eigen::VectorXd& mu, const BlockCoder& bc, std::int64_t P, const std::size_t* cells) {
      const long nf = mu.size();
      std::vector<std::int64_t> f(static_cast<std::size_t>(nf));
      for (long q = 0; q < nf; ++q) f[std::size_t(q)] = kids[cells[q]];
      // Conditionals are needed in forward order; pushes go backward.
      std::vector<DiscreteGaussian> tables;
      Eigen::VectorXd xi(nf);
      std::int64_t R = P;
      for (long q = 0; q < nf; ++q) {
        const double m = mu[q] + bc.L.row(q).head(q).dot(xi.head(q));
        const double sd = bc.L(q, q);
        const std::int64_t after = nf - q;
        tables.push_back(DiscreteGaussian::windowed(m, sd, std::max<std::int64_t>(0, R - after * bc.maxv), std::min(bc.maxv, R), true));
        xi[q] = (double(f[std::size_t(q)]) - m) / sd;
        R -= f[std::size_t(q)];
      }
      for (long q = nf; q-- > 0;) tables[std::size_t(q)].push(st, f[std::size_t(q)], rotation(Role::Pixels, s, std::size_t(q), b));
    });
  }

  void pop_children(AnsState& st, std::size_t s, std::vector<std::vector<std::int64_t>>& sums, const Tensor& xhat) const {
    const Shape ls = level_shape(spec_, s);
    sums[s - 1].assign(shape_size(ls), 0);
    if (s == 1) {
      for (std::size_t i = 0; i < xhat.size(); ++i) sums[0][i] = coarse_table(xhat, i).pop(st, rotation(Role::Pixels, 1, 0, i));
      return;
    }
    const auto& parents = sums[s - 2];
    auto& kids = sums[s - 1];
    for_blocks(s, xhat, parents, false, [&](std::size_t b, const Eigen::VectorXd& mu, const BlockCoder& bc, std::int64_t P, const std::size_t* cells) {
      const long nf = mu.size();
      Eigen::VectorXd xi(nf);
      std::int64_t R = P;
      for (long q = 0; q < nf; ++q) {
        const double m = mu[q] + bc.L.row(q).head(q).dot(xi.head(q));
        const double sd = bc.L(q, q);
        const std::int64_t after = nf - q;
        const std::int64_t v =
            DiscreteGaussian::windowed(m, sd, std::max<std::int64_t>(0, R - after * bc.maxv), std::min(bc.maxv, R), true).pop(st, rotation(Role::Pixels, s, std::size_t(q), b));
        kids[cells[q]] = v;
        xi[q] = (double(v) - m) / sd;
        R -= v;
      }
      if (R < 0 || R > bc.maxv) throw FormatError("decoded block sums are inconsistent");
      kids[cells[nf]] = R;
    });
  }

  // Calls fn(block, mean of free children, coder, parent sum, child cells) per parent block.
  template <typename Fn>
  void for_blocks(std::size_t s, const Tensor& xhat, const std::vector<std::int64_t>& parents, bool reverse, Fn&& fn) const {
    const BlockCoder& bc = blocks_[s - 2];
    const Geometry g = geometry(spec_);
    const Shape ps = level_shape(spec_, s - 1), cs = level_shape(spec_, s);
    const std::size_t H = ps[0], W = ps[1], C = ps[2], nblk = H * W * C;
    const long rows = bc.M.rows();
    std::size_t cells[4];
    Eigen::VectorXd target(rows);
    for (std::size_t q = 0; q < nblk; ++q) {
      const std::size_t b = reverse ? nblk - 1 - q : q;
      const std::size_t c = b % C, j = (b / C) % W, i = b / (C * W);
      child_cells(cs, g.one_d, i, j, c, cells);
      for (long r = 0; r < rows; ++r) target[r] = xhat[target_index(spec_.kind, ps, cs, g.one_d, i, j, c, std::size_t(r), cells)];
      const std::int64_t P = parents[b];
      const Eigen::VectorXd h0 = bc.map.a * double(P) * bc.Mlast + bc.map.b * bc.Mones - target;
      const Eigen::VectorXd mu = -(bc.W * h0);
      fn(b, mu, bc, P, cells);
    }
  }

  static constexpr std::int64_t kMinIdx = -(std::int64_t{1} << 40);
  static constexpr std::int64_t kMaxIdx = std::int64_t{1} << 40;

  const CascadedModel& model_;
  HierarchySpec spec_;
  DiffusionSetup setup_;
  NetDenoiser den_;
  double delta_;
  std::vector<BlockCoder> blocks_;
};

AnsState aux_state(std::uint64_t seed, std::size_t words) {
  Rng r(seed);
  const std::uint64_t head = AnsState::kLower | (r.next_u64() >> 33);
  std::vector<std::uint32_t> w(words);
  for (auto& v : w) v = r.next_u32();
  return AnsState(head, std::move(w));
}

std::uint64_t checksum(const AnsState& st) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  feed(st.head(), 8);
  for (auto w : st.words()) feed(w, 4);
  return h;
}

}  // namespace

DiffusionSetup codec_setup(const CascadedModel& model, std::size_t T_codec) {
  DiffusionSetup s = model.setup;
  s.T = T_codec;
  s.validate();
  return s;
}

std::size_t default_aux_words(const CascadedModel& model, const BbOptions& opt) {
  (void)opt;
  return 16 + (12 * model.spec.total_dim()) / 32;
}

std::vector<std::vector<std::int64_t>> level_sums(const HierarchySpec& spec, const ImageU8& img) {
  spec.validate();
  img.validate();
  if (img.height != spec.height || img.width != spec.width || img.channels != spec.channels) {
    throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" + std::to_string(img.channels) +
                     " does not match the model");
  }
  const Geometry g = geometry(spec);
  std::vector<std::vector<std::int64_t>> sums(spec.levels);
  sums.back().assign(img.pixels.begin(), img.pixels.end());
  for (std::size_t s = spec.levels; s >= 2; --s) {
    const Shape ps = level_shape(spec, s - 1), cs = level_shape(spec, s);
    auto& out = sums[s - 2];
    out.assign(shape_size(ps), 0);
    std::size_t cells[4];
    for (std::size_t i = 0; i < ps[0]; ++i)
      for (std::size_t j = 0; j < ps[1]; ++j)
        for (std::size_t c = 0; c < ps[2]; ++c) {
          child_cells(cs, g.one_d, i, j, c, cells);
          std::int64_t t = 0;
          for (std::size_t q = 0; q < g.children; ++q) t += sums[s - 1][cells[q]];
          out[(i * ps[1] + j) * ps[2] + c] = t;
        }
  }
  return sums;
}

Tensor scale_from_sums(const HierarchySpec& spec, const std::vector<std::vector<std::int64_t>>& sums, std::size_t s) {
  if (s < 1 || s > spec.levels || sums.size() < s) throw ShapeError("scale_from_sums: scale out of range");
  const LevelMap m = level_map(spec, s);
  Tensor y(level_shape(spec, s));
  if (sums[s - 1].size() != y.size()) throw ShapeError("scale_from_sums: level size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = m.a * double(sums[s - 1][i]) + m.b;
  if (s == 1 || spec.kind == HierarchyKind::NearestNeighbor) return y;
  if (spec.kind == HierarchyKind::HaarWavelet) {
    Tensor detail;
    haar_step(y, detail);
    return detail;
  }
  Tensor up = upsample_np(downsample_np(y), spec.one_d());
  return y - up;
}

void bb_push_image(const CascadedModel& model, AnsState& stream, const ImageU8& img, const BbOptions& opt) {
  ChainCoder(model, opt).encode(stream, img);
}

ImageU8 bb_pop_image(const CascadedModel& model, AnsState& stream, const BbOptions& opt) {
  return ChainCoder(model, opt).decode(stream, model.spec.height, model.spec.width, model.spec.channels);
}

BbArchive bb_encode(const CascadedModel& model, const std::vector<ImageU8>& images, const BbOptions& opt, BbReport* report) {
  model.validate();
  if (images.empty()) throw ConfigError("nothing to compress");
  ChainCoder coder(model, opt);
  BbArchive a;
  a.model_hash = model.hash();
  a.delta = opt.delta;
  a.T_codec = static_cast<std::uint32_t>(opt.T_codec);
  a.aux_seed = opt.aux_seed;
  a.aux_words = static_cast<std::uint32_t>(opt.aux_words ? opt.aux_words : default_aux_words(model, opt));
  a.stream = aux_state(a.aux_seed, a.aux_words);
  BbReport rep;
  rep.aux_bits = a.stream.bits();
  for (const auto& img : images) {
    const double before = a.stream.bits();
    coder.encode(a.stream, img);
    rep.per_image_net_bits.push_back(a.stream.bits() - before);
    a.dims.insert(a.dims.end(), {static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width),
                                 static_cast<std::uint32_t>(img.channels)});
    rep.pixels += img.pixels.size();
  }
  rep.gross_bits = a.stream.bits();
  rep.net_bits = rep.gross_bits - rep.aux_bits;
  if (report) *report = rep;
  return a;
}

std::vector<ImageU8> bb_decode(const CascadedModel& model, const BbArchive& archive) {
  model.validate();
  if (archive.model_hash != model.hash()) throw FormatError("archive was written with a different model");
  if (archive.dims.empty() || archive.dims.size() % 3) throw FormatError("archive lists no images");
  BbOptions opt;
  opt.delta = archive.delta;
  opt.T_codec = archive.T_codec;
  ChainCoder coder(model, opt);
  AnsState st = archive.stream;
  const std::size_t n = archive.dims.size() / 3;
  std::vector<ImageU8> out(n);
  for (std::size_t q = n; q-- > 0;) {
    try {
      out[q] = coder.decode(st, archive.dims[3 * q], archive.dims[3 * q + 1], archive.dims[3 * q + 2]);
    } catch (const Error& e) {
      throw FormatError("corrupted stream while decoding image " + std::to_string(q) + " (" + std::to_string(st.words().size()) +
                        " words left): " + e.what());
    }
  }
  if (!(st == aux_state(archive.aux_seed, archive.aux_words))) {
    throw FormatError("corrupted stream: decoding did not restore the auxiliary bits (" + std::to_string(st.words().size()) + " words left, expected " +
                      std::to_string(archive.aux_words) + ")");
  }
  return out;
}

void write_archive(std::ostream& os, const BbArchive& a) {
  os.write(kMagic, sizeof kMagic);
  le::put_u64(os, a.model_hash);
  le::put_f64(os, a.delta);
  le::put_u32(os, a.T_codec);
  le::put_u64(os, a.aux_seed);
  le::put_u32(os, a.aux_words);
  le::put_u32(os, static_cast<std::uint32_t>(a.dims.size() / 3));
  for (auto d : a.dims) le::put_u32(os, d);
  le::put_u64(os, a.stream.head());
  le::put_u64(os, a.stream.words().size());
  for (auto w : a.stream.words()) le::put_u32(os, w);
  le::put_u64(os, checksum(a.stream));
  if (!os) throw IoError("archive write failed");
}

BbArchive read_archive(std::istream& is) {
  char magic[sizeof kMagic];
  le::read_exact(is, magic, sizeof magic, "archive magic");
  if (!std::equal(magic, magic + sizeof magic, kMagic)) throw FormatError("not a PCDMBB1 archive");
  BbArchive a;
  a.model_hash = le::get_u64(is);
  a.delta = le::get_f64(is);
  a.T_codec = le::get_u32(is);
  a.aux_seed = le::get_u64(is);
  a.aux_words = le::get_u32(is);
  const std::uint32_t n = le::get_u32(is);
  if (n == 0) throw FormatError("archive holds no images");
  if (n > (1u << 24)) throw FormatError("implausible image count");
  a.dims.resize(3 * std::size_t{n});
  for (auto& d : a.dims) d = le::get_u32(is);
  const std::uint64_t head = le::get_u64(is);
  const std::uint64_t nw = le::get_u64(is);
  if (nw > (std::uint64_t{1} << 32)) throw FormatError("implausible payload length");
  std::vector<std::uint32_t> words;
  for (std::uint64_t i = 0; i < nw; ++i) {
    try {
      words.push_back(le::get_u32(is));
    } catch (const TruncationError&) {
      throw TruncationError("archive truncated at payload word " + std::to_string(i) + " of " + std::to_string(nw));
    }
  }
  a.stream = AnsState(head, std::move(words));
  const std::uint64_t sum = le::get_u64(is);
  if (sum != checksum(a.stream)) throw FormatError("archive payload checksum mismatch");
  return a;
}

void write_archive(const std::string& path, const BbArchive& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_archive(os, a);
}

BbArchive read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return read_archive(is);
}

}  // namespace pcdm
