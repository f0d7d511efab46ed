#pragma once

#include <Eigen/Core>

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcdm/tensor.hpp"

namespace pcdm {

enum class HierarchyKind { HaarWavelet, LaplacianPyramid, NearestNeighbor };

std::string to_string(HierarchyKind kind);
HierarchyKind parse_hierarchy_kind(const std::string& name);

/// Shape and kind of a hierarchical map. A height of 1 selects the 1-D
/// analog, where every resampling step acts on pairs along the row.
struct HierarchySpec {
  HierarchyKind kind = HierarchyKind::HaarWavelet;
  std::size_t levels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  bool one_d() const { return height == 1; }
  void validate() const;

  Shape input_shape() const { return {height, width, channels}; }
  std::size_t input_dim() const { return height * width * channels; }
  /// Shape of z^(s), s in [1, levels].
  Shape scale_shape(std::size_t s) const;
  std::size_t total_dim() const;
  /// Channels of the conditioning input for scale s >= 2 (0 for s = 1).
  std::size_t cond_channels(std::size_t s) const { return s >= 2 ? channels : 0; }

  friend bool operator==(const HierarchySpec&, const HierarchySpec&) = default;
};

template <typename Scalar>
struct BasicMultiScaleRep {
  std::vector<BasicTensor<Scalar>> scales;  // z^(1) ... z^(S)
  HierarchySpec spec;

  const BasicTensor<Scalar>& scale(std::size_t s) const { return scales.at(s - 1); }
  BasicTensor<Scalar>& scale(std::size_t s) { return scales.at(s - 1); }

  void validate() const {
    spec.validate();
    if (scales.size() != spec.levels) throw ShapeError("rep has " + std::to_string(scales.size()) + " scales, spec wants " + std::to_string(spec.levels));
    for (std::size_t s = 1; s <= spec.levels; ++s) {
      if (scales[s - 1].shape() != spec.scale_shape(s)) {
        throw ShapeError("scale " + std::to_string(s) + " has shape " + shape_string(scales[s - 1].shape()) +
                         ", expected " + shape_string(spec.scale_shape(s)));
      }
    }
  }

  static BasicMultiScaleRep zeros(const HierarchySpec& spec) {
    BasicMultiScaleRep r;
    r.spec = spec;
    for (std::size_t s = 1; s <= spec.levels; ++s) r.scales.emplace_back(spec.scale_shape(s));
    return r;
  }
};

using MultiScaleRep = BasicMultiScaleRep<double>;

namespace detail {

template <typename Scalar>
void require_image(const BasicTensor<Scalar>& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected HxWxC tensor, got " + shape_string(t.shape()));
}

template <typename Scalar>
Scalar inv_sqrt2() {
  return Scalar(1) / std::sqrt(Scalar(2));
}

}  // namespace detail

/// Stride-2 block sum divided by 2 (1/sqrt2 along a single row).
template <typename Scalar>
BasicTensor<Scalar> downsample_np(const BasicTensor<Scalar>& x) {
  detail::require_image(x, "downsample_np");
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  if (W % 2) throw ShapeError("downsample_np: odd width " + std::to_string(W));
  if (H == 1) {
    BasicTensor<Scalar> y = BasicTensor<Scalar>::image(1, W / 2, C);
    const Scalar k = detail::inv_sqrt2<Scalar>();
    for (std::size_t j = 0; j < W / 2; ++j)
      for (std::size_t c = 0; c < C; ++c) y(0, j, c) = k * (x(0, 2 * j, c) + x(0, 2 * j + 1, c));
    return y;
  }
  if (H % 2) throw ShapeError("downsample_np: odd height " + std::to_string(H));
  BasicTensor<Scalar> y = BasicTensor<Scalar>::image(H / 2, W / 2, C);
  for (std::size_t i = 0; i < H / 2; ++i)
    for (std::size_t j = 0; j < W / 2; ++j)
      for (std::size_t c = 0; c < C; ++c)
        y(i, j, c) = (x(2 * i, 2 * j, c) + x(2 * i, 2 * j + 1, c) + x(2 * i + 1, 2 * j, c) + x(2 * i + 1, 2 * j + 1, c)) / Scalar(2);
  return y;
}

/// Adjoint of downsample_np: each value y becomes a 2x2 block of y/2.
template <typename Scalar>
BasicTensor<Scalar> upsample_np(const BasicTensor<Scalar>& y, bool one_d = false) {
  detail::require_image(y, "upsample_np");
  const std::size_t H = y.height(), W = y.width(), C = y.channels();
  if (one_d) {
    if (H != 1) throw ShapeError("upsample_np: 1-D mode needs height 1");
    BasicTensor<Scalar> x = BasicTensor<Scalar>::image(1, 2 * W, C);
    const Scalar k = detail::inv_sqrt2<Scalar>();
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) x(0, 2 * j, c) = x(0, 2 * j + 1, c) = k * y(0, j, c);
    return x;
  }
  BasicTensor<Scalar> x = BasicTensor<Scalar>::image(2 * H, 2 * W, C);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar v = y(i, j, c) / Scalar(2);
        x(2 * i, 2 * j, c) = x(2 * i, 2 * j + 1, c) = x(2 * i + 1, 2 * j, c) = x(2 * i + 1, 2 * j + 1, c) = v;
      }
  return x;
}

/// One analysis step: returns LL, writes the detail bands (HH, HL, LH
/// stacked channel-wise; a single band in 1-D) into `detail`.
template <typename Scalar>
BasicTensor<Scalar> haar_step(const BasicTensor<Scalar>& x, BasicTensor<Scalar>& detail) {
  detail::require_image(x, "haar_step");
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  if (W % 2) throw ShapeError("haar_step: odd width");
  if (H == 1) {
    const Scalar k = detail::inv_sqrt2<Scalar>();
    BasicTensor<Scalar> ll = BasicTensor<Scalar>::image(1, W / 2, C);
    detail = BasicTensor<Scalar>::image(1, W / 2, C);
    for (std::size_t j = 0; j < W / 2; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar a = x(0, 2 * j, c), b = x(0, 2 * j + 1, c);
        ll(0, j, c) = k * (a + b);
        detail(0, j, c) = k * (b - a);
      }
    return ll;
  }
  if (H % 2) throw ShapeError("haar_step: odd height");
  BasicTensor<Scalar> ll = BasicTensor<Scalar>::image(H / 2, W / 2, C);
  detail = BasicTensor<Scalar>::image(H / 2, W / 2, 3 * C);
  for (std::size_t i = 0; i < H / 2; ++i)
    for (std::size_t j = 0; j < W / 2; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar a = x(2 * i, 2 * j, c), b = x(2 * i, 2 * j + 1, c);
        const Scalar cc = x(2 * i + 1, 2 * j, c), d = x(2 * i + 1, 2 * j + 1, c);
        ll(i, j, c) = (a + b + cc + d) / Scalar(2);
        detail(i, j, c) = (a - b - cc + d) / Scalar(2);          // HH
        detail(i, j, C + c) = (-a - b + cc + d) / Scalar(2);     // HL
        detail(i, j, 2 * C + c) = (-a + b - cc + d) / Scalar(2);  // LH
      }
  return ll;
}

template <typename Scalar>
BasicTensor<Scalar> haar_step_inverse(const BasicTensor<Scalar>& ll, const BasicTensor<Scalar>& detail, bool one_d) {
  detail::require_image(ll, "haar_step_inverse");
  const std::size_t H = ll.height(), W = ll.width(), C = ll.channels();
  const std::size_t bands = one_d ? 1 : 3;
  if (detail.shape() != Shape{H, W, bands * C}) throw ShapeError("haar_step_inverse: detail shape " + shape_string(detail.shape()) + " does not match LL " + shape_string(ll.shape()));
  if (one_d) {
    const Scalar k = detail::inv_sqrt2<Scalar>();
    BasicTensor<Scalar> x = BasicTensor<Scalar>::image(1, 2 * W, C);
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar l = ll(0, j, c), h = detail(0, j, c);
        x(0, 2 * j, c) = k * (l - h);
        x(0, 2 * j + 1, c) = k * (l + h);
      }
    return x;
  }
  BasicTensor<Scalar> x = BasicTensor<Scalar>::image(2 * H, 2 * W, C);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar l = ll(i, j, c), hh = detail(i, j, c), hl = detail(i, j, C + c), lh = detail(i, j, 2 * C + c);
        x(2 * i, 2 * j, c) = (l + hh - hl - lh) / Scalar(2);
        x(2 * i, 2 * j + 1, c) = (l - hh - hl + lh) / Scalar(2);
        x(2 * i + 1, 2 * j, c) = (l - hh + hl - lh) / Scalar(2);
        x(2 * i + 1, 2 * j + 1, c) = (l + hh + hl + lh) / Scalar(2);
      }
  return x;
}

inline HierarchySpec spec_for(HierarchyKind kind, const Shape& shape, std::size_t levels) {
  if (shape.size() != 3) throw ShapeError("hierarchy input must be HxWxC, got " + shape_string(shape));
  HierarchySpec spec{kind, levels, shape[0], shape[1], shape[2]};
  spec.validate();
  return spec;
}

template <typename Scalar>
BasicMultiScaleRep<Scalar> haar_forward(const BasicTensor<Scalar>& x, std::size_t S) {
  detail::require_image(x, "haar_forward");
  BasicMultiScaleRep<Scalar> rep;
  rep.spec = spec_for(HierarchyKind::HaarWavelet, x.shape(), S);
  rep.scales.resize(S);
  BasicTensor<Scalar> y = x;
  for (std::size_t s = S; s >= 2; --s) {
    BasicTensor<Scalar> ll = haar_step(y, rep.scales[s - 1]);
    y = std::move(ll);
  }
  rep.scales[0] = std::move(y);
  return rep;
}

template <typename Scalar>
BasicTensor<Scalar> haar_inverse(const BasicMultiScaleRep<Scalar>& rep) {
  if (rep.spec.kind != HierarchyKind::HaarWavelet) throw ShapeError("haar_inverse: rep is not a Haar decomposition");
  rep.validate();
  BasicTensor<Scalar> y = rep.scales[0];
  for (std::size_t s = 2; s <= rep.spec.levels; ++s) y = haar_step_inverse(y, rep.scales[s - 1], rep.spec.one_d());
  return y;
}

template <typename Scalar>
BasicMultiScaleRep<Scalar> lp_forward(const BasicTensor<Scalar>& x, std::size_t S) {
  detail::require_image(x, "lp_forward");
  BasicMultiScaleRep<Scalar> rep;
  rep.spec = spec_for(HierarchyKind::LaplacianPyramid, x.shape(), S);
  const bool one_d = rep.spec.one_d();
  rep.scales.resize(S);
  BasicTensor<Scalar> y = x;
  for (std::size_t s = S; s >= 2; --s) {
    BasicTensor<Scalar> coarse = downsample_np(y);
    y -= upsample_np(coarse, one_d);
    rep.scales[s - 1] = std::move(y);
    y = std::move(coarse);
  }
  rep.scales[0] = std::move(y);
  return rep;
}

template <typename Scalar>
BasicTensor<Scalar> lp_inverse(const BasicMultiScaleRep<Scalar>& rep) {
  if (rep.spec.kind != HierarchyKind::LaplacianPyramid) throw ShapeError("lp_inverse: rep is not a Laplacian pyramid");
  rep.validate();
  BasicTensor<Scalar> y = rep.scales[0];
  for (std::size_t s = 2; s <= rep.spec.levels; ++s) {
    BasicTensor<Scalar> up = upsample_np(y, rep.spec.one_d());
    up += rep.scales[s - 1];
    y = std::move(up);
  }
  return y;
}

/// z^(S) = x and z^(s) = (block sum over 2^k x 2^k) * 2^-k with k = S - s.
template <typename Scalar>
BasicMultiScaleRep<Scalar> nn_forward(const BasicTensor<Scalar>& x, std::size_t S) {
  detail::require_image(x, "nn_forward");
  BasicMultiScaleRep<Scalar> rep;
  rep.spec = spec_for(HierarchyKind::NearestNeighbor, x.shape(), S);
  const bool one_d = rep.spec.one_d();
  rep.scales.resize(S);
  rep.scales[S - 1] = x;
  for (std::size_t s = S - 1; s >= 1; --s) {
    const BasicTensor<Scalar>& f = rep.scales[s];
    const std::size_t H = f.height(), W = f.width(), C = f.channels();
    BasicTensor<Scalar> g = one_d ? BasicTensor<Scalar>::image(1, W / 2, C) : BasicTensor<Scalar>::image(H / 2, W / 2, C);
    for (std::size_t i = 0; i < g.height(); ++i)
      for (std::size_t j = 0; j < g.width(); ++j)
        for (std::size_t c = 0; c < C; ++c) {
          Scalar sum = f(one_d ? 0 : 2 * i, 2 * j, c) + f(one_d ? 0 : 2 * i, 2 * j + 1, c);
          if (!one_d) sum += f(2 * i + 1, 2 * j, c) + f(2 * i + 1, 2 * j + 1, c);
          g(i, j, c) = sum / Scalar(2);
        }
    rep.scales[s - 1] = std::move(g);
  }
  return rep;
}

/// The finest scale carries x unchanged.
template <typename Scalar>
BasicTensor<Scalar> nn_inverse(const BasicMultiScaleRep<Scalar>& rep) {
  if (rep.spec.kind != HierarchyKind::NearestNeighbor) throw ShapeError("nn_inverse: rep is not a nearest-neighbor hierarchy");
  rep.validate();
  return rep.scales.back();
}

template <typename Scalar>
BasicMultiScaleRep<Scalar> forward(HierarchyKind kind, const BasicTensor<Scalar>& x, std::size_t S) {
  switch (kind) {
    case HierarchyKind::HaarWavelet:
      return haar_forward(x, S);
    case HierarchyKind::LaplacianPyramid:
      return lp_forward(x, S);
    case HierarchyKind::NearestNeighbor:
      return nn_forward(x, S);
  }
  throw ShapeError("unknown hierarchy kind");
}

template <typename Scalar>
BasicTensor<Scalar> inverse(const BasicMultiScaleRep<Scalar>& rep) {
  switch (rep.spec.kind) {
    case HierarchyKind::HaarWavelet:
      return haar_inverse(rep);
    case HierarchyKind::LaplacianPyramid:
      return lp_inverse(rep);
    case HierarchyKind::NearestNeighbor:
      return nn_inverse(rep);
  }
  throw ShapeError("unknown hierarchy kind");
}

/// Low-pass approximation y^(s-1) rebuilt from z^(1..s-1) alone.
template <typename Scalar>
BasicTensor<Scalar> partial_reconstruction(const HierarchySpec& spec, const std::vector<BasicTensor<Scalar>>& coarse) {
  if (coarse.empty()) throw ShapeError("partial_reconstruction: no scales given");
  const std::size_t n = coarse.size();
  if (spec.kind == HierarchyKind::NearestNeighbor) return coarse.back();
  BasicTensor<Scalar> y = coarse[0];
  for (std::size_t s = 2; s <= n; ++s) {
    if (spec.kind == HierarchyKind::HaarWavelet) {
      y = haar_step_inverse(y, coarse[s - 1], spec.one_d());
    } else {
      BasicTensor<Scalar> up = upsample_np(y, spec.one_d());
      up += coarse[s - 1];
      y = std::move(up);
    }
  }
  return y;
}

/// Conditioning input for scale s >= 2: the inverse map applied to
/// (z^(1..s-1), 0, ..., 0) and downsampled to the extent of z^(s).
template <typename Scalar>
BasicTensor<Scalar> cond_input(const HierarchySpec& spec, const std::vector<BasicTensor<Scalar>>& coarse, std::size_t s) {
  if (s < 2 || s > spec.levels) throw ShapeError("cond_input: scale " + std::to_string(s) + " out of range [2, " + std::to_string(spec.levels) + "]");
  if (coarse.size() < s - 1) throw ShapeError("cond_input: need " + std::to_string(s - 1) + " coarser scales");
  std::vector<BasicTensor<Scalar>> lower(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(s - 1));
  for (std::size_t k = 1; k < s; ++k)
    if (lower[k - 1].shape() != spec.scale_shape(k)) throw ShapeError("cond_input: scale " + std::to_string(k) + " has wrong shape");
  BasicTensor<Scalar> y = partial_reconstruction(spec, lower);
  const Shape target = spec.scale_shape(s);
  if (y.width() != target[1]) y = upsample_np(y, spec.one_d());
  return y;
}

/// Concatenation of all scales, z^(1) first.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flatten(const BasicMultiScaleRep<Scalar>& rep) {
  std::size_t n = 0;
  for (const auto& z : rep.scales) n += z.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v(static_cast<Eigen::Index>(n));
  Eigen::Index off = 0;
  for (const auto& z : rep.scales) {
    v.segment(off, static_cast<Eigen::Index>(z.size())) = z.data();
    off += static_cast<Eigen::Index>(z.size());
  }
  return v;
}

template <typename Scalar>
BasicMultiScaleRep<Scalar> unflatten(const HierarchySpec& spec, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
  if (static_cast<std::size_t>(v.size()) != spec.total_dim()) throw ShapeError("unflatten: vector length does not match spec");
  BasicMultiScaleRep<Scalar> rep = BasicMultiScaleRep<Scalar>::zeros(spec);
  Eigen::Index off = 0;
  for (auto& z : rep.scales) {
    z.data() = v.segment(off, static_cast<Eigen::Index>(z.size()));
    off += static_cast<Eigen::Index>(z.size());
  }
  return rep;
}

/// A as a dim(Z) x dim(X) matrix, built by probing basis vectors.
Eigen::MatrixXd jacobian_matrix(const HierarchySpec& spec);

/// sqrt(det(A^T A)) through a Cholesky log-determinant.
double volume_factor(const HierarchySpec& spec);
double volume_factor(const Eigen::MatrixXd& A);

void write_rep(std::ostream& os, const MultiScaleRep& rep);
MultiScaleRep read_rep(std::istream& is);

}  // namespace pcdm
