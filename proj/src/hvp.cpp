#include "pcdm/hvp.hpp"

#include <Eigen/Cholesky>

#include <istream>
#include <ostream>
#include <sstream>

#include "pcdm/io.hpp"

namespace pcdm {

std::string to_string(HierarchyKind kind) {
  switch (kind) {
    case HierarchyKind::HaarWavelet:
      return "haar";
    case HierarchyKind::LaplacianPyramid:
      return "laplacian";
    case HierarchyKind::NearestNeighbor:
      return "nearest";
  }
  return "?";
}

HierarchyKind parse_hierarchy_kind(const std::string& name) {
  if (name == "haar" || name == "wavelet" || name == "W") return HierarchyKind::HaarWavelet;
  if (name == "laplacian" || name == "lp" || name == "LP") return HierarchyKind::LaplacianPyramid;
  if (name == "nearest" || name == "nn" || name == "cvdm") return HierarchyKind::NearestNeighbor;
  throw ConfigError("unknown hierarchy '" + name + "' (expected haar, laplacian or nearest)");
}

void HierarchySpec::validate() const {
  if (levels < 1) throw ShapeError("hierarchy needs at least one level");
  if (height == 0 || width == 0 || channels == 0) throw ShapeError("hierarchy input has a zero dimension");
  const std::size_t f = std::size_t{1} << (levels - 1);
  if (width % f != 0 || (!one_d() && height % f != 0)) {
    throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 2^" +
                     std::to_string(levels - 1));
  }
}

Shape HierarchySpec::scale_shape(std::size_t s) const {
  if (s < 1 || s > levels) throw ShapeError("scale index " + std::to_string(s) + " out of range");
  const std::size_t bands = one_d() ? 1 : 3;
  if (kind == HierarchyKind::HaarWavelet) {
    const std::size_t f = std::size_t{1} << (levels - (s == 1 ? 1 : s - 1));
    const std::size_t h = one_d() ? 1 : height / f;
    return {h, width / f, s == 1 ? channels : bands * channels};
  }
  const std::size_t f = std::size_t{1} << (levels - s);
  return {one_d() ? 1 : height / f, width / f, channels};
}

std::size_t HierarchySpec::total_dim() const {
  std::size_t n = 0;
  for (std::size_t s = 1; s <= levels; ++s) n += shape_size(scale_shape(s));
  return n;
}

Eigen::MatrixXd jacobian_matrix(const HierarchySpec& spec) {
  spec.validate();
  const std::size_t n = spec.input_dim();
  if (n > 4096) throw ShapeError("jacobian_matrix: input dimension " + std::to_string(n) + " exceeds probing limit 4096");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(spec.total_dim()), static_cast<Eigen::Index>(n));
  Tensor e(spec.input_shape());
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    A.col(static_cast<Eigen::Index>(j)) = flatten(forward(spec.kind, e, spec.levels));
    e[j] = 0.0;
  }
  return A;
}

double volume_factor(const Eigen::MatrixXd& A) {
  const Eigen::MatrixXd G = A.transpose() * A;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw SingularError("A^T A is not positive definite");
  const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
  const double scale = G.diagonal().cwiseAbs().maxCoeff();
  if (diag.minCoeff() <= 1e-12 * std::sqrt(scale)) throw SingularError("A^T A is numerically rank deficient");
  return std::exp(diag.array().log().sum());
}

double volume_factor(const HierarchySpec& spec) { return volume_factor(jacobian_matrix(spec)); }

void write_rep(std::ostream& os, const MultiScaleRep& rep) {
  rep.validate();
  const auto& sp = rep.spec;
  os << "PCDMREP kind=" << to_string(sp.kind) << " S=" << sp.levels << " shape=" << sp.height << 'x' << sp.width << 'x'
     << sp.channels << '\n';
  for (const auto& z : rep.scales) write_tensor(os, z);
}

MultiScaleRep read_rep(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw TruncationError("missing rep header");
  std::istringstream hs(line);
  std::string magic, kind, levels, shape;
  hs >> magic >> kind >> levels >> shape;
  if (magic != "PCDMREP" || kind.rfind("kind=", 0) != 0 || levels.rfind("S=", 0) != 0 || shape.rfind("shape=", 0) != 0) {
    throw FormatError("malformed rep header: '" + line + "'");
  }
  MultiScaleRep rep;
  try {
    rep.spec.kind = parse_hierarchy_kind(kind.substr(5));
    rep.spec.levels = std::stoul(levels.substr(2));
    std::string dims = shape.substr(6);
    for (char& c : dims)
      if (c == 'x') c = ' ';
    std::istringstream ds(dims);
    if (!(ds >> rep.spec.height >> rep.spec.width >> rep.spec.channels)) throw FormatError("bad shape");
  } catch (const std::exception&) {
    throw FormatError("malformed rep header: '" + line + "'");
  }
  rep.spec.validate();
  for (std::size_t s = 1; s <= rep.spec.levels; ++s) rep.scales.push_back(read_tensor(is));
  rep.validate();
  return rep;
}

}  // namespace pcdm
