#include "pcdm/checks.hpp"

#include <algorithm>
#include <cmath>

#include "pcdm/diffusion.hpp"

namespace pcdm {

namespace {

Tensor normal_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

std::string label(HierarchyKind kind, std::size_t h, std::size_t w, std::size_t S) {
  return to_string(kind) + " " + std::to_string(h) + "x" + std::to_string(w) + " S=" + std::to_string(S);
}

}  // namespace

std::vector<CheckResult> volume_checks(double tol) {
  std::vector<CheckResult> out;
  for (auto kind : {HierarchyKind::HaarWavelet, HierarchyKind::LaplacianPyramid})
    for (std::size_t n : {4, 8})
      for (std::size_t S = 1; S <= 3; ++S) {
        const HierarchySpec spec = spec_for(kind, {n, n, 1}, S);
        const Eigen::MatrixXd A = jacobian_matrix(spec);
        const double vf = std::abs(volume_factor(A) - 1.0);
        const Eigen::MatrixXd gram = A.transpose() * A;
        const double ortho = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        out.push_back({"volume_factor " + label(kind, n, n, S), vf, tol, vf <= tol});
        out.push_back({"AtA=I " + label(kind, n, n, S), ortho, tol, ortho <= tol});
      }
  for (std::size_t n : {4, 8}) {
    const double vf = volume_factor(spec_for(HierarchyKind::NearestNeighbor, {n, n, 1}, 2));
    out.push_back({"volume_factor>1 " + label(HierarchyKind::NearestNeighbor, n, n, 2), vf, 1.0, vf > 1.0});
  }
  return out;
}

std::vector<CheckResult> roundtrip_checks(const Shape& shape, std::size_t levels, std::size_t seeds, double tol) {
  std::vector<CheckResult> out;
  for (auto kind : {HierarchyKind::HaarWavelet, HierarchyKind::LaplacianPyramid, HierarchyKind::NearestNeighbor}) {
    double rt = 0.0, parseval = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      Rng rng(seed);
      const Tensor x = normal_tensor(shape, rng);
      const MultiScaleRep rep = forward(kind, x, levels);
      rt = std::max(rt, max_abs_diff(inverse(rep), x));
      const double nx = norm(x);
      parseval = std::max(parseval, std::abs(flatten(rep).norm() - nx) / nx);
    }
    const std::string name = label(kind, shape[0], shape[1], levels) + " over " + std::to_string(seeds) + " seeds";
    out.push_back({"round trip " + name, rt, tol, rt < tol});
    if (kind != HierarchyKind::NearestNeighbor) out.push_back({"Parseval " + name, parseval, tol, parseval <= tol});
  }
  return out;
}

CheckResult gradient_check(std::uint64_t seed, std::size_t probes_per_scale, double tol) {
  const HierarchySpec spec = spec_for(HierarchyKind::HaarWavelet, {4, 4, 1}, 2);
  DiffusionSetup setup;
  setup.T = 4;
  Rng base(seed);
  Rng init = base.child(0), data = base.child(1), pick = base.child(2);
  const std::uint64_t loss_seed = base.child(3).next_u64();
  CascadedModel m = CascadedModel::create(spec, setup, {4, 4}, init, true);
  const Tensor x = normal_tensor(spec.input_shape(), data);

  std::vector<Eigen::VectorXd> g;
  Rng r0(loss_seed);
  cascaded_loss(m, x, r0, EvalMode::full_sum(), &g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t s = 0; s < m.nets.size(); ++s) {
    auto& p = m.nets[s].params();
    for (std::size_t trial = 0; trial < probes_per_scale; ++trial) {
      const auto i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(p.size())));
      const double keep = p[i];
      p[i] = keep + h;
      Rng rp(loss_seed);
      const double fp = cascaded_loss(m, x, rp, EvalMode::full_sum()).total_nats();
      p[i] = keep - h;
      Rng rm(loss_seed);
      const double fm = cascaded_loss(m, x, rm, EvalMode::full_sum()).total_nats();
      p[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[s][i]) / std::max(1.0, std::abs(fd)));
    }
  }
  return {"gradient 4x4 S=2 T=4", worst, tol, worst <= tol};
}

bool all_pass(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

}  // namespace pcdm
