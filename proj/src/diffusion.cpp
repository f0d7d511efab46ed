#include "pcdm/diffusion.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "pcdm/error.hpp"
#include "pcdm/io.hpp"

namespace pcdm {

namespace {

constexpr std::size_t kChunk = 128;

double softplus(double g) { return g > 30 ? g + std::log1p(std::exp(-g)) : std::log1p(std::exp(g)); }

struct Item {
  std::size_t image;
  std::size_t k;  // 0: reconstruction at t_1; otherwise diffusion term k
  double weight;
};

RowMatrix as_rows(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.raw(), static_cast<Eigen::Index>(t.height() * t.width()),
                                     static_cast<Eigen::Index>(t.channels()));
}

// Weighted per-item terms; gradients of their sum go into grad.
std::vector<double> eval_items(const ScaleDenoiser& den, const DiffusionSetup& setup, std::size_t s,
                               const std::vector<const Tensor*>& z0, const std::vector<const Tensor*>& cond,
                               const std::vector<Item>& items, Rng& rng, Eigen::VectorXd* grad) {
  const auto& sched = setup.schedule;
  const Tensor& ref = *z0.front();
  const std::size_t H = ref.height(), W = ref.width(), C = ref.channels(), P = H * W, n = ref.size();
  const bool has_cond = !cond.empty() && cond.front() != nullptr;
  const std::size_t Cc = has_cond ? cond.front()->channels() : 0;
  const double dec_var = setup.decoder_variance();
  const double log_norm = 0.5 * double(n) * std::log(2.0 * std::numbers::pi * dec_var);
  if (grad && !den.differentiable()) throw StateError("gradient requested from a non-differentiable denoiser");

  std::vector<double> out(items.size(), 0.0);
  for (std::size_t c0 = 0; c0 < items.size(); c0 += kChunk) {
    const std::size_t B = std::min(kChunk, items.size() - c0);
    NetBatch nb;
    nb.batch = B;
    nb.height = H;
    nb.width = W;
    nb.x.resize(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(C));
    nb.gamma.resize(static_cast<Eigen::Index>(B));
    RowMatrix eps(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(C));
    RowMatrix x0(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(C));
    RowMatrix cm;
    if (has_cond) cm.resize(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(Cc));
    std::vector<double> alpha(B), sigma(B);
    for (std::size_t b = 0; b < B; ++b) {
      const Item& it = items[c0 + b];
      const double t = setup.t(it.k == 0 ? 1 : it.k + 1);
      const double g = sched.gamma(t);
      alpha[b] = std::sqrt(NoiseSchedule::alpha2_of(g));
      sigma[b] = std::sqrt(NoiseSchedule::sigma2_of(g));
      nb.gamma[static_cast<Eigen::Index>(b)] = g;
      const auto rows = static_cast<Eigen::Index>(b * P);
      x0.middleRows(rows, static_cast<Eigen::Index>(P)) = as_rows(*z0[it.image]);
      for (Eigen::Index r = rows; r < rows + static_cast<Eigen::Index>(P); ++r)
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(C); ++c) eps(r, c) = rng.normal();
      nb.x.middleRows(rows, static_cast<Eigen::Index>(P)) =
          alpha[b] * x0.middleRows(rows, static_cast<Eigen::Index>(P)) + sigma[b] * eps.middleRows(rows, static_cast<Eigen::Index>(P));
      if (has_cond) cm.middleRows(rows, static_cast<Eigen::Index>(P)) = as_rows(*cond[it.image]);
    }
    NetCache tape;
    const RowMatrix eh = den.predict(s, nb, has_cond ? &cm : nullptr, grad ? &tape : nullptr);
    RowMatrix up;
    if (grad) up.resize(eh.rows(), eh.cols());
    for (std::size_t b = 0; b < B; ++b) {
      const Item& it = items[c0 + b];
      const auto rows = static_cast<Eigen::Index>(b * P);
      const auto blk = [&](const RowMatrix& m) { return m.middleRows(rows, static_cast<Eigen::Index>(P)); };
      if (it.k == 0) {
        const RowMatrix xhat = (blk(nb.x) - sigma[b] * blk(eh)) / alpha[b];
        const RowMatrix diff = xhat - blk(x0);
        out[c0 + b] = it.weight * (log_norm + diff.squaredNorm() / (2.0 * dec_var));
        if (grad) up.middleRows(rows, static_cast<Eigen::Index>(P)) = -it.weight * (sigma[b] / alpha[b]) / dec_var * diff;
      } else {
        const double wk = setup.w(it.k);
        const RowMatrix r = blk(eps) - blk(eh);
        out[c0 + b] = it.weight * wk * r.squaredNorm();
        if (grad) up.middleRows(rows, static_cast<Eigen::Index>(P)) = -2.0 * it.weight * wk * r;
      }
    }
    if (grad) den.backprop(s, tape, up, *grad);
  }
  return out;
}

void check_scale_inputs(const DiffusionSetup& setup, const Tensor& z0, const Tensor* cond) {
  setup.validate();
  if (z0.rank() != 3) throw ShapeError("vlb_scale: z0 must be HxWxC");
  if (cond && (cond->height() != z0.height() || cond->width() != z0.width())) {
    throw ShapeError("vlb_scale: conditioning extent " + shape_string(cond->shape()) + " does not match " + shape_string(z0.shape()));
  }
}

}  // namespace

void NoiseSchedule::validate() const {
  if (!(gamma_max > gamma_min)) throw ConfigError("schedule needs gamma_max > gamma_min");
  if (!std::isfinite(gamma_max) || !std::isfinite(gamma_min)) throw ConfigError("schedule endpoints must be finite");
}

double DiffusionSetup::decoder_variance() const {
  if (decoder_var) return *decoder_var;
  return std::exp(-schedule.gamma(t(1)));
}

double DiffusionSetup::w(std::size_t k) const { return 0.5 * std::expm1(schedule.gamma(t(k)) - schedule.gamma(t(k + 1))); }

void DiffusionSetup::validate() const {
  schedule.validate();
  if (T < 1 || T > 4096) throw ConfigError("T must lie in [1, 4096], got " + std::to_string(T));
  if (decoder_var && !(*decoder_var > 0.0)) throw ConfigError("decoder variance must be positive");
}

Tensor diffuse(const NoiseSchedule& sched, const Tensor& z0, double t, const Tensor& eps) {
  z0.require_same_shape(eps, "diffuse");
  Tensor zt = z0;
  zt.data() = sched.alpha(t) * z0.data() + sched.sigma(t) * eps.data();
  return zt;
}

void ScaleDenoiser::backprop(std::size_t, const NetCache&, const RowMatrix&, Eigen::VectorXd&) const {
  throw StateError("this denoiser has no parameters to differentiate");
}

RowMatrix NetDenoiser::predict(std::size_t s, const NetBatch& zt, const RowMatrix* cond, NetCache* tape) const {
  const EpsNet& net = model_->nets.at(s - 1);
  if (!cond) return net.forward(zt, tape);
  NetBatch in;
  in.batch = zt.batch;
  in.height = zt.height;
  in.width = zt.width;
  in.gamma = zt.gamma;
  in.x.resize(zt.x.rows(), zt.x.cols() + cond->cols());
  in.x << zt.x, *cond;
  return net.forward(in, tape);
}

void NetDenoiser::backprop(std::size_t s, const NetCache& tape, const RowMatrix& upstream, Eigen::VectorXd& grad) const {
  model_->nets.at(s - 1).backward(tape, upstream, grad);
}

Tensor analytic_gaussian_eps(const Tensor& mean, const Tensor& var, const Tensor& zt, double alpha, double sigma) {
  mean.require_same_shape(zt, "analytic_gaussian_eps");
  var.require_same_shape(zt, "analytic_gaussian_eps");
  Tensor eps = zt;
  const double a2 = alpha * alpha, s2 = sigma * sigma;
  for (std::size_t i = 0; i < zt.size(); ++i) {
    const double post_mean = mean[i] + alpha * var[i] * (zt[i] - alpha * mean[i]) / (a2 * var[i] + s2);
    eps[i] = (zt[i] - alpha * post_mean) / sigma;
  }
  return eps;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covs)
    : means_(std::move(means)) {
  if (means_.size() != covs.size()) throw ShapeError("analytic denoiser: one mean per covariance required");
  for (std::size_t s = 0; s < covs.size(); ++s) {
    const auto& S = covs[s];
    if (S.rows() != S.cols() || S.rows() != means_[s].size()) throw ShapeError("analytic denoiser: covariance shape mismatch");
    const Eigen::MatrixXd off = S - Eigen::MatrixXd(S.diagonal().asDiagonal());
    const bool diag = off.cwiseAbs().maxCoeff() <= 1e-14;
    diagonal_.push_back(diag);
    if (diag) {
      eigvals_.push_back(S.diagonal());
      eigvecs_.emplace_back();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      eigvals_.push_back(es.eigenvalues().cwiseMax(0.0));
      eigvecs_.push_back(es.eigenvectors());
    }
  }
}

AnalyticGaussianDenoiser AnalyticGaussianDenoiser::for_standard_normal(const HierarchySpec& spec) {
  const Eigen::MatrixXd A = jacobian_matrix(spec);
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  Eigen::Index off = 0;
  for (std::size_t s = 1; s <= spec.levels; ++s) {
    const auto n = static_cast<Eigen::Index>(shape_size(spec.scale_shape(s)));
    const Eigen::MatrixXd As = A.middleRows(off, n);
    covs.push_back(As * As.transpose());
    means.push_back(Eigen::VectorXd::Zero(n));
    off += n;
  }
  return AnalyticGaussianDenoiser(std::move(means), std::move(covs));
}

RowMatrix AnalyticGaussianDenoiser::predict(std::size_t s, const NetBatch& zt, const RowMatrix*, NetCache*) const {
  const std::size_t idx = s - 1;
  if (idx >= means_.size()) throw ShapeError("analytic denoiser: scale out of range");
  const Eigen::VectorXd& mu = means_[idx];
  const Eigen::Index n = mu.size();
  const std::size_t P = zt.height * zt.width;
  if (static_cast<Eigen::Index>(P * static_cast<std::size_t>(zt.x.cols())) != n) throw ShapeError("analytic denoiser: latent size mismatch");
  RowMatrix out(zt.x.rows(), zt.x.cols());
  for (std::size_t b = 0; b < zt.batch; ++b) {
    const double g = zt.gamma[static_cast<Eigen::Index>(b)];
    const double a = std::sqrt(NoiseSchedule::alpha2_of(g)), sg = std::sqrt(NoiseSchedule::sigma2_of(g));
    Eigen::Map<const Eigen::VectorXd> z(zt.x.data() + b * static_cast<std::size_t>(n), n);
    Eigen::Map<Eigen::VectorXd> e(out.data() + b * static_cast<std::size_t>(n), n);
    const Eigen::VectorXd centered = z - a * mu;
    const Eigen::ArrayXd gain = a * eigvals_[idx].array() / (a * a * eigvals_[idx].array() + sg * sg);
    Eigen::VectorXd post;
    if (diagonal_[idx]) {
      post = mu.array() + gain * centered.array();
    } else {
      const Eigen::MatrixXd& Q = eigvecs_[idx];
      post = mu + Q * (gain * (Q.transpose() * centered).array()).matrix();
    }
    e = (z - a * post) / sg;
  }
  return out;
}

double bpd_from_nats(double nats, std::size_t dim) { return nats / (double(dim) * std::numbers::ln2) + 7.0; }

std::vector<std::size_t> antithetic_steps(double u, std::size_t n, std::size_t T) {
  std::vector<std::size_t> ks;
  if (T < 2) return ks;
  ks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = u + double(i) / double(n);
    v -= std::floor(v);
    const auto k = static_cast<std::size_t>(std::floor(v * double(T - 1))) + 1;
    ks.push_back(std::min(k, T - 1));
  }
  return ks;
}

double prior_kl(const NoiseSchedule& sched, const Tensor& z0) {
  const double g = sched.gamma(1.0), a2 = NoiseSchedule::alpha2_of(g);
  return 0.5 * (a2 * z0.data().squaredNorm() + double(z0.size()) * (softplus(g) - a2));
}

VlbTerms vlb_scale(const ScaleDenoiser& den, const DiffusionSetup& setup, std::size_t s, const Tensor& z0, const Tensor* cond,
                   Rng& rng, EvalMode mode, Eigen::VectorXd* grad, double grad_scale) {
  check_scale_inputs(setup, z0, cond);
  std::vector<Item> items{{0, 0, grad_scale}};
  const std::size_t T = setup.T;
  if (T >= 2) {
    if (mode.kind == EvalMode::Kind::FullSum) {
      for (std::size_t k = 1; k < T; ++k) items.push_back({0, k, grad_scale});
    } else {
      if (mode.n < 1) throw ConfigError("Monte Carlo mode needs N >= 1");
      const double wgt = grad_scale * double(T - 1) / double(mode.n);
      for (std::size_t k : antithetic_steps(rng.uniform(), mode.n, T)) items.push_back({0, k, wgt});
    }
  }
  const auto terms = eval_items(den, setup, s, {&z0}, {cond}, items, rng, grad);
  VlbTerms out;
  out.l0 = terms[0] / grad_scale;
  for (std::size_t i = 1; i < terms.size(); ++i) out.diffusion += terms[i];
  out.diffusion /= grad_scale;
  out.prior = prior_kl(setup.schedule, z0);
  return out;
}

VlbBreakdown cascaded_loss(const ScaleDenoiser& den, const DiffusionSetup& setup, const HierarchySpec& spec, const Tensor& x,
                           Rng& rng, EvalMode mode, std::vector<Eigen::VectorXd>* grads) {
  const MultiScaleRep rep = forward(spec.kind, x, spec.levels);
  if (rep.spec != spec) throw ShapeError("cascaded_loss: input does not match hierarchy spec");
  Rng base(rng.next_u64());
  VlbBreakdown out;
  out.dim = x.size();
  if (grads) {
    grads->resize(spec.levels);
    for (std::size_t s = 1; s <= spec.levels; ++s) (*grads)[s - 1] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(den.param_count(s)));
  }
  for (std::size_t s = 1; s <= spec.levels; ++s) {
    Tensor cond;
    if (s >= 2) cond = cond_input(spec, rep.scales, s);
    Rng r = base.child(s);
    const VlbTerms t = vlb_scale(den, setup, s, rep.scale(s), s >= 2 ? &cond : nullptr, r, mode, grads ? &(*grads)[s - 1] : nullptr);
    out.per_scale.push_back(t);
    out.l0 += t.l0;
    out.lk_sum += t.diffusion;
    out.lt += t.prior;
  }
  out.bpd = bpd_from_nats(out.total_nats(), out.dim);
  return out;
}

VlbBreakdown cascaded_loss(const CascadedModel& model, const Tensor& x, Rng& rng, EvalMode mode,
                           std::vector<Eigen::VectorXd>* grads) {
  NetDenoiser den(model);
  return cascaded_loss(den, model.setup, model.spec, x, rng, mode, grads);
}

VlbBreakdown cvdm_loss(const CascadedModel& model, const Tensor& x, Rng& rng, EvalMode mode) {
  if (model.spec.kind != HierarchyKind::NearestNeighbor) throw ConfigError("cvdm_loss needs a nearest-neighbor model");
  return cascaded_loss(model, x, rng, mode);
}

PosteriorCoeffs posterior_coeffs(const NoiseSchedule& sched, double s, double t) {
  const double gs = sched.gamma(s), gt = sched.gamma(t);
  const double a2s = NoiseSchedule::alpha2_of(gs), a2t = NoiseSchedule::alpha2_of(gt);
  const double s2s = NoiseSchedule::sigma2_of(gs), s2t = NoiseSchedule::sigma2_of(gt);
  const double s2ts = s2t * -std::expm1(gt - gs);
  const double ats = std::sqrt(a2t / a2s);
  return {ats * s2s / s2t, std::sqrt(a2s) * s2ts / s2t, s2ts * s2s / s2t};
}

std::vector<Tensor> sample_continuous(const ScaleDenoiser& den, const DiffusionSetup& setup, const HierarchySpec& spec,
                                      std::size_t n, Rng& rng) {
  setup.validate();
  spec.validate();
  const auto& sched = setup.schedule;
  std::vector<std::vector<Tensor>> scales(n);
  for (std::size_t s = 1; s <= spec.levels; ++s) {
    const Shape shape = spec.scale_shape(s);
    const std::size_t H = shape[0], W = shape[1], C = shape[2], P = H * W;
    std::vector<Tensor> conds;
    if (s >= 2)
      for (std::size_t i = 0; i < n; ++i) conds.push_back(cond_input(spec, scales[i], s));
    std::vector<Tensor> z0(n);
    for (std::size_t c0 = 0; c0 < n; c0 += kChunk) {
      const std::size_t B = std::min(kChunk, n - c0);
      NetBatch nb;
      nb.batch = B;
      nb.height = H;
      nb.width = W;
      nb.x.resize(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(C));
      for (Eigen::Index i = 0; i < nb.x.size(); ++i) nb.x.data()[i] = rng.normal();
      RowMatrix cm;
      if (s >= 2) {
        cm.resize(static_cast<Eigen::Index>(B * P), static_cast<Eigen::Index>(conds[0].channels()));
        for (std::size_t b = 0; b < B; ++b) cm.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P)) = as_rows(conds[c0 + b]);
      }
      RowMatrix xhat;
      for (std::size_t k = setup.T; k >= 1; --k) {
        const double t = setup.t(k), g = sched.gamma(t);
        nb.gamma = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(B), g);
        const RowMatrix eh = den.predict(s, nb, s >= 2 ? &cm : nullptr);
        xhat = (nb.x - std::sqrt(NoiseSchedule::sigma2_of(g)) * eh) / std::sqrt(NoiseSchedule::alpha2_of(g));
        if (k == 1) break;
        const PosteriorCoeffs pc = posterior_coeffs(sched, setup.t(k - 1), t);
        const double sd = std::sqrt(pc.var);
        RowMatrix next = pc.coef_z * nb.x + pc.coef_x * xhat;
        for (Eigen::Index i = 0; i < next.size(); ++i) next.data()[i] += sd * rng.normal();
        nb.x = std::move(next);
      }
      for (std::size_t b = 0; b < B; ++b) {
        Tensor z = Tensor::image(H, W, C);
        Eigen::Map<RowMatrix>(z.raw(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(C)) =
            xhat.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P));
        z0[c0 + b] = std::move(z);
      }
    }
    for (std::size_t i = 0; i < n; ++i) scales[i].push_back(std::move(z0[i]));
  }
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MultiScaleRep rep;
    rep.spec = spec;
    rep.scales = std::move(scales[i]);
    out.push_back(inverse(rep));
  }
  return out;
}

ImageU8 to_image(const Tensor& x) {
  Tensor y = x;
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::isfinite(y[i]) ? std::clamp(y[i], -1.0, hi) : 0.0;
  return quantize(y);
}

ImageU8 sample(const CascadedModel& model, Rng& rng) {
  NetDenoiser den(model);
  return to_image(sample_continuous(den, model.setup, model.spec, 1, rng).front());
}

double standard_normal_nll(const Tensor& x) {
  return 0.5 * x.data().squaredNorm() + 0.5 * double(x.size()) * std::log(2.0 * std::numbers::pi);
}

double gaussian_vlb_per_dim(const DiffusionSetup& setup, double var) {
  setup.validate();
  if (!(var > 0.0)) throw RangeError("data variance must be positive");
  const auto& sc = setup.schedule;
  // Residual variance of the optimal eps prediction at log-SNR g.
  auto eps_mmse = [var](double g) {
    const double a2 = NoiseSchedule::alpha2_of(g), s2 = NoiseSchedule::sigma2_of(g);
    return a2 * var / (a2 * var + s2);
  };
  const double g1 = sc.gamma(setup.t(1));
  const double s0 = setup.decoder_variance();
  const double a1 = NoiseSchedule::alpha2_of(g1), q1 = NoiseSchedule::sigma2_of(g1);
  double total = 0.5 * std::log(2.0 * std::numbers::pi * s0) + q1 * var / (a1 * var + q1) / (2.0 * s0);
  for (std::size_t k = 1; k < setup.T; ++k) total += setup.w(k) * eps_mmse(sc.gamma(setup.t(k + 1)));
  const double gT = sc.gamma(1.0);
  const double aT = NoiseSchedule::alpha2_of(gT), sT = NoiseSchedule::sigma2_of(gT);
  total += 0.5 * (aT * var + sT - 1.0 - std::log(sT));
  return total;
}

// ---------------------------------------------------------------------------

CascadedModel CascadedModel::create(const HierarchySpec& spec, const DiffusionSetup& setup, const std::vector<std::size_t>& widths,
                                    Rng& rng, bool random_final) {
  spec.validate();
  setup.validate();
  CascadedModel m;
  m.spec = spec;
  m.setup = setup;
  for (std::size_t s = 1; s <= spec.levels; ++s) {
    const std::size_t c = spec.scale_shape(s)[2];
    Rng r = rng.child(s);
    m.nets.emplace_back(NetSpec{c + spec.cond_channels(s), c, widths, 64}, r, random_final);
  }
  return m;
}

void CascadedModel::validate() const {
  spec.validate();
  setup.validate();
  if (nets.size() != spec.levels) throw ShapeError("model has " + std::to_string(nets.size()) + " nets for " + std::to_string(spec.levels) + " scales");
  for (std::size_t s = 1; s <= spec.levels; ++s) {
    const std::size_t c = spec.scale_shape(s)[2];
    const auto& ns = nets[s - 1].spec();
    if (ns.in_channels != c + spec.cond_channels(s) || ns.out_channels != c) {
      throw ShapeError("net for scale " + std::to_string(s) + " has channels " + ns.describe() + ", expected in=" +
                       std::to_string(c + spec.cond_channels(s)) + " out=" + std::to_string(c));
    }
  }
}

void CascadedModel::save(std::ostream& os) const {
  validate();
  std::ostringstream hdr;
  hdr << std::setprecision(17) << "PCDMMODEL kind=" << to_string(spec.kind) << " S=" << spec.levels << " shape=" << spec.height
      << 'x' << spec.width << 'x' << spec.channels << " T=" << setup.T << " gamma_min=" << setup.schedule.gamma_min
      << " gamma_max=" << setup.schedule.gamma_max << " decoder_var=";
  if (setup.decoder_var) {
    hdr << *setup.decoder_var;
  } else {
    hdr << "default";
  }
  os << hdr.str() << '\n';
  for (const auto& n : nets) n.save(os);
  if (!os) throw IoError("model write failed");
}

CascadedModel CascadedModel::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw TruncationError("missing model header");
  std::istringstream hs(line);
  std::string tok;
  hs >> tok;
  if (tok != "PCDMMODEL") throw FormatError("model header magic mismatch");
  CascadedModel m;
  try {
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("bad token");
      const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "kind") {
        m.spec.kind = parse_hierarchy_kind(v);
      } else if (k == "S") {
        m.spec.levels = std::stoul(v);
      } else if (k == "shape") {
        std::string d = v;
        std::replace(d.begin(), d.end(), 'x', ' ');
        std::istringstream ds(d);
        if (!(ds >> m.spec.height >> m.spec.width >> m.spec.channels)) throw FormatError("bad shape");
      } else if (k == "T") {
        m.setup.T = std::stoul(v);
      } else if (k == "gamma_min") {
        m.setup.schedule.gamma_min = std::stod(v);
      } else if (k == "gamma_max") {
        m.setup.schedule.gamma_max = std::stod(v);
      } else if (k == "decoder_var") {
        if (v != "default") m.setup.decoder_var = std::stod(v);
      } else {
        throw FormatError("unknown key");
      }
    }
  } catch (const std::exception& e) {
    throw FormatError("malformed model header '" + line + "': " + e.what());
  }
  for (std::size_t s = 1; s <= m.spec.levels; ++s) m.nets.push_back(EpsNet::load(is));
  m.validate();
  return m;
}

void CascadedModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save(os);
}

CascadedModel CascadedModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return load(is);
}

std::uint64_t CascadedModel::hash() const {
  std::ostringstream os;
  save(os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

void write_train_header(std::ostream& os, std::size_t levels) {
  os << "step,loss_nats,bpd_estimate";
  for (std::size_t s = 1; s <= levels; ++s) os << ",scale" << s << "_nats";
  os << '\n';
}

void write_train_row(std::ostream& os, const TrainRow& row) {
  os << row.step << ',' << std::setprecision(10) << row.loss_nats << ',' << row.bpd;
  for (double v : row.per_scale) os << ',' << v;
  os << '\n';
}

std::vector<TrainRow> train(CascadedModel& model, const std::vector<ImageU8>& data, const TrainConfig& cfg, Rng& rng,
                            std::ostream* csv) {
  model.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  const std::size_t S = model.spec.levels, T = model.setup.T, B = cfg.batch;
  NetDenoiser den(model);
  std::vector<AdamW> opts(S);
  for (auto& o : opts) {
    o.lr = cfg.lr;
    o.weight_decay = cfg.weight_decay;
  }
  if (csv) write_train_header(*csv, S);

  std::vector<TrainRow> rows;
  std::vector<double> acc(S, 0.0);
  double acc_total = 0.0;
  std::size_t acc_n = 0;
  const std::size_t dim = model.spec.input_dim();

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<MultiScaleRep> reps;
    reps.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      const ImageU8& img = data[rng.below(data.size())];
      reps.push_back(forward(model.spec.kind, dequantize(img, rng), S));
    }
    double step_total = 0.0;
    for (std::size_t s = 1; s <= S; ++s) {
      std::vector<Tensor> conds;
      std::vector<const Tensor*> z0p, cp;
      for (std::size_t b = 0; b < B; ++b) {
        z0p.push_back(&reps[b].scale(s));
        if (s >= 2) conds.push_back(cond_input(model.spec, reps[b].scales, s));
      }
      for (auto& c : conds) cp.push_back(&c);
      std::vector<Item> items;
      for (std::size_t b = 0; b < B; ++b) items.push_back({b, 0, 1.0 / double(B)});
      if (T >= 2) {
        const auto ks = antithetic_steps(rng.uniform(), B, T);
        for (std::size_t b = 0; b < B; ++b) items.push_back({b, ks[b], double(T - 1) / double(B)});
      }
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(den.param_count(s)));
      const auto terms = eval_items(den, model.setup, s, z0p, cp, items, rng, &grad);
      double scale_nats = 0.0;
      for (double v : terms) scale_nats += v;
      for (std::size_t b = 0; b < B; ++b) scale_nats += prior_kl(model.setup.schedule, reps[b].scale(s)) / double(B);
      opts[s - 1].step(model.nets[s - 1].params(), grad);
      acc[s - 1] += scale_nats;
      step_total += scale_nats;
    }
    acc_total += step_total;
    ++acc_n;
    if (step % cfg.log_every == 0 || step == cfg.steps) {
      TrainRow row{step, acc_total / double(acc_n), bpd_from_nats(acc_total / double(acc_n), dim), {}};
      for (std::size_t s = 0; s < S; ++s) row.per_scale.push_back(acc[s] / double(acc_n));
      if (csv) write_train_row(*csv, row);
      rows.push_back(std::move(row));
      std::fill(acc.begin(), acc.end(), 0.0);
      acc_total = 0.0;
      acc_n = 0;
    }
  }
  return rows;
}

}  // namespace pcdm
