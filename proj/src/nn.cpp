#include "pcdm/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "pcdm/error.hpp"
#include "pcdm/io.hpp"

namespace pcdm {

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

using MapMat = Eigen::Map<RowMatrix>;
using ConstMapMat = Eigen::Map<const RowMatrix>;

}  // namespace

std::size_t NetSpec::param_count() const {
  std::size_t n = 0, cin = in_channels;
  for (std::size_t w : widths) {
    n += 9 * cin * w + w + emb_dim * w + w;
    cin = w;
  }
  return n + 9 * cin * out_channels + out_channels;
}

std::string NetSpec::describe() const {
  std::ostringstream os;
  os << "in=" << in_channels << " out=" << out_channels << " emb=" << emb_dim << " widths=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  return os.str();
}

NetSpec NetSpec::parse(const std::string& text) {
  NetSpec s;
  s.widths.clear();
  std::istringstream is(text);
  std::string tok;
  bool have_in = false, have_out = false;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("bad net spec token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    try {
      if (key == "in") {
        s.in_channels = std::stoul(val);
        have_in = true;
      } else if (key == "out") {
        s.out_channels = std::stoul(val);
        have_out = true;
      } else if (key == "emb") {
        s.emb_dim = std::stoul(val);
      } else if (key == "widths") {
        std::stringstream ws(val);
        std::string w;
        while (std::getline(ws, w, ','))
          if (!w.empty()) s.widths.push_back(std::stoul(w));
      } else {
        throw FormatError("unknown net spec key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError("bad net spec value in '" + tok + "'");
    }
  }
  if (!have_in || !have_out) throw FormatError("net spec lacks in/out");
  return s;
}

Eigen::VectorXd gamma_embedding(double gamma, std::size_t dim) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double f = half > 1 ? std::pow(1e-3, double(k) / double(half - 1)) : 1.0;
    e[static_cast<Eigen::Index>(k)] = std::sin(gamma * f);
    e[static_cast<Eigen::Index>(half + k)] = std::cos(gamma * f);
  }
  if (dim % 2) e[static_cast<Eigen::Index>(dim - 1)] = 0.0;
  return e;
}

RowMatrix im2col3x3(const RowMatrix& x, std::size_t B, std::size_t H, std::size_t W) {
  const std::size_t C = static_cast<std::size_t>(x.cols());
  RowMatrix cols = RowMatrix::Zero(x.rows(), static_cast<Eigen::Index>(9 * C));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const auto row = static_cast<Eigen::Index>((b * H + i) * W + j);
        for (int di = -1; di <= 1; ++di) {
          const long ii = long(i) + di;
          if (ii < 0 || ii >= long(H)) continue;
          for (int dj = -1; dj <= 1; ++dj) {
            const long jj = long(j) + dj;
            if (jj < 0 || jj >= long(W)) continue;
            const auto tap = static_cast<Eigen::Index>((di + 1) * 3 + (dj + 1));
            const auto src = static_cast<Eigen::Index>((b * H + ii) * W + jj);
            cols.row(row).segment(tap * C, C) = x.row(src);
          }
        }
      }
  return cols;
}

RowMatrix col2im3x3(const RowMatrix& cols, std::size_t B, std::size_t H, std::size_t W, std::size_t C) {
  RowMatrix x = RowMatrix::Zero(cols.rows(), static_cast<Eigen::Index>(C));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const auto row = static_cast<Eigen::Index>((b * H + i) * W + j);
        for (int di = -1; di <= 1; ++di) {
          const long ii = long(i) + di;
          if (ii < 0 || ii >= long(H)) continue;
          for (int dj = -1; dj <= 1; ++dj) {
            const long jj = long(j) + dj;
            if (jj < 0 || jj >= long(W)) continue;
            const auto tap = static_cast<Eigen::Index>((di + 1) * 3 + (dj + 1));
            const auto dst = static_cast<Eigen::Index>((b * H + ii) * W + jj);
            x.row(dst) += cols.row(row).segment(tap * C, C);
          }
        }
      }
  return x;
}

std::vector<EpsNet::Offsets> EpsNet::layout() const {
  std::vector<Offsets> out;
  std::size_t off = 0, cin = spec_.in_channels;
  for (std::size_t w : spec_.widths) {
    Offsets o{off, off + 9 * cin * w, 0, 0, cin, w, true};
    o.emb_w = o.bias + w;
    o.emb_b = o.emb_w + spec_.emb_dim * w;
    off = o.emb_b + w;
    out.push_back(o);
    cin = w;
  }
  Offsets last{off, off + 9 * cin * spec_.out_channels, 0, 0, cin, spec_.out_channels, false};
  out.push_back(last);
  return out;
}

EpsNet::EpsNet(NetSpec spec, Rng& rng, bool random_final) : spec_(std::move(spec)) {
  if (spec_.in_channels == 0 || spec_.out_channels == 0 || spec_.emb_dim == 0) throw ShapeError("net spec has a zero dimension");
  for (auto w : spec_.widths)
    if (w == 0) throw ShapeError("net spec has a zero-width layer");
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec_.param_count()));
  for (const auto& o : layout()) {
    if (!o.hidden && !random_final) continue;
    const double fan_in = 9.0 * double(o.cin);
    const double bound = std::sqrt(6.0 / fan_in) * (o.hidden ? 1.0 : 0.1);
    for (std::size_t k = 0; k < 9 * o.cin * o.cout; ++k) params_[static_cast<Eigen::Index>(o.kernel + k)] = bound * (2.0 * rng.uniform() - 1.0);
    if (o.hidden) {
      const double eb = 1.0 / std::sqrt(double(spec_.emb_dim));
      for (std::size_t k = 0; k < spec_.emb_dim * o.cout; ++k) params_[static_cast<Eigen::Index>(o.emb_w + k)] = eb * (2.0 * rng.uniform() - 1.0);
    } else {
      for (std::size_t k = 0; k < o.cout; ++k) params_[static_cast<Eigen::Index>(o.bias + k)] = 0.01 * (2.0 * rng.uniform() - 1.0);
    }
  }
}

RowMatrix EpsNet::forward(const NetBatch& in, NetCache* cache) const {
  const std::size_t B = in.batch, H = in.height, W = in.width;
  if (static_cast<std::size_t>(in.x.rows()) != B * H * W || static_cast<std::size_t>(in.x.cols()) != spec_.in_channels) {
    throw ShapeError("EpsNet::forward: input is " + std::to_string(in.x.rows()) + "x" + std::to_string(in.x.cols()) +
                     ", expected " + std::to_string(B * H * W) + "x" + std::to_string(spec_.in_channels));
  }
  if (static_cast<std::size_t>(in.gamma.size()) != B) throw ShapeError("EpsNet::forward: one gamma per image required");
  const std::size_t P = H * W;
  RowMatrix emb(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(spec_.emb_dim));
  for (std::size_t b = 0; b < B; ++b) emb.row(static_cast<Eigen::Index>(b)) = gamma_embedding(in.gamma[static_cast<Eigen::Index>(b)], spec_.emb_dim).transpose();
  if (cache) {
    cache->batch = B;
    cache->height = H;
    cache->width = W;
    cache->cols.clear();
    cache->pre.clear();
    cache->emb = emb;
    cache->valid = true;
  }
  RowMatrix h = in.x;
  for (const auto& o : layout()) {
    RowMatrix cols = im2col3x3(h, B, H, W);
    ConstMapMat K(params_.data() + o.kernel, static_cast<Eigen::Index>(9 * o.cin), static_cast<Eigen::Index>(o.cout));
    Eigen::Map<const Eigen::RowVectorXd> bias(params_.data() + o.bias, static_cast<Eigen::Index>(o.cout));
    RowMatrix a = cols * K;
    a.rowwise() += bias;
    if (o.hidden) {
      ConstMapMat E(params_.data() + o.emb_w, static_cast<Eigen::Index>(spec_.emb_dim), static_cast<Eigen::Index>(o.cout));
      Eigen::Map<const Eigen::RowVectorXd> e(params_.data() + o.emb_b, static_cast<Eigen::Index>(o.cout));
      RowMatrix tau = emb * E;
      tau.rowwise() += e;
      for (std::size_t b = 0; b < B; ++b) a.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P)).rowwise() += tau.row(static_cast<Eigen::Index>(b));
    }
    if (cache) cache->cols.push_back(std::move(cols));
    if (o.hidden) {
      RowMatrix act = a.unaryExpr([](double v) { return v * sigmoid(v); });
      if (cache) cache->pre.push_back(std::move(a));
      h = std::move(act);
    } else {
      h = std::move(a);
    }
  }
  return h;
}

void EpsNet::backward(const NetCache& cache, const RowMatrix& grad_out, Eigen::VectorXd& grad_params,
                      RowMatrix* grad_input) const {
  if (!cache.valid) throw StateError("EpsNet::backward called before forward");
  const std::size_t B = cache.batch, H = cache.height, W = cache.width, P = H * W;
  if (static_cast<std::size_t>(grad_out.rows()) != B * P || static_cast<std::size_t>(grad_out.cols()) != spec_.out_channels) {
    throw ShapeError("EpsNet::backward: upstream gradient has wrong shape");
  }
  if (grad_params.size() == 0) grad_params = Eigen::VectorXd::Zero(params_.size());
  if (grad_params.size() != params_.size()) throw ShapeError("EpsNet::backward: gradient buffer has wrong size");
  const auto lay = layout();
  RowMatrix g = grad_out;  // gradient w.r.t. the current layer's output (pre-activation for the last)
  for (std::size_t l = lay.size(); l-- > 0;) {
    const auto& o = lay[l];
    if (o.hidden) {
      const RowMatrix& a = cache.pre[l];
      g = g.binaryExpr(a, [](double gv, double av) {
        const double s = sigmoid(av);
        return gv * s * (1.0 + av * (1.0 - s));
      });
      RowMatrix dtau(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(o.cout));
      for (std::size_t b = 0; b < B; ++b) dtau.row(static_cast<Eigen::Index>(b)) = g.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P)).colwise().sum();
      MapMat dE(grad_params.data() + o.emb_w, static_cast<Eigen::Index>(spec_.emb_dim), static_cast<Eigen::Index>(o.cout));
      dE.noalias() += cache.emb.transpose() * dtau;
      Eigen::Map<Eigen::RowVectorXd>(grad_params.data() + o.emb_b, static_cast<Eigen::Index>(o.cout)) += dtau.colwise().sum();
    }
    MapMat dK(grad_params.data() + o.kernel, static_cast<Eigen::Index>(9 * o.cin), static_cast<Eigen::Index>(o.cout));
    dK.noalias() += cache.cols[l].transpose() * g;
    Eigen::Map<Eigen::RowVectorXd>(grad_params.data() + o.bias, static_cast<Eigen::Index>(o.cout)) += g.colwise().sum();
    if (l == 0 && !grad_input) break;
    ConstMapMat K(params_.data() + o.kernel, static_cast<Eigen::Index>(9 * o.cin), static_cast<Eigen::Index>(o.cout));
    RowMatrix dcols = g * K.transpose();
    g = col2im3x3(dcols, B, H, W, o.cin);
  }
  if (grad_input) *grad_input = std::move(g);
}

Tensor EpsNet::forward(const Tensor& z, double gamma, const Tensor* cond) const {
  const Tensor input = cond ? concat_channels(z, *cond) : z;
  NetBatch nb = make_batch({input}, Eigen::VectorXd::Constant(1, gamma));
  RowMatrix out = forward(nb);
  return split_batch(out, 1, z.height(), z.width()).front();
}

void EpsNet::save(std::ostream& os) const {
  os << "PCDMNET " << spec_.describe() << '\n';
  le::put_u64(os, static_cast<std::uint64_t>(params_.size()));
  for (Eigen::Index i = 0; i < params_.size(); ++i) le::put_f64(os, params_[i]);
}

EpsNet EpsNet::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw TruncationError("missing network header");
  if (line.rfind("PCDMNET ", 0) != 0) throw FormatError("network header magic mismatch");
  EpsNet net;
  net.spec_ = NetSpec::parse(line.substr(8));
  const std::uint64_t n = le::get_u64(is);
  if (n != net.spec_.param_count()) throw FormatError("network parameter count does not match its spec");
  net.params_.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) net.params_[static_cast<Eigen::Index>(i)] = le::get_f64(is);
  return net;
}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size()) throw ShapeError("AdamW::step: gradient size mismatch");
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  if (weight_decay != 0.0) params *= (1.0 - lr * weight_decay);
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

void AdamW::save(std::ostream& os) const {
  le::put_u64(os, t);
  le::put_u64(os, static_cast<std::uint64_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) le::put_f64(os, m[i]);
  for (Eigen::Index i = 0; i < v.size(); ++i) le::put_f64(os, v[i]);
}

void AdamW::load(std::istream& is) {
  t = le::get_u64(is);
  const auto n = static_cast<Eigen::Index>(le::get_u64(is));
  m.resize(n);
  v.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = le::get_f64(is);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = le::get_f64(is);
}

NetBatch make_batch(const std::vector<Tensor>& inputs, const Eigen::VectorXd& gamma) {
  if (inputs.empty()) throw ShapeError("make_batch: empty batch");
  NetBatch nb;
  nb.batch = inputs.size();
  nb.height = inputs[0].height();
  nb.width = inputs[0].width();
  const std::size_t C = inputs[0].channels(), P = nb.height * nb.width;
  nb.x.resize(static_cast<Eigen::Index>(nb.batch * P), static_cast<Eigen::Index>(C));
  for (std::size_t b = 0; b < nb.batch; ++b) {
    if (inputs[b].shape() != inputs[0].shape()) throw ShapeError("make_batch: images differ in shape");
    nb.x.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P)) =
        ConstMapMat(inputs[b].raw(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(C));
  }
  nb.gamma = gamma;
  return nb;
}

std::vector<Tensor> split_batch(const RowMatrix& out, std::size_t B, std::size_t H, std::size_t W) {
  const std::size_t P = H * W, C = static_cast<std::size_t>(out.cols());
  std::vector<Tensor> res;
  res.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    Tensor t = Tensor::image(H, W, C);
    MapMat(t.raw(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(C)) = out.middleRows(static_cast<Eigen::Index>(b * P), static_cast<Eigen::Index>(P));
    res.push_back(std::move(t));
  }
  return res;
}

}  // namespace pcdm
