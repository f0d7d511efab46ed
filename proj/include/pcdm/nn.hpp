#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcdm/rng.hpp"
#include "pcdm/tensor.hpp"

namespace pcdm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NetSpec {
  std::size_t in_channels = 1;   // scale channels + conditioning channels
  std::size_t out_channels = 1;
  std::vector<std::size_t> widths{32, 32};
  std::size_t emb_dim = 64;

  std::size_t param_count() const;
  std::string describe() const;
  static NetSpec parse(const std::string& text);
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// A batch of images stacked as (B*H*W) x C rows, plus one log-SNR per image.
struct NetBatch {
  std::size_t batch = 0, height = 0, width = 0;
  RowMatrix x;
  Eigen::VectorXd gamma;
};

/// Activations kept for the backward pass.
struct NetCache {
  std::size_t batch = 0, height = 0, width = 0;
  std::vector<RowMatrix> cols;  // im2col of each layer input
  std::vector<RowMatrix> pre;   // pre-activation of each hidden layer
  RowMatrix emb;                // B x emb_dim
  bool valid = false;
};

/// 64-dim sinusoidal features of gamma, frequencies from 1 down to 1e-3.
Eigen::VectorXd gamma_embedding(double gamma, std::size_t dim);

/// Same-padded 3x3 patches: (B*H*W) x (9*C), tap-major then channel.
RowMatrix im2col3x3(const RowMatrix& x, std::size_t B, std::size_t H, std::size_t W);
RowMatrix col2im3x3(const RowMatrix& cols, std::size_t B, std::size_t H, std::size_t W, std::size_t C);

/// Per-scale epsilon predictor: 3x3 convs with SiLU and a learned affine
/// map of the gamma embedding added as a per-channel bias in every hidden
/// layer; the last conv is linear.
class EpsNet {
 public:
  EpsNet() = default;
  /// Kaiming-uniform kernels; the last layer is zero unless random_final.
  EpsNet(NetSpec spec, Rng& rng, bool random_final = false);

  const NetSpec& spec() const { return spec_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  RowMatrix forward(const NetBatch& in, NetCache* cache = nullptr) const;

  /// Reverse-mode pass. Accumulates into grad_params (resized if empty);
  /// writes d(loss)/d(input) when grad_input is given.
  void backward(const NetCache& cache, const RowMatrix& grad_out, Eigen::VectorXd& grad_params,
                RowMatrix* grad_input = nullptr) const;

  /// Single-image convenience: input is concat(z, cond) along channels.
  Tensor forward(const Tensor& z, double gamma, const Tensor* cond = nullptr) const;

  void save(std::ostream& os) const;
  static EpsNet load(std::istream& is);

 private:
  struct Offsets {
    std::size_t kernel, bias, emb_w, emb_b;
    std::size_t cin, cout;
    bool hidden;
  };
  std::vector<Offsets> layout() const;

  NetSpec spec_;
  Eigen::VectorXd params_;
};

struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t t = 0;
  Eigen::VectorXd m, v;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void save(std::ostream& os) const;
  void load(std::istream& is);
};

/// Stacks single images (HxWxC tensors of equal shape) into a batch.
NetBatch make_batch(const std::vector<Tensor>& inputs, const Eigen::VectorXd& gamma);
/// Splits a (B*H*W) x C output back into images.
std::vector<Tensor> split_batch(const RowMatrix& out, std::size_t B, std::size_t H, std::size_t W);

}  // namespace pcdm
