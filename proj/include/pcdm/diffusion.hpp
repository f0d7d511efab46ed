#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pcdm/hvp.hpp"
#include "pcdm/image.hpp"
#include "pcdm/nn.hpp"
#include "pcdm/rng.hpp"
#include "pcdm/tensor.hpp"

namespace pcdm {

/// Linear log-SNR schedule: gamma(t) = gmax + (gmin - gmax) t,
/// alpha^2 = sigmoid(gamma), sigma^2 = sigmoid(-gamma).
struct NoiseSchedule {
  double gamma_min = -13.3;
  double gamma_max = 5.0;

  double gamma(double t) const { return gamma_max + (gamma_min - gamma_max) * t; }
  static double alpha2_of(double g) { return 1.0 / (1.0 + std::exp(-g)); }
  static double sigma2_of(double g) { return 1.0 / (1.0 + std::exp(g)); }
  double alpha2(double t) const { return alpha2_of(gamma(t)); }
  double sigma2(double t) const { return sigma2_of(gamma(t)); }
  double alpha(double t) const { return std::sqrt(alpha2(t)); }
  double sigma(double t) const { return std::sqrt(sigma2(t)); }
  void validate() const;
};

/// Everything about the discrete chain except the denoiser.
struct DiffusionSetup {
  NoiseSchedule schedule;
  std::size_t T = 1000;
  std::optional<double> decoder_var;  // defaults to exp(-gamma(1/T))

  double t(std::size_t k) const { return double(k) / double(T); }
  double decoder_variance() const;
  /// Weight of the k-th diffusion term (1 <= k <= T-1): KL = w_k ||eps - eps_hat||^2.
  double w(std::size_t k) const;
  void validate() const;
};

/// z_t = alpha(t) z0 + sigma(t) eps.
Tensor diffuse(const NoiseSchedule& sched, const Tensor& z0, double t, const Tensor& eps);

/// Predicts epsilon for a batch of noisy latents at one scale. Rows of zt
/// are (B*H*W) pixels; cond (if any) has the same row layout.
class ScaleDenoiser {
 public:
  virtual ~ScaleDenoiser() = default;
  virtual RowMatrix predict(std::size_t s, const NetBatch& zt, const RowMatrix* cond, NetCache* tape = nullptr) const = 0;
  virtual bool differentiable() const { return false; }
  virtual void backprop(std::size_t s, const NetCache& tape, const RowMatrix& upstream, Eigen::VectorXd& grad) const;
  virtual std::size_t param_count(std::size_t /*s*/) const { return 0; }
};

/// Hierarchy + schedule + one EpsNet per scale.
struct CascadedModel {
  HierarchySpec spec;
  DiffusionSetup setup;
  std::vector<EpsNet> nets;  // nets[s-1]

  static CascadedModel create(const HierarchySpec& spec, const DiffusionSetup& setup, const std::vector<std::size_t>& widths,
                              Rng& rng, bool random_final = false);
  void validate() const;
  void save(std::ostream& os) const;
  static CascadedModel load(std::istream& is);
  void save(const std::string& path) const;
  static CascadedModel load(const std::string& path);
  /// FNV-1a of the serialized model.
  std::uint64_t hash() const;
};

class NetDenoiser : public ScaleDenoiser {
 public:
  explicit NetDenoiser(const CascadedModel& model) : model_(&model) {}
  RowMatrix predict(std::size_t s, const NetBatch& zt, const RowMatrix* cond, NetCache* tape = nullptr) const override;
  bool differentiable() const override { return true; }
  void backprop(std::size_t s, const NetCache& tape, const RowMatrix& upstream, Eigen::VectorXd& grad) const override;
  std::size_t param_count(std::size_t s) const override { return model_->nets.at(s - 1).spec().param_count(); }

 private:
  const CascadedModel* model_;
};

/// Bayes-optimal epsilon for element-wise data N(mean, var):
/// E[z0|zt] = mean + alpha var (zt - alpha mean)/(alpha^2 var + sigma^2).
Tensor analytic_gaussian_eps(const Tensor& mean, const Tensor& var, const Tensor& zt, double alpha, double sigma);

/// Optimal denoiser when each scale is Gaussian N(mu_s, Sigma_s) and
/// independent of the coarser scales (conditioning is ignored).
class AnalyticGaussianDenoiser : public ScaleDenoiser {
 public:
  AnalyticGaussianDenoiser(std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covs);
  /// Standard normal data pushed through an orthonormal or tight-frame map.
  static AnalyticGaussianDenoiser for_standard_normal(const HierarchySpec& spec);
  RowMatrix predict(std::size_t s, const NetBatch& zt, const RowMatrix* cond, NetCache* tape = nullptr) const override;

 private:
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> eigvecs_;
  std::vector<Eigen::VectorXd> eigvals_;
  std::vector<bool> diagonal_;
};

struct VlbTerms {
  double l0 = 0.0;         // reconstruction, nats (may be negative: Gaussian density)
  double diffusion = 0.0;  // sum of the T-1 diffusion KLs, nats
  double prior = 0.0;      // KL(q(z_T|z0) || N(0, I)), nats
  double total() const { return l0 + diffusion + prior; }
  VlbTerms& operator+=(const VlbTerms& o) {
    l0 += o.l0;
    diffusion += o.diffusion;
    prior += o.prior;
    return *this;
  }
};

struct VlbBreakdown {
  double l0 = 0.0, lk_sum = 0.0, lt = 0.0;
  std::vector<VlbTerms> per_scale;
  std::size_t dim = 0;  // dim(x)
  double bpd = 0.0;
  double total_nats() const { return l0 + lk_sum + lt; }
};

struct EvalMode {
  enum class Kind { FullSum, MonteCarlo } kind = Kind::FullSum;
  std::size_t n = 20;
  static EvalMode full_sum() { return {}; }
  static EvalMode monte_carlo(std::size_t n) { return {Kind::MonteCarlo, n}; }
};

/// Bits per dimension of x: nats / (dim ln 2) + log2(128).
double bpd_from_nats(double nats, std::size_t dim);

/// Antithetic stratified draw: k_i = floor(((u + i/N) mod 1)(T-1)) + 1.
std::vector<std::size_t> antithetic_steps(double u, std::size_t n, std::size_t T);

/// Closed-form KL(q(z_T|z0) || N(0,I)) in nats.
double prior_kl(const NoiseSchedule& sched, const Tensor& z0);

/// One scale's VLB terms. When grad is given (and the denoiser is
/// differentiable) the gradient of total() w.r.t. that scale's parameters
/// is accumulated into it, times grad_scale.
VlbTerms vlb_scale(const ScaleDenoiser& den, const DiffusionSetup& setup, std::size_t s, const Tensor& z0, const Tensor* cond,
                   Rng& rng, EvalMode mode, Eigen::VectorXd* grad = nullptr, double grad_scale = 1.0);

/// Sum of scale VLBs on h(x); no Jacobian term enters. Draws one seed from rng, then one child stream per scale.
VlbBreakdown cascaded_loss(const ScaleDenoiser& den, const DiffusionSetup& setup, const HierarchySpec& spec, const Tensor& x,
                           Rng& rng, EvalMode mode, std::vector<Eigen::VectorXd>* grads = nullptr);
VlbBreakdown cascaded_loss(const CascadedModel& model, const Tensor& x, Rng& rng, EvalMode mode,
                           std::vector<Eigen::VectorXd>* grads = nullptr);

/// The same bound over the nearest-neighbor hierarchy. It is not a
/// likelihood: the map is not volume preserving.
VlbBreakdown cvdm_loss(const CascadedModel& model, const Tensor& x, Rng& rng, EvalMode mode);

/// Reverse-posterior parameters q(z_s | z_t, x) for s < t.
struct PosteriorCoeffs {
  double coef_z, coef_x, var;
};
PosteriorCoeffs posterior_coeffs(const NoiseSchedule& sched, double s, double t);

/// Ancestral sampling through all scales, n images at once. Returns
/// continuous images (the inverse map of the sampled scales).
std::vector<Tensor> sample_continuous(const ScaleDenoiser& den, const DiffusionSetup& setup, const HierarchySpec& spec,
                                      std::size_t n, Rng& rng);
ImageU8 sample(const CascadedModel& model, Rng& rng);
ImageU8 to_image(const Tensor& x);

/// -log N(x; 0, I) in nats.
double standard_normal_nll(const Tensor& x);

/// Expected discrete-time VLB per dimension, in nats, for data ~ N(0, var)
/// per element under the Bayes-optimal denoiser. Minus the entropy
/// 0.5 log(2 pi e var), this is the bound's gap; it falls like 1/T.
double gaussian_vlb_per_dim(const DiffusionSetup& setup, double var);

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 16;
  double lr = 2e-3;
  double weight_decay = 0.0;
  std::size_t log_every = 50;
};

struct TrainRow {
  std::size_t step;
  double loss_nats;
  double bpd;
  std::vector<double> per_scale;
};

/// Minibatch AdamW on the single-draw antithetic VLB estimate.
std::vector<TrainRow> train(CascadedModel& model, const std::vector<ImageU8>& data, const TrainConfig& cfg, Rng& rng,
                            std::ostream* csv = nullptr);

void write_train_header(std::ostream& os, std::size_t levels);
void write_train_row(std::ostream& os, const TrainRow& row);

}  // namespace pcdm
