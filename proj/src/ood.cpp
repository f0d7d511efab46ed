#include "pcdm/ood.hpp"

#include <algorithm>
#include <cmath>

#include "pcdm/error.hpp"
#include "pcdm/parallel.hpp"

namespace pcdm {

double image_nll(const CascadedModel& model, const ImageU8& img, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("Monte Carlo sample count must be at least 1");
  const Tensor x = dequantize(img, rng);
  const VlbBreakdown b = cascaded_loss(model, x, rng, EvalMode::monte_carlo(n));
  return b.total_nats() + double(x.size()) * std::log(128.0);
}

std::vector<double> image_nlls(const CascadedModel& model, const std::vector<ImageU8>& images, std::size_t n, Rng& rng) {
  const Rng base(rng.next_u64());
  std::vector<double> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    Rng r = base.child(i);
    out[i] = image_nll(model, images[i], n, r);
  });
  return out;
}

void OodScorer::validate() const {
  if (!model) throw ConfigError("OOD scorer has no model");
  if (n < 1 || m < 1) throw ConfigError("OOD scorer needs N >= 1 and M >= 1");
  if (!std::isfinite(entropy)) throw RangeError("entropy estimate is not finite");
}

double estimate_entropy(const CascadedModel& model, const std::vector<ImageU8>& train, std::size_t n, Rng& rng) {
  if (train.empty()) throw ConfigError("entropy estimate needs a nonempty training set");
  const std::vector<double> nll = image_nlls(model, train, n, rng);
  double sum = 0.0;
  for (double v : nll) sum += v;
  return sum / double(nll.size());
}

OodScorer make_scorer(const CascadedModel& model, const std::vector<ImageU8>& train, std::size_t n, std::size_t m, Rng& rng) {
  OodScorer sc{&model, estimate_entropy(model, train, n, rng), n, m};
  sc.validate();
  return sc;
}

double typicality_score(const std::vector<double>& nlls, double entropy) {
  if (nlls.empty()) throw ConfigError("typicality score of an empty group");
  double sum = 0.0;
  for (double v : nlls) sum += v;
  return std::abs(sum / double(nlls.size()) - entropy);
}

std::vector<double> typicality_scores(const OodScorer& scorer, const std::vector<ImageU8>& images, Rng& rng) {
  scorer.validate();
  const std::vector<double> nll = image_nlls(*scorer.model, images, scorer.n, rng);
  std::vector<double> out;
  for (std::size_t g = 0; g + scorer.m <= nll.size(); g += scorer.m)
    out.push_back(typicality_score(std::vector<double>(nll.begin() + long(g), nll.begin() + long(g + scorer.m)), scorer.entropy));
  return out;
}

double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out) {
  if (scores_in.empty() || scores_out.empty()) throw ConfigError("AUROC needs nonempty score sets");
  for (const auto* v : {&scores_in, &scores_out})
    for (double s : *v)
      if (std::isnan(s)) throw RangeError("AUROC score is NaN");
  std::vector<double> in = scores_in;
  std::sort(in.begin(), in.end());
  // Count pairs exactly in integers so the result is independent of order.
  std::uint64_t twice = 0;
  for (double o : scores_out) {
    const auto lo = std::lower_bound(in.begin(), in.end(), o);
    const auto hi = std::upper_bound(lo, in.end(), o);
    twice += 2 * std::uint64_t(lo - in.begin()) + std::uint64_t(hi - lo);
  }
  return double(twice) / (2.0 * double(in.size()) * double(scores_out.size()));
}

}  // namespace pcdm
