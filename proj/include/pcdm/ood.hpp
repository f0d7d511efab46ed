#pragma once

#include <cstddef>
#include <vector>

#include "pcdm/diffusion.hpp"
#include "pcdm/image.hpp"
#include "pcdm/rng.hpp"

namespace pcdm {

/// Discrete-image NLL in nats: Monte Carlo(n) cascaded VLB of the
/// dequantized image plus the bin-width term dim * log(128).
double image_nll(const CascadedModel& model, const ImageU8& img, std::size_t n, Rng& rng);

/// image_nll over a set. Draws one seed from rng; image i uses child stream i.
std::vector<double> image_nlls(const CascadedModel& model, const std::vector<ImageU8>& images, std::size_t n, Rng& rng);

/// Typicality test with group size m and n Monte Carlo steps.
struct OodScorer {
  const CascadedModel* model = nullptr;
  double entropy = 0.0;  // nats per image
  std::size_t n = 20;
  std::size_t m = 1;

  void validate() const;
};

/// Mean train-set NLL, the cross-entropy estimate of H(p).
double estimate_entropy(const CascadedModel& model, const std::vector<ImageU8>& train, std::size_t n, Rng& rng);

OodScorer make_scorer(const CascadedModel& model, const std::vector<ImageU8>& train, std::size_t n, std::size_t m, Rng& rng);

/// |mean(nlls) - entropy|.
double typicality_score(const std::vector<double>& nlls, double entropy);
inline double typicality_score(double nll, double entropy) { return typicality_score(std::vector<double>{nll}, entropy); }

/// One score per consecutive group of scorer.m images; a short tail group is dropped.
std::vector<double> typicality_scores(const OodScorer& scorer, const std::vector<ImageU8>& images, Rng& rng);

/// P(out > in) + P(tie)/2 over all pairs.
double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out);

}  // namespace pcdm
