#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcdm/config.hpp"
#include "pcdm/image.hpp"
#include "pcdm/rng.hpp"

namespace pcdm {

struct ToyDatasetSpec {
  DatasetKind kind = DatasetKind::GaussianMixture;
  std::size_t k = 4;  // mixture components
  std::size_t height = 8, width = 8, channels = 1;
  std::size_t count = 512;
  std::uint64_t seed = 1;
  std::string path;  // Directory only
};

/// k smooth template images shared by the whole set (fixed by seed); each
/// image is one template plus per-pixel noise.
std::vector<ImageU8> gaussian_mixture_images(std::size_t k, std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng);

/// Two-tone checkerboards with random cell size, phase and levels, plus noise.
std::vector<ImageU8> checkerboard_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng);

/// Every .pgm/.ppm in a directory, sorted by file name. All must share one shape.
std::vector<ImageU8> directory_images(const std::string& path);

/// Images for spec. Generated sets are a deterministic function of the spec.
std::vector<ImageU8> make_dataset(const ToyDatasetSpec& spec);

/// Out-of-distribution sets: i.i.d. uniform pixels, and constant images
/// whose level is uniform on [0, 255].
std::vector<ImageU8> uniform_noise_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng);
std::vector<ImageU8> constant_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng);

/// Train and held-out splits described by a config: the first dataset_count
/// images train, the next eval_count are held out.
struct DataSplit {
  std::vector<ImageU8> train, held_out;
};
DataSplit load_split(const ExperimentConfig& cfg);

}  // namespace pcdm
