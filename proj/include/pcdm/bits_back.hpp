#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcdm/diffusion.hpp"
#include "pcdm/image.hpp"
#include "pcdm/rans.hpp"

namespace pcdm {

struct BbOptions {
  double delta = 1.0 / 64.0;   // latent bin width
  std::size_t T_codec = 32;    // chain length used for coding
  std::uint64_t aux_seed = 0x5eed;
  std::size_t aux_words = 0;   // 0: sized from the model
};

struct BbArchive {
  std::uint64_t model_hash = 0;
  double delta = 1.0 / 64.0;
  std::uint32_t T_codec = 32;
  std::uint64_t aux_seed = 0;
  std::uint32_t aux_words = 0;
  std::vector<std::uint32_t> dims;  // h, w, c per image
  AnsState stream;
};

struct BbReport {
  double gross_bits = 0.0;  // final stream size
  double aux_bits = 0.0;    // capital supplied up front
  double net_bits = 0.0;    // gross - aux
  std::vector<double> per_image_net_bits;
  std::size_t pixels = 0;
  double net_bpd() const { return pixels ? net_bits / double(pixels) : 0.0; }
};

/// The setup the codec runs the chain with: the model's schedule at T_codec.
DiffusionSetup codec_setup(const CascadedModel& model, std::size_t T_codec);

/// Auxiliary words needed to start the chain for one image.
std::size_t default_aux_words(const CascadedModel& model, const BbOptions& opt);

/// Integer pixel sums over the blocks of each hierarchy level; level S is
/// the image itself, level s-1 sums 2x2 (or 1x2) blocks of level s.
std::vector<std::vector<std::int64_t>> level_sums(const HierarchySpec& spec, const ImageU8& img);

/// Scale s of h(bin centers) computed from the level sums; encoder and
/// decoder both use this so their floating-point values agree bit for bit.
Tensor scale_from_sums(const HierarchySpec& spec, const std::vector<std::vector<std::int64_t>>& sums, std::size_t s);

/// One image onto / off an existing stream.
void bb_push_image(const CascadedModel& model, AnsState& stream, const ImageU8& img, const BbOptions& opt = {});
ImageU8 bb_pop_image(const CascadedModel& model, AnsState& stream, const BbOptions& opt = {});

/// Images are pushed in order, so they come back in reverse from the stack.
BbArchive bb_encode(const CascadedModel& model, const std::vector<ImageU8>& images, const BbOptions& opt = {},
                    BbReport* report = nullptr);
std::vector<ImageU8> bb_decode(const CascadedModel& model, const BbArchive& archive);

void write_archive(std::ostream& os, const BbArchive& a);
BbArchive read_archive(std::istream& is);
void write_archive(const std::string& path, const BbArchive& a);
BbArchive read_archive(const std::string& path);

}  // namespace pcdm
