#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcdm/bits_back.hpp"
#include "pcdm/diffusion.hpp"
#include "pcdm/emd.hpp"
#include "pcdm/hvp.hpp"

namespace pcdm {

enum class DatasetKind { GaussianMixture, Checkerboard, Directory };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

/// Settings for every command, read from key=value lines. '#' starts a
/// comment. Keys a command does not use are accepted and ignored; keys no
/// command knows are rejected.
struct ExperimentConfig {
  // model
  HierarchyKind hierarchy = HierarchyKind::HaarWavelet;
  std::size_t levels = 2;
  std::size_t height = 8, width = 8, channels = 1;
  std::size_t T = 1000;
  double gamma_min = -13.3, gamma_max = 5.0;
  std::optional<double> decoder_var;
  std::vector<std::size_t> widths = {32, 32};

  // optimizer
  double lr = 2e-3;
  std::size_t batch = 16;
  std::size_t steps = 2000;
  double weight_decay = 0.0;
  std::size_t log_every = 50;

  std::uint64_t seed = 0;

  // data
  DatasetKind dataset = DatasetKind::GaussianMixture;
  std::size_t dataset_k = 4;
  std::size_t dataset_count = 512;
  std::size_t eval_count = 128;
  std::uint64_t dataset_seed = 1;
  std::string dataset_path;

  std::string out = "out";
  std::string model;       // defaults to <out>/model.pcdm
  std::string cvdm_model;  // eval: nearest-neighbor model to compare against

  std::size_t mc_samples = 0;  // 0 = sum over all T-1 terms
  std::size_t samples = 16;

  // codec
  std::size_t T_codec = 32;
  double latent_delta = 1.0 / 64.0;
  std::uint64_t aux_seed = 0x5eed;
  std::size_t aux_words = 0;
  std::size_t compress_count = 50;
  std::string archive;  // defaults to <out>/archive.pcdmbb

  // ood
  std::size_t ood_n = 20;
  std::size_t ood_m = 1;
  std::size_t ood_count = 200;

  // emd-bench
  std::size_t emd_pairs = 200;
  std::size_t emd_grid = 8;
  double emd_p = 1.0;
  EmdVariant emd_variant = EmdVariant::DimensionExponent;

  std::string input;  // plot-data: CSV to convert

  void validate() const;

  HierarchySpec hierarchy_spec() const;
  DiffusionSetup diffusion_setup() const;
  TrainConfig train_config() const;
  BbOptions codec_options() const;
  EvalMode eval_mode() const;
  std::string model_path() const;
  std::string archive_path() const;

  /// Resolved key=value text, every key, fixed order.
  void write(std::ostream& os) const;
  void write(const std::string& path) const;
};

/// Parses key=value text on top of the defaults.
ExperimentConfig parse_config(std::istream& is, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

}  // namespace pcdm
