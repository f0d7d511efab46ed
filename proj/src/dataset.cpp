#include "pcdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "pcdm/error.hpp"
#include "pcdm/io.hpp"

namespace pcdm {

namespace {

std::uint8_t clamp_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void check_shape(std::size_t h, std::size_t w, std::size_t c) {
  if (h == 0 || w == 0) throw ShapeError("dataset images need a positive size");
  if (c != 1 && c != 3) throw ShapeError("dataset images need 1 or 3 channels");
}

}  // namespace

std::vector<ImageU8> gaussian_mixture_images(std::size_t k, std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng) {
  check_shape(h, w, c);
  if (k == 0) throw ConfigError("mixture needs at least one component");
  // Templates: a level plus two low-frequency cosines per channel.
  struct Wave {
    double amp, fy, fx, phase;
  };
  struct Template {
    std::vector<double> level;
    std::vector<Wave> waves;  // 2 per channel
  };
  std::vector<Template> temps(k);
  for (auto& t : temps) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      t.level.push_back(64.0 + 128.0 * rng.uniform());
      for (int q = 0; q < 2; ++q)
        t.waves.push_back({20.0 + 30.0 * rng.uniform(), rng.uniform() * std::numbers::pi, rng.uniform() * std::numbers::pi,
                           2.0 * std::numbers::pi * rng.uniform()});
    }
  }
  const double noise = 6.0;
  std::vector<ImageU8> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const Template& t = temps[rng.below(k)];
    ImageU8 img(h, w, c);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double v = t.level[ch];
          for (int q = 0; q < 2; ++q) {
            const Wave& wv = t.waves[2 * ch + q];
            v += wv.amp * std::cos(wv.fy * double(i) + wv.fx * double(j) + wv.phase);
          }
          img.at(i, j, ch) = clamp_pixel(v + noise * rng.normal());
        }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<ImageU8> checkerboard_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng) {
  check_shape(h, w, c);
  std::vector<ImageU8> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t cell = std::size_t{1} << rng.below(2);  // 1 or 2 pixels
    const std::size_t py = rng.below(2), px = rng.below(2);
    const double lo = 30.0 + 70.0 * rng.uniform(), hi = 150.0 + 80.0 * rng.uniform();
    ImageU8 img(h, w, c);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const bool on = (((i + py) / cell) + ((j + px) / cell)) % 2;
        for (std::size_t ch = 0; ch < c; ++ch) img.at(i, j, ch) = clamp_pixel((on ? hi : lo) + 4.0 * rng.normal());
      }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<ImageU8> directory_images(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(path, ec)) throw IoError("not a directory: " + path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm or .ppm files in " + path);
  std::vector<ImageU8> out;
  for (const auto& f : files) {
    out.push_back(read_image(f.string()));
    const auto& a = out.front();
    const auto& b = out.back();
    if (a.height != b.height || a.width != b.width || a.channels != b.channels)
      throw ShapeError(f.string() + " does not match the shape of " + files.front().string());
  }
  return out;
}

std::vector<ImageU8> make_dataset(const ToyDatasetSpec& spec) {
  Rng rng(spec.seed);
  switch (spec.kind) {
    case DatasetKind::GaussianMixture:
      return gaussian_mixture_images(spec.k, spec.height, spec.width, spec.channels, spec.count, rng);
    case DatasetKind::Checkerboard:
      return checkerboard_images(spec.height, spec.width, spec.channels, spec.count, rng);
    case DatasetKind::Directory: {
      auto all = directory_images(spec.path);
      if (spec.count && all.size() > spec.count) all.resize(spec.count);
      return all;
    }
  }
  throw ConfigError("unknown dataset kind");
}

std::vector<ImageU8> uniform_noise_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng) {
  check_shape(h, w, c);
  std::vector<ImageU8> out(count, ImageU8(h, w, c));
  for (auto& img : out)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return out;
}

std::vector<ImageU8> constant_images(std::size_t h, std::size_t w, std::size_t c, std::size_t count, Rng& rng) {
  check_shape(h, w, c);
  std::vector<ImageU8> out(count, ImageU8(h, w, c));
  for (auto& img : out) std::fill(img.pixels.begin(), img.pixels.end(), static_cast<std::uint8_t>(rng.below(256)));
  return out;
}

DataSplit load_split(const ExperimentConfig& cfg) {
  ToyDatasetSpec spec;
  spec.kind = cfg.dataset;
  spec.k = cfg.dataset_k;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.channels = cfg.channels;
  spec.count = cfg.dataset == DatasetKind::Directory ? 0 : cfg.dataset_count + cfg.eval_count;
  spec.seed = cfg.dataset_seed;
  spec.path = cfg.dataset_path;
  std::vector<ImageU8> all = make_dataset(spec);
  const ImageU8& first = all.front();
  if (first.height != cfg.height || first.width != cfg.width || first.channels != cfg.channels)
    throw ShapeError("dataset images are " + std::to_string(first.height) + "x" + std::to_string(first.width) + "x" +
                     std::to_string(first.channels) + ", config wants " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                     "x" + std::to_string(cfg.channels));
  DataSplit split;
  const std::size_t n_train = std::min(cfg.dataset_count, all.size());
  split.train.assign(all.begin(), all.begin() + long(n_train));
  split.held_out.assign(all.begin() + long(n_train), all.begin() + long(std::min(all.size(), n_train + cfg.eval_count)));
  if (split.train.empty()) throw ConfigError("dataset has no training images");
  return split;
}

}  // namespace pcdm
