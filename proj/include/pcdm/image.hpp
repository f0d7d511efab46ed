#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pcdm/rng.hpp"
#include "pcdm/tensor.hpp"

namespace pcdm {

/// 8-bit image, row-major HWC. channels is 1 or 3.
struct ImageU8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t h, std::size_t w, std::size_t c);

  std::size_t size() const { return pixels.size(); }
  std::uint8_t& at(std::size_t i, std::size_t j, std::size_t c) { return pixels[(i * width + j) * channels + c]; }
  std::uint8_t at(std::size_t i, std::size_t j, std::size_t c) const { return pixels[(i * width + j) * channels + c]; }

  void validate() const;

  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

inline constexpr double kBinWidth = 1.0 / 128.0;

/// y = (p + u)/128 - 1 with u ~ U[0,1).
Tensor dequantize(const ImageU8& img, Rng& rng);

/// Same map with caller-supplied offsets u (one per pixel, each in [0,1)).
Tensor dequantize_with(const ImageU8& img, const Tensor& u);

/// Bin centers (p + 1/2)/128 - 1.
Tensor bin_centers(const ImageU8& img);

/// floor((y+1)*128); values outside [-1,1) raise RangeError.
ImageU8 quantize(const Tensor& t);

}  // namespace pcdm
