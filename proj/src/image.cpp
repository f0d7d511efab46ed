#include "pcdm/image.hpp"

#include <cmath>
#include <string>

namespace pcdm {

namespace {

// (p+u)/128 - 1 can round up onto the next bin edge when u is close to 1.
double in_bin(std::uint8_t p, double u) {
  const double y = (p + u) / 128.0 - 1.0;
  if (std::floor((y + 1.0) * 128.0) <= p) return y;
  return (p + 1.0 - 0x1.0p-38) / 128.0 - 1.0;  // exact, just below the edge
}

}  // namespace

ImageU8::ImageU8(std::size_t h, std::size_t w, std::size_t c) : height(h), width(w), channels(c), pixels(h * w * c, 0) {
  validate();
}

void ImageU8::validate() const {
  if (channels != 1 && channels != 3) throw ShapeError("image channels must be 1 or 3, got " + std::to_string(channels));
  if (pixels.size() != height * width * channels) throw ShapeError("image pixel buffer does not match dimensions");
}

Tensor dequantize(const ImageU8& img, Rng& rng) {
  img.validate();
  Tensor t = Tensor::image(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = in_bin(img.pixels[i], rng.uniform());
  return t;
}

Tensor dequantize_with(const ImageU8& img, const Tensor& u) {
  img.validate();
  if (u.size() != img.size()) throw ShapeError("dequantize_with: offset count does not match pixel count");
  Tensor t = Tensor::image(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!(u[i] >= 0.0 && u[i] < 1.0)) throw RangeError("dequantize_with: offset outside [0,1)");
    t[i] = in_bin(img.pixels[i], u[i]);
  }
  return t;
}

Tensor bin_centers(const ImageU8& img) {
  img.validate();
  Tensor t = Tensor::image(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = (img.pixels[i] + 0.5) / 128.0 - 1.0;
  return t;
}

ImageU8 quantize(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("quantize expects an HxWxC tensor, got " + shape_string(t.shape()));
  ImageU8 img(t.height(), t.width(), t.channels());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double y = t[i];
    if (!(y >= -1.0 && y < 1.0)) throw RangeError("quantize: value " + std::to_string(y) + " outside [-1,1)");
    const double p = std::floor((y + 1.0) * 128.0);
    img.pixels[i] = static_cast<std::uint8_t>(p < 0 ? 0 : (p > 255 ? 255 : p));
  }
  return img;
}

}  // namespace pcdm
