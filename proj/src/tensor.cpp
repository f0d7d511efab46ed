#include "pcdm/tensor.hpp"

#include <sstream>

namespace pcdm {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: incompatible " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t ca = a.channels(), cb = b.channels(), n = a.height() * a.width();
  Tensor out = Tensor::image(a.height(), a.width(), ca + cb);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < ca; ++c) out[p * (ca + cb) + c] = a[p * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[p * (ca + cb) + ca + c] = b[p * cb + c];
  }
  return out;
}

Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count) {
  if (t.rank() != 3 || first + count > t.channels()) {
    throw ShapeError("slice_channels: range out of bounds for " + shape_string(t.shape()));
  }
  const std::size_t c = t.channels(), n = t.height() * t.width();
  Tensor out = Tensor::image(t.height(), t.width(), count);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; k < count; ++k) out[p * count + k] = t[p * c + first + k];
  return out;
}

}  // namespace pcdm
