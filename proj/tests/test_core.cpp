#include <gtest/gtest.h>

#include <sstream>

#include "pcdm/image.hpp"
#include "pcdm/io.hpp"
#include "pcdm/rng.hpp"

using namespace pcdm;

namespace {

ImageU8 random_image(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t c) {
  Rng rng(seed);
  ImageU8 img(h, w, c);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  double mean = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
  }
  EXPECT_NEAR(mean / n, 0.5, 0.005);
}

TEST(Rng, NormalMoments) {
  Rng r(7);
  double m = 0, v = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    m += z;
    v += z * z;
  }
  m /= n;
  v = v / n - m * m;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.03);
}

TEST(Rng, ChildStreamsDiffer) {
  Rng r(5);
  EXPECT_NE(r.child(0).next_u64(), r.child(1).next_u64());
  EXPECT_EQ(r.child(3).next_u64(), Rng(5).child(3).next_u64());
}

TEST(Quantization, BinEdges) {
  ImageU8 img(1, 3, 1);
  img.pixels = {0, 255, 128};
  Tensor u = Tensor::image(1, 3, 1);
  Tensor y = dequantize_with(img, u);
  EXPECT_EQ(y[0], -1.0);
  EXPECT_EQ(y[1], 0.9921875);
  EXPECT_EQ(y[2], 0.0);

  Rng rng(11);
  Tensor z = dequantize(img, rng);
  EXPECT_GE(z[2], 0.0);
  EXPECT_LT(z[2], 1.0 / 128);
}

TEST(Quantization, QuantizeEdges) {
  Tensor t = Tensor::image(1, 2, 1);
  t[0] = -1.0;
  t[1] = 0.9921875;
  ImageU8 img = quantize(t);
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 255);
}

TEST(Quantization, OutOfRangeThrows) {
  Tensor t = Tensor::image(1, 1, 1);
  t[0] = 1.0;
  EXPECT_THROW(quantize(t), RangeError);
  t[0] = -1.0000001;
  EXPECT_THROW(quantize(t), RangeError);
}

TEST(Quantization, RoundTripProperty) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ImageU8 img = random_image(seed, 4, 5, seed % 2 ? 3 : 1);
    Rng rng(seed + 1000);
    ASSERT_EQ(quantize(dequantize(img, rng)), img) << "seed " << seed;
  }
  // Extreme offsets just below 1.
  ImageU8 img = random_image(1, 8, 8, 1);
  Tensor u = Tensor::constant({8, 8, 1}, 1.0 - 0x1.0p-53);
  EXPECT_EQ(quantize(dequantize_with(img, u)), img);
  EXPECT_EQ(quantize(bin_centers(img)), img);
}

TEST(Io, TensorRoundTrip) {
  Tensor t({2, 2});
  t[0] = 1.5;
  t[1] = -0.0;
  t[2] = 1e-300;
  t[3] = 3.141592653589793;
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.size(), 4u + 4u + 16u + 32u);
  EXPECT_EQ(bytes.substr(0, 4), "PTNS");
  EXPECT_EQ(bytes[4], 2);
  Tensor r = read_tensor(ss);
  EXPECT_EQ(r.shape(), t.shape());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(r[i]), std::bit_cast<std::uint64_t>(t[i]));
}

TEST(Io, TensorTruncated) {
  Tensor t({3});
  std::stringstream ss;
  write_tensor(ss, t);
  std::string bytes = ss.str();
  bytes.pop_back();
  std::istringstream is(bytes);
  EXPECT_THROW(read_tensor(is), TruncationError);
}

TEST(Io, TensorBadMagic) {
  std::istringstream is(std::string("PTNX\0\0\0\0", 8));
  EXPECT_THROW(read_tensor(is), FormatError);
}

TEST(Io, PgmAndPpm) {
  ImageU8 g = random_image(3, 3, 5, 1);
  std::stringstream ss;
  write_image(ss, g);
  EXPECT_EQ(ss.str().substr(0, 2), "P5");
  ImageU8 r = read_image(ss);
  EXPECT_EQ(r.channels, 1u);
  EXPECT_EQ(r, g);

  ImageU8 c = random_image(4, 2, 2, 3);
  std::stringstream s2;
  write_image(s2, c);
  EXPECT_EQ(read_image(s2), c);
}

TEST(Io, PgmWithComment) {
  std::string data = "P5\n# made by hand\n2 1\n255\n";
  data.push_back(static_cast<char>(7));
  data.push_back(static_cast<char>(200));
  std::istringstream is(data);
  ImageU8 img = read_image(is);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.pixels[1], 200);
}

TEST(Io, ImageErrors) {
  std::istringstream trunc(std::string("P5\n2 2\n255\n\x01\x02", 13));
  EXPECT_THROW(read_image(trunc), TruncationError);
  std::istringstream maxval("P5\n2 2\n65535\n");
  EXPECT_THROW(read_image(maxval), FormatError);
  std::istringstream magic("P2\n2 2\n255\n");
  EXPECT_THROW(read_image(magic), FormatError);
}

TEST(Tensor, ShapeMismatch) {
  EXPECT_THROW(Tensor({2, 2}, Tensor::Vector::Zero(3)), ShapeError);
  Tensor a({2}), b({3});
  EXPECT_THROW(a += b, ShapeError);
}

TEST(Tensor, ConcatSlice) {
  Tensor a = Tensor::constant({2, 2, 1}, 1.0);
  Tensor b = Tensor::constant({2, 2, 2}, 2.0);
  Tensor c = concat_channels(a, b);
  EXPECT_EQ(c.channels(), 3u);
  EXPECT_EQ(c(1, 1, 0), 1.0);
  EXPECT_EQ(c(1, 1, 2), 2.0);
  EXPECT_EQ(slice_channels(c, 1, 2), b);
}
