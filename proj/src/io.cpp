#include "pcdm/io.hpp"

#include <array>
#include <cctype>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace pcdm {

namespace le {

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw TruncationError(std::string("truncated ") + what + ": wanted " + std::to_string(n) + " bytes, got " +
                          std::to_string(is.gcount()));
  }
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4, "u32");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char*>(b), 8, "u64");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace le

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw TruncationError("truncated image header");
  return tok;
}

std::size_t header_number(std::istream& is, const char* what) {
  const std::string tok = header_token(is);
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size()) throw FormatError(std::string("malformed image header field ") + what + ": '" + tok + "'");
  return static_cast<std::size_t>(v);
}

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("PTNS", 4);
  le::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) le::put_u64(os, d);
  for (std::size_t i = 0; i < t.size(); ++i) le::put_f64(os, t[i]);
  if (!os) throw IoError("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  le::read_exact(is, magic, 4, "tensor magic");
  if (std::memcmp(magic, "PTNS", 4) != 0) throw FormatError("tensor magic mismatch (expected PTNS)");
  const std::uint32_t rank = le::get_u32(is);
  if (rank > 16) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& d : shape) {
    d = le::get_u64(is);
    n *= d;
    if (n > kMaxElements) throw FormatError("tensor header declares too many elements");
  }
  Tensor::Vector data(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) data[static_cast<Eigen::Index>(i)] = le::get_f64(is);
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::string& path, const Tensor& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

Tensor read_tensor(const std::string& path) {
  auto is = open_in(path);
  return read_tensor(is);
}

void write_image(std::ostream& os, const ImageU8& img) {
  img.validate();
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("image write failed");
}

ImageU8 read_image(std::istream& is) {
  char magic[2];
  le::read_exact(is, magic, 2, "image magic");
  std::size_t channels;
  if (magic[0] == 'P' && magic[1] == '5') {
    channels = 1;
  } else if (magic[0] == 'P' && magic[1] == '6') {
    channels = 3;
  } else {
    throw FormatError("unsupported image magic (expected P5 or P6)");
  }
  const std::size_t width = header_number(is, "width");
  const std::size_t height = header_number(is, "height");
  const std::size_t maxval = header_number(is, "maxval");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  if (width == 0 || height == 0 || width * height > (1u << 26)) throw FormatError("implausible image dimensions");
  ImageU8 img(height, width, channels);
  le::read_exact(is, reinterpret_cast<char*>(img.pixels.data()), img.pixels.size(), "image payload");
  return img;
}

void write_image(const std::string& path, const ImageU8& img) {
  auto os = open_out(path);
  write_image(os, img);
}

ImageU8 read_image(const std::string& path) {
  auto is = open_in(path);
  return read_image(is);
}

}  // namespace pcdm
