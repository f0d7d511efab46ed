#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "pcdm/image.hpp"
#include "pcdm/tensor.hpp"

namespace pcdm {

// "PTNS" container: magic, u32 rank, u64 dims, f64 payload; little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), maxval 255.
void write_image(std::ostream& os, const ImageU8& img);
ImageU8 read_image(std::istream& is);
void write_image(const std::string& path, const ImageU8& img);
ImageU8 read_image(const std::string& path);

namespace le {
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);
void read_exact(std::istream& is, char* dst, std::size_t n, const char* what);
}  // namespace le

}  // namespace pcdm
