#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vllens {

// On-disk tensor container:
//   "VLIT" | u32 version | u8 ndim | u32 dims[ndim] | u8 dtype | payload
// All integers little-endian, payload row-major.
inline constexpr char kBlobMagic[4] = {'V', 'L', 'I', 'T'};
inline constexpr std::uint32_t kBlobVersion = 1;

enum class DType : std::uint8_t {
  Float32 = 0,
  /// 2-D bit image, rows packed MSB-first and padded to a byte boundary.
  PackedBits = 1,
};

struct FloatTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const FloatTensor&) const = default;
};

/// Row-major binary image (one byte per pixel, 0 or 1 in memory).
struct BitImage {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> pixels;

  bool at(std::uint32_t row, std::uint32_t col) const { return pixels[std::size_t(row) * width + col] != 0; }
  bool operator==(const BitImage&) const = default;
};

std::vector<std::uint8_t> encode_blob(const FloatTensor& tensor);
std::vector<std::uint8_t> encode_blob(const BitImage& image);

FloatTensor decode_float_blob(std::span<const std::uint8_t> bytes);
BitImage decode_bit_blob(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, const std::string& text);

FloatTensor read_float_blob(const std::filesystem::path& path);
void write_float_blob(const std::filesystem::path& path, const FloatTensor& tensor);

}  // namespace vllens
