#include "vllens/tensor_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vllens/error.hpp"

namespace vllens {

static_assert(std::endian::native == std::endian::little, "blob IO assumes a little-endian host");

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> encode_header(std::span<const std::uint32_t> dims, DType dtype) {
  std::vector<std::uint8_t> out(kBlobMagic, kBlobMagic + 4);
  put_u32(out, kBlobVersion);
  if (dims.size() > 255) throw FormatError("tensor rank exceeds 255");
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  out.push_back(static_cast<std::uint8_t>(dtype));
  return out;
}

struct Header {
  std::vector<std::uint32_t> dims;
  DType dtype;
  std::size_t payload_offset;
};

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated blob header");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBlobMagic, 4) != 0) throw FormatError("bad magic (expected VLIT)");
  Cursor cur(bytes.subspan(4));
  const auto version = cur.u32();
  if (version != kBlobVersion) throw FormatError("unsupported blob version " + std::to_string(version));
  Header h;
  const auto ndim = cur.u8();
  h.dims.reserve(ndim);
  for (int i = 0; i < ndim; ++i) h.dims.push_back(cur.u32());
  const auto code = cur.u8();
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code));
  h.dtype = static_cast<DType>(code);
  h.payload_offset = 4 + cur.pos();
  return h;
}

std::size_t product(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::size_t packed_row_bytes(std::uint32_t width) { return (std::size_t(width) + 7) / 8; }

}  // namespace

std::size_t FloatTensor::element_count() const { return product(shape); }

std::vector<std::uint8_t> encode_blob(const FloatTensor& tensor) {
  if (tensor.values.size() != tensor.element_count()) throw FormatError("tensor value count does not match its shape");
  auto out = encode_header(tensor.shape, DType::Float32);
  const auto offset = out.size();
  out.resize(offset + tensor.values.size() * sizeof(float));
  std::memcpy(out.data() + offset, tensor.values.data(), tensor.values.size() * sizeof(float));
  return out;
}

std::vector<std::uint8_t> encode_blob(const BitImage& image) {
  const std::uint32_t dims[2] = {image.height, image.width};
  auto out = encode_header(dims, DType::PackedBits);
  const auto row_bytes = packed_row_bytes(image.width);
  const auto offset = out.size();
  out.resize(offset + row_bytes * image.height, 0);
  for (std::uint32_t r = 0; r < image.height; ++r)
    for (std::uint32_t c = 0; c < image.width; ++c)
      if (image.at(r, c)) out[offset + r * row_bytes + c / 8] |= std::uint8_t(0x80u >> (c % 8));
  return out;
}

FloatTensor decode_float_blob(std::span<const std::uint8_t> bytes) {
  const auto h = decode_header(bytes);
  if (h.dtype != DType::Float32) throw FormatError("expected float32 payload");
  const auto count = product(h.dims);
  if (bytes.size() - h.payload_offset != count * sizeof(float))
    throw FormatError("payload length " + std::to_string(bytes.size() - h.payload_offset) + " does not match dims (" +
                      std::to_string(count * sizeof(float)) + " bytes expected)");
  FloatTensor t{h.dims, std::vector<float>(count)};
  std::memcpy(t.values.data(), bytes.data() + h.payload_offset, count * sizeof(float));
  return t;
}

BitImage decode_bit_blob(std::span<const std::uint8_t> bytes) {
  const auto h = decode_header(bytes);
  if (h.dtype != DType::PackedBits) throw FormatError("expected packed-bit payload");
  if (h.dims.size() != 2) throw FormatError("packed-bit blob must be 2-D");
  BitImage img{h.dims[0], h.dims[1], {}};
  const auto row_bytes = packed_row_bytes(img.width);
  if (bytes.size() - h.payload_offset != row_bytes * img.height) throw FormatError("packed-bit payload length does not match dims");
  img.pixels.resize(std::size_t(img.height) * img.width);
  const auto* payload = bytes.data() + h.payload_offset;
  for (std::uint32_t r = 0; r < img.height; ++r) {
    for (std::uint32_t c = 0; c < img.width; ++c)
      img.pixels[std::size_t(r) * img.width + c] = (payload[r * row_bytes + c / 8] >> (7 - c % 8)) & 1u;
    // Padding bits must be zero so that re-encoding is byte-identical.
    if (img.width % 8 != 0) {
      const std::uint8_t pad_mask = std::uint8_t(0xFFu >> (img.width % 8));
      if (payload[r * row_bytes + row_bytes - 1] & pad_mask) throw FormatError("nonzero padding bits in packed row");
    }
  }
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

FloatTensor read_float_blob(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_float_blob(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.filename().string() + ": " + e.what());
  }
}

void write_float_blob(const std::filesystem::path& path, const FloatTensor& tensor) { write_file(path, encode_blob(tensor)); }

}  // namespace vllens
