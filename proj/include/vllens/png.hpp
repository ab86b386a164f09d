#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vllens {

/// Minimal PNG encoder for 8-bit grayscale images (row-major pixels).
std::vector<std::uint8_t> encode_gray_png(std::span<const std::uint8_t> pixels, std::uint32_t width, std::uint32_t height);

}  // namespace vllens
