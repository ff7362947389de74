#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "polydeform/geometry/types.hpp"
#include "polydeform/io/image.hpp"

namespace polydeform::io {

/// 8-bit PNG encode/decode. Decoding accepts gray, gray+alpha, RGB, RGBA and
/// palette images; alpha is dropped. Throws ValidationError on malformed data.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes, int want_channels = 3);

/// Masks are 8-bit grayscale: 0 background, 255 foreground. Decoding treats
/// any nonzero value as foreground.
std::vector<std::uint8_t> encode_mask_png(const geometry::BinaryMask& mask);
geometry::BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace polydeform::io
