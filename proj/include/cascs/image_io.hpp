#pragma once

#include "cascs/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cascs {

/// Loads a binary PGM (P5, 8 or 16 bit) or PNG as luminance in [0, 1].
/// RGB input is converted with BT.601 weights (0.299, 0.587, 0.114).
Image load_image(const std::filesystem::path& path);

/// Decoders for in-memory buffers; format chosen by magic bytes.
Image decode_image(std::span<const std::uint8_t> bytes);
Image decode_pgm(std::span<const std::uint8_t> bytes);
Image decode_png(std::span<const std::uint8_t> bytes);

/// Quantizes to 8 bits (round half away from zero, clamped to [0, 255]).
/// Writes PNG when the extension is .png, binary PGM otherwise.
void save_image(const Image& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pgm(const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);

std::uint8_t quantize8(double v);

}  // namespace cascs
