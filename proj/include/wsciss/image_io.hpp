#pragma once

#include <filesystem>
#include <string>

#include "wsciss/types.hpp"

namespace wsciss::io {

/// 8-bit value used for ignore pixels in mask files.
inline constexpr int kMaskIgnoreByte = 255;

/// RGB PNG, quantized to 8 bits per channel.
void write_image_png(const std::filesystem::path& path, const Image& image);
Image read_image_png(const std::filesystem::path& path, const std::string& id);

/// Single-channel 8-bit PNG of class indices; kIgnore is stored as 255.
void write_mask_png(const std::filesystem::path& path, const HardLabelMap& mask);
HardLabelMap read_mask_png(const std::filesystem::path& path);

/// Rounds every pixel to the nearest 8-bit level, i.e. what a PNG round trip yields.
Image quantize_8bit(const Image& image);

}  // namespace wsciss::io
