#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scfnet/image.hpp"

namespace scfnet {

// 8-bit PNG files. Frames are stored as RGB (values rounded to v*255),
// masks as grayscale 0/255. Failures raise IoError naming the path.
void write_frame_png(const std::filesystem::path& path, const Frame& frame);
Frame read_frame_png(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const Mask& mask);
// Any nonzero gray value reads as 1.
Mask read_mask_png(const std::filesystem::path& path);

// Probability map as gray round(p*255).
void write_probability_png(const std::filesystem::path& path, const LocalizationMap& map);
LocalizationMap read_probability_png(const std::filesystem::path& path);

struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_gray_png(const std::filesystem::path& path);

}  // namespace scfnet
