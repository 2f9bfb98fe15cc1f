#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scfnet/tensor.hpp"

namespace scfnet {

/// RGB frame, planar 3 x H x W, values in [0, 1].
struct Frame {
  std::size_t height = 0, width = 0;
  std::vector<float> rgb;

  Frame() = default;
  Frame(std::size_t h, std::size_t w) : height(h), width(w), rgb(3 * h * w, 0.0f) {}
  float& at(std::size_t c, std::size_t y, std::size_t x) { return rgb[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return rgb[(c * height + y) * width + x]; }
  bool operator==(const Frame&) const = default;
};

/// Binary mask, one byte per pixel holding 0 or 1.
struct Mask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}
  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t area() const;
  bool operator==(const Mask&) const = default;
};

/// Per-pixel tampering probabilities for one frame.
struct LocalizationMap {
  std::size_t height = 0, width = 0;
  std::vector<float> probs;
  int frame_index = 0;
};

/// Input unit of the network: frames t-1, t, t+1 and their masks.
struct FrameTriple {
  std::array<Frame, 3> frames;
  std::array<Mask, 3> masks;
};

// Bilinear (align_corners=false) resampling; returns the input when sizes match.
Frame resize_bilinear(const Frame& f, std::size_t height, std::size_t width);
// Nearest neighbour on pixel centres, so the result stays binary.
Mask resize_nearest(const Mask& m, std::size_t height, std::size_t width);

// Bilinear resampling of a probability map.
LocalizationMap resize_map(const LocalizationMap& m, std::size_t height, std::size_t width);

// Quantizes every channel value to the nearest multiple of 1/255.
Frame quantize_8bit(const Frame& f);

template <typename T>
Tensor<T> stack_frames(const std::vector<const Frame*>& frames);
template <typename T>
Tensor<T> stack_masks(const std::vector<const Mask*>& masks);

}  // namespace scfnet
