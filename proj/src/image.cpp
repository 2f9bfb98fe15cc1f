#include "scfnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scfnet {

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

void source_coord(std::size_t i, std::size_t in, std::size_t out, std::size_t& lo, std::size_t& hi,
                  float& frac) {
  double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  if (src < 0) src = 0;
  lo = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
  hi = std::min(lo + 1, in - 1);
  frac = hi == lo ? 0.0f : static_cast<float>(src - static_cast<double>(lo));
}

}  // namespace

Frame resize_bilinear(const Frame& f, std::size_t height, std::size_t width) {
  if (f.height == height && f.width == width) return f;
  if (height == 0 || width == 0 || f.height == 0 || f.width == 0) {
    throw ArgumentError("resize_bilinear needs non-empty source and target");
  }
  Frame out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    float fy;
    source_coord(y, f.height, height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      float fx;
      source_coord(x, f.width, width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = f.at(c, y0, x0) * (1 - fx) + f.at(c, y0, x1) * fx;
        const float bot = f.at(c, y1, x0) * (1 - fx) + f.at(c, y1, x1) * fx;
        out.at(c, y, x) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

LocalizationMap resize_map(const LocalizationMap& m, std::size_t height, std::size_t width) {
  if (m.height == height && m.width == width) return m;
  if (height == 0 || width == 0 || m.height == 0 || m.width == 0) {
    throw ArgumentError("resize_map needs non-empty source and target");
  }
  LocalizationMap out;
  out.height = height;
  out.width = width;
  out.frame_index = m.frame_index;
  out.probs.resize(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    float fy;
    source_coord(y, m.height, height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      float fx;
      source_coord(x, m.width, width, x0, x1, fx);
      const float top = m.probs[y0 * m.width + x0] * (1 - fx) + m.probs[y0 * m.width + x1] * fx;
      const float bot = m.probs[y1 * m.width + x0] * (1 - fx) + m.probs[y1 * m.width + x1] * fx;
      out.probs[y * width + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

Mask resize_nearest(const Mask& m, std::size_t height, std::size_t width) {
  if (m.height == height && m.width == width) return m;
  if (height == 0 || width == 0 || m.height == 0 || m.width == 0) {
    throw ArgumentError("resize_nearest needs non-empty source and target");
  }
  Mask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto sy = std::min(m.height - 1, static_cast<std::size_t>((y + 0.5) * m.height / height));
    for (std::size_t x = 0; x < width; ++x) {
      const auto sx = std::min(m.width - 1, static_cast<std::size_t>((x + 0.5) * m.width / width));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

Frame quantize_8bit(const Frame& f) {
  Frame out = f;
  for (auto& v : out.rgb) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return out;
}

template <typename T>
Tensor<T> stack_frames(const std::vector<const Frame*>& frames) {
  if (frames.empty()) throw ArgumentError("stack_frames of an empty list");
  const std::size_t h = frames.front()->height, w = frames.front()->width;
  std::vector<T> data;
  data.reserve(frames.size() * 3 * h * w);
  for (const auto* f : frames) {
    if (f->height != h || f->width != w) throw ShapeError("stack_frames needs equally sized frames");
    data.insert(data.end(), f->rgb.begin(), f->rgb.end());
  }
  return Tensor<T>({frames.size(), 3, h, w}, std::move(data));
}

template <typename T>
Tensor<T> stack_masks(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw ArgumentError("stack_masks of an empty list");
  const std::size_t h = masks.front()->height, w = masks.front()->width;
  std::vector<T> data;
  data.reserve(masks.size() * h * w);
  for (const auto* m : masks) {
    if (m->height != h || m->width != w) throw ShapeError("stack_masks needs equally sized masks");
    for (auto b : m->bits) data.push_back(static_cast<T>(b));
  }
  return Tensor<T>({masks.size(), 1, h, w}, std::move(data));
}

template Tensor<float> stack_frames<float>(const std::vector<const Frame*>&);
template Tensor<double> stack_frames<double>(const std::vector<const Frame*>&);
template Tensor<float> stack_masks<float>(const std::vector<const Mask*>&);
template Tensor<double> stack_masks<double>(const std::vector<const Mask*>&);

}  // namespace scfnet
