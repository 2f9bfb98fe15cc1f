#include "scfnet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scfnet/errors.hpp"

namespace scfnet {

namespace {

void write_png(const std::filesystem::path& path, std::size_t h, std::size_t w, bool rgb,
               const std::vector<std::uint8_t>& pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, bool rgb, std::size_t& h, std::size_t& w) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + image.message);
  }
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  }
  h = image.height;
  w = image.width;
  return pixels;
}

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

void write_frame_png(const std::filesystem::path& path, const Frame& frame) {
  const std::size_t hw = frame.height * frame.width;
  std::vector<std::uint8_t> px(3 * hw);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) px[3 * i + c] = to_byte(frame.rgb[c * hw + i]);
  write_png(path, frame.height, frame.width, true, px);
}

Frame read_frame_png(const std::filesystem::path& path) {
  std::size_t h, w;
  const auto px = read_png(path, true, h, w);
  Frame f(h, w);
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) f.rgb[c * hw + i] = static_cast<float>(px[3 * i + c]) / 255.0f;
  return f;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> px(mask.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  write_png(path, mask.height, mask.width, false, px);
}

Mask read_mask_png(const std::filesystem::path& path) {
  const auto g = read_gray_png(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] ? 1 : 0;
  return m;
}

void write_probability_png(const std::filesystem::path& path, const LocalizationMap& map) {
  std::vector<std::uint8_t> px(map.probs.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(map.probs[i]);
  write_png(path, map.height, map.width, false, px);
}

LocalizationMap read_probability_png(const std::filesystem::path& path) {
  const auto g = read_gray_png(path);
  LocalizationMap m;
  m.height = g.height;
  m.width = g.width;
  m.probs.resize(g.pixels.size());
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.probs[i] = static_cast<float>(g.pixels[i]) / 255.0f;
  return m;
}

GrayImage read_gray_png(const std::filesystem::path& path) {
  GrayImage g;
  g.pixels = read_png(path, false, g.height, g.width);
  return g;
}

}  // namespace scfnet
