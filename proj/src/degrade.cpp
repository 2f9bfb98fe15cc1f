#include "scfnet/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "scfnet/errors.hpp"

namespace scfnet {

namespace {

constexpr std::array<std::array<int, 8>, 8> kLuma{{{16, 11, 10, 16, 24, 40, 51, 61},
                                                   {12, 12, 14, 19, 26, 58, 60, 55},
                                                   {14, 13, 16, 24, 40, 57, 69, 56},
                                                   {14, 17, 22, 29, 51, 87, 80, 62},
                                                   {18, 22, 37, 56, 68, 109, 103, 77},
                                                   {24, 35, 55, 64, 81, 104, 113, 92},
                                                   {49, 64, 78, 87, 103, 121, 120, 101},
                                                   {72, 92, 95, 98, 112, 100, 103, 99}}};

constexpr double kMaxDcStep = 8.0;

struct DctBasis {
  double m[8][8];  // m[k][n]
  DctBasis() {
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n) {
        const double a = k == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
        m[k][n] = a * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
      }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

}  // namespace

double quantizer_step(int q, int u, int v) {
  if (q < 1 || q > kMaxQuality) throw ArgumentError("quality level must be in 1.." + std::to_string(kMaxQuality));
  if (u < 0 || u > 7 || v < 0 || v > 7) throw ArgumentError("DCT coefficient index out of range");
  const double step = 0.625 * std::pow(2.0, q / 6.0) * kLuma[u][v] / 16.0;
  return (u == 0 && v == 0) ? std::min(step, kMaxDcStep) : step;
}

Frame degrade_quality(const Frame& frame, int q) {
  if (q < 0 || q > kMaxQuality) {
    throw ArgumentError("unknown quality level " + std::to_string(q) + " (expected 0.." +
                        std::to_string(kMaxQuality) + ")");
  }
  if (q == 0) return frame;
  double step[8][8];
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) step[u][v] = quantizer_step(q, u, v);
  const auto& m = basis().m;
  const std::size_t h = frame.height, w = frame.width;
  Frame out(h, w);
  double block[8][8], tmp[8][8], coef[8][8];
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t by = 0; by < h; by += 8)
      for (std::size_t bx = 0; bx < w; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const std::size_t sy = std::min(h - 1, by + y), sx = std::min(w - 1, bx + x);
            block[y][x] = frame.at(c, sy, sx) * 255.0 - 128.0;
          }
        // coef = M * block * M^T
        for (int k = 0; k < 8; ++k)
          for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int n = 0; n < 8; ++n) s += m[k][n] * block[n][x];
            tmp[k][x] = s;
          }
        for (int k = 0; k < 8; ++k)
          for (int l = 0; l < 8; ++l) {
            double s = 0;
            for (int n = 0; n < 8; ++n) s += tmp[k][n] * m[l][n];
            coef[k][l] = std::round(s / step[k][l]) * step[k][l];
          }
        // block = M^T * coef * M
        for (int n = 0; n < 8; ++n)
          for (int l = 0; l < 8; ++l) {
            double s = 0;
            for (int k = 0; k < 8; ++k) s += m[k][n] * coef[k][l];
            tmp[n][l] = s;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            if (by + y >= h || bx + x >= w) continue;
            double s = 0;
            for (int l = 0; l < 8; ++l) s += tmp[y][l] * m[l][x];
            const double v = std::clamp(std::round(s + 128.0), 0.0, 255.0);
            out.at(c, by + y, bx + x) = static_cast<float>(v / 255.0);
          }
      }
  return out;
}

double psnr(const Frame& a, const Frame& b) {
  if (a.height != b.height || a.width != b.width) throw ArgumentError("psnr needs equally sized frames");
  double se = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    se += d * d;
  }
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.rgb.size())));
}

}  // namespace scfnet
