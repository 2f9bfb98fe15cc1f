#pragma once

#include "scfnet/image.hpp"

namespace scfnet {

inline constexpr int kMaxQuality = 51;

/// Block-transform stand-in for lossy video coding.
///
/// Each 8x8 block of each channel (0-255 scale, level-shifted by 128) goes
/// through an orthonormal DCT-II; coefficient (u, v) is quantized with step
///   base(q) * L[u][v] / 16,   base(q) = 0.625 * 2^(q / 6)
/// where L is the JPEG luminance table, so the step doubles every 6 levels
/// like an H.264 quantizer. The DC step is capped at 8, which keeps the error
/// on flat regions under half a grey level. The result is inverse
/// transformed, clamped and rounded to 8 bits. q = 0 returns the input
/// unchanged; valid levels are 0..kMaxQuality. Partial edge blocks are
/// padded by replication.
Frame degrade_quality(const Frame& frame, int q);

// Quantizer step for coefficient (u, v) at level q, in 0-255 units.
double quantizer_step(int q, int u, int v);

// Peak signal-to-noise ratio in dB for values in [0, 1]; +inf for equal frames.
double psnr(const Frame& a, const Frame& b);

}  // namespace scfnet
