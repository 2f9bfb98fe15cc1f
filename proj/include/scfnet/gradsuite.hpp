#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scfnet {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t coords = 0;
};

inline constexpr double kGradSuiteTolerance = 1e-4;
inline constexpr double kGradSuiteEps = 1e-5;

/// Finite-difference check, in double precision, of every differentiable op
/// and of the composed attention blocks, the decoder, a residual block and
/// one loss evaluation of a tiny full model. Op inputs are at most
/// 2 x 4 x 6 x 6. The decoder pyramid needs strides 1, 2, 4, 8 between its
/// levels, so its finest level is 8 x 8; the full model runs at its minimum
/// input of 32 x 32 and samples a few coordinates per parameter tensor.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0);

}  // namespace scfnet
