#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scfnet/tensor.hpp"

namespace scfnet {

struct GradcheckOptions {
  double eps = 1e-5;
  // Coordinates probed per input tensor; 0 checks every coordinate. When
  // sampling, coordinates are drawn without replacement from `seed`.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of the scalar function `f` against central
/// differences, perturbing `inputs` in place (they are restored afterwards).
/// The error of one coordinate is |a - n| / max(1, |a|, |n|).
GradcheckResult gradcheck(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                          const GradcheckOptions& options = {});

}  // namespace scfnet
