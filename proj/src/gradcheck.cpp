#include "scfnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scfnet {

GradcheckResult gradcheck(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                          const GradcheckOptions& options) {
  if (!(options.eps >= 1e-7 && options.eps <= 1e-3)) {
    throw ArgumentError("gradcheck eps must lie in [1e-7, 1e-3]");
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const Tensor<double> loss = f();
    backward(loss, tape);
  }
  for (auto& t : inputs) {
    analytic.push_back(t.grad());
    t.zero_grad();
  }

  NoGradScope<double> no_grad;
  std::mt19937_64 rng(options.seed);
  GradcheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + options.eps;
      const double up = f().item();
      values[c] = saved - options.eps;
      const double down = f().item();
      values[c] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[k][c];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_coord = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace scfnet
