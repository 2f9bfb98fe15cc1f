#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scfnet/tensor.hpp"

namespace scfnet {

enum class Mode { Train, Infer };

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Registry of a model's learnable parameters and persistent buffers, in
/// registration order. Layers keep handles aliasing the registered tensors,
/// so updates through the store are visible to the layers.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> add_parameter(const std::string& name, Tensor<T> t);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> t);

  // Fan-in scaled normal: std = gain / sqrt(fan_in).
  Tensor<T> normal_parameter(const std::string& name, Shape shape, std::size_t fan_in, double gain);
  Tensor<T> constant_parameter(const std::string& name, Shape shape, T value);

  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }
  std::optional<Tensor<T>> find_parameter(const std::string& name) const;
  std::optional<Tensor<T>> find_buffer(const std::string& name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  std::mt19937_64& rng() { return rng_; }

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  std::mt19937_64 rng_;
};

}  // namespace scfnet
