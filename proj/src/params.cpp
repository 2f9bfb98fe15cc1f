#include "scfnet/params.hpp"

#include <algorithm>
#include <cmath>

namespace scfnet {

template <typename T>
void ParamStore<T>::check_unique(const std::string& name) const {
  auto same = [&](const NamedTensor<T>& n) { return n.name == name; };
  if (std::any_of(params_.begin(), params_.end(), same) ||
      std::any_of(buffers_.begin(), buffers_.end(), same)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
}

template <typename T>
Tensor<T> ParamStore<T>::add_parameter(const std::string& name, Tensor<T> t) {
  check_unique(name);
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_buffer(const std::string& name, Tensor<T> t) {
  check_unique(name);
  t.set_requires_grad(false);
  buffers_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::normal_parameter(const std::string& name, Shape shape, std::size_t fan_in,
                                          double gain) {
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng_));
  return add_parameter(name, Tensor<T>(std::move(shape), std::move(values)));
}

template <typename T>
Tensor<T> ParamStore<T>::constant_parameter(const std::string& name, Shape shape, T value) {
  return add_parameter(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
std::optional<Tensor<T>> ParamStore<T>::find_parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  return std::nullopt;
}

template <typename T>
std::optional<Tensor<T>> ParamStore<T>::find_buffer(const std::string& name) const {
  for (const auto& b : buffers_)
    if (b.name == name) return b.tensor;
  return std::nullopt;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace scfnet
