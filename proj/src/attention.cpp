#include "scfnet/attention.hpp"

#include <algorithm>
#include <cmath>

#include "scfnet/ops.hpp"

namespace scfnet {

template <typename T>
GateParams<T> GateParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                    int ratio, int kernel) {
  if (ratio < 1) throw ConfigError("gate bottleneck ratio must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("gate spatial kernel must be odd and positive");
  const std::size_t hidden = std::max<std::size_t>(1, (channels + ratio - 1) / ratio);
  const auto k = static_cast<std::size_t>(kernel);
  GateParams p;
  p.kernel = kernel;
  p.fc1_w = store.normal_parameter(prefix + ".fc1.weight", {hidden, channels, 1, 1}, channels, std::sqrt(2.0));
  p.fc1_b = store.constant_parameter(prefix + ".fc1.bias", {hidden}, T(0));
  p.fc2_w = store.normal_parameter(prefix + ".fc2.weight", {channels, hidden, 1, 1}, hidden, 1.0);
  p.fc2_b = store.constant_parameter(prefix + ".fc2.bias", {channels}, T(0));
  p.spatial_w = store.normal_parameter(prefix + ".spatial.weight", {1, channels, k, k}, channels * k * k, 1.0);
  p.spatial_b = store.constant_parameter(prefix + ".spatial.bias", {1}, T(0));
  return p;
}

template <typename T>
Tensor<T> gate_product(const Tensor<T>& x, const GateParams<T>& p) {
  if (x.rank() != 4 || x.dim(1) != p.channels()) {
    throw ShapeError("attention gate for " + std::to_string(p.channels()) + " channels got " +
                     shape_str(x.shape()));
  }
  auto hidden = ops::relu(ops::add_channel_bias(ops::conv2d(ops::global_avg_pool(x), p.fc1_w, 1, 0), p.fc1_b));
  auto channel_gate = ops::sigmoid(ops::add_channel_bias(ops::conv2d(hidden, p.fc2_w, 1, 0), p.fc2_b));
  auto spatial_gate =
      ops::sigmoid(ops::add_channel_bias(ops::conv2d(x, p.spatial_w, 1, p.kernel / 2), p.spatial_b));
  return ops::broadcast_mul(ops::broadcast_mul(x, channel_gate), spatial_gate);
}

template <typename T>
Tensor<T> soft_attention_enhance(const Tensor<T>& x, const GateParams<T>& p) {
  return gate_product(x, p);
}

template <typename T>
Tensor<T> gac_enhance(const Tensor<T>& x, const GacParams<T>& p) {
  return ops::add(x, gate_product(x, p));
}

template <typename T>
Tensor<T> gaf_fuse(const Tensor<T>& x, const GafParams<T>& p) {
  return ops::add(x, gate_product(x, p));
}

template <typename T>
PcmParams<T> PcmParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                  int reduction, int gate_ratio, int gate_kernel) {
  if (reduction < 1) throw ConfigError("PCM channel reduction must be >= 1");
  const std::size_t reduced = std::max<std::size_t>(1, channels / static_cast<std::size_t>(reduction));
  PcmParams p;
  p.soft = GateParams<T>::create(store, prefix + ".soft", channels, gate_ratio, gate_kernel);
  p.eta = store.normal_parameter(prefix + ".eta", {reduced, channels, 1, 1}, channels, 1.0);
  // Identity / sqrt(C_l): scaled dot-product affinities at initialization.
  std::vector<T> w(reduced * reduced, T(0));
  for (std::size_t i = 0; i < reduced; ++i) w[i * reduced + i] = static_cast<T>(1.0 / std::sqrt(double(reduced)));
  p.weight = store.add_parameter(prefix + ".weight", Tensor<T>({reduced, reduced, 1, 1}, std::move(w)));
  return p;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> pcm_fuse(const Tensor<T>& p, const Tensor<T>& q, const PcmParams<T>& params) {
  if (p.shape() != q.shape()) {
    throw ShapeError("pcm_fuse needs equal shapes, got " + shape_str(p.shape()) + " and " + shape_str(q.shape()));
  }
  if (p.rank() != 4) throw ShapeError("pcm_fuse expects [B x C x H x W], got " + shape_str(p.shape()));
  const std::size_t batch = p.dim(0), ch = p.dim(1), h = p.dim(2), w = p.dim(3), n = h * w;
  const std::size_t reduced = params.eta.dim(0);

  const auto p_att = soft_attention_enhance(p, params.soft);
  const auto q_att = soft_attention_enhance(q, params.soft);
  const auto eta_p = ops::conv2d(p_att, params.eta, 1, 0);
  const auto eta_q = ops::conv2d(q_att, params.eta, 1, 0);
  const auto w_eta_p = ops::reshape(ops::conv2d(eta_p, params.weight, 1, 0), {batch, reduced, n});
  const auto affinity = ops::bmm(ops::reshape(eta_q, {batch, reduced, n}), w_eta_p, true, false);

  const auto p_flat = ops::reshape(p_att, {batch, ch, n});
  const auto q_flat = ops::reshape(q_att, {batch, ch, n});
  const auto p_hat = ops::bmm(p_flat, ops::softmax(affinity, ops::SoftmaxAxis::Rows));
  const auto q_hat = ops::bmm(q_flat, ops::softmax(affinity, ops::SoftmaxAxis::Cols));
  return {ops::add(p, ops::reshape(p_hat, {batch, ch, h, w})), ops::add(q, ops::reshape(q_hat, {batch, ch, h, w}))};
}

template <typename T>
CcmParams<T> CcmParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                  int gate_ratio, int gate_kernel) {
  CcmParams p;
  p.gac = GateParams<T>::create(store, prefix + ".gac", channels, gate_ratio, gate_kernel);
  p.gaf = GateParams<T>::create(store, prefix + ".gaf", channels, gate_ratio, gate_kernel);
  return p;
}

template <typename T>
Tensor<T> ccm_fuse(const Tensor<T>& left, const Tensor<T>& right, const CcmParams<T>& params, bool use_gac) {
  if (left.shape() != right.shape()) {
    throw ShapeError("ccm_fuse needs equal shapes, got " + shape_str(left.shape()) + " and " +
                     shape_str(right.shape()));
  }
  const auto l = use_gac ? gac_enhance(left, params.gac) : left;
  const auto r = use_gac ? gac_enhance(right, params.gac) : right;
  return gaf_fuse(ops::add(l, r), params.gaf);
}

#define SCFNET_ATTENTION_INSTANTIATE(T)                                                                 \
  template struct GateParams<T>;                                                                        \
  template struct PcmParams<T>;                                                                         \
  template struct CcmParams<T>;                                                                         \
  template Tensor<T> gate_product(const Tensor<T>&, const GateParams<T>&);                              \
  template Tensor<T> soft_attention_enhance(const Tensor<T>&, const GateParams<T>&);                    \
  template Tensor<T> gac_enhance(const Tensor<T>&, const GacParams<T>&);                                \
  template Tensor<T> gaf_fuse(const Tensor<T>&, const GafParams<T>&);                                   \
  template std::pair<Tensor<T>, Tensor<T>> pcm_fuse(const Tensor<T>&, const Tensor<T>&, const PcmParams<T>&); \
  template Tensor<T> ccm_fuse(const Tensor<T>&, const Tensor<T>&, const CcmParams<T>&, bool);

SCFNET_ATTENTION_INSTANTIATE(float)
SCFNET_ATTENTION_INSTANTIATE(double)

}  // namespace scfnet
