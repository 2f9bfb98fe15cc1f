#pragma once

#include <string>
#include <utility>

#include "scfnet/params.hpp"
#include "scfnet/tensor.hpp"

namespace scfnet {

/// Channel-and-spatial sigmoid gate shared by soft attention, GAC and GAF.
///
/// channel gate: sigmoid(fc2(relu(fc1(GAP(x)))))  -> [B x C x 1 x 1]
/// spatial gate: sigmoid(conv_kxk(x))               -> [B x 1 x H x W]
/// fc1 reduces C to ceil(C / ratio) (at least 1).
template <typename T>
struct GateParams {
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
  Tensor<T> spatial_w, spatial_b;
  int kernel = 7;

  static GateParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels, int ratio,
                           int kernel);
  std::size_t channels() const { return fc2_w.dim(0); }
};

template <typename T>
using GacParams = GateParams<T>;
template <typename T>
using GafParams = GateParams<T>;

// x * channel_gate(x) * spatial_gate(x)
template <typename T>
Tensor<T> gate_product(const Tensor<T>& x, const GateParams<T>& p);

// The enhanced preliminary attention features P', Q'.
template <typename T>
Tensor<T> soft_attention_enhance(const Tensor<T>& x, const GateParams<T>& p);

// Global-local attention context: x + gate_product(x).
template <typename T>
Tensor<T> gac_enhance(const Tensor<T>& x, const GacParams<T>& p);

// Global-local attention fusion on an already fused map: x + gate_product(x).
template <typename T>
Tensor<T> gaf_fuse(const Tensor<T>& x, const GafParams<T>& p);

/// Parallel co-attention parameters. `eta` projects C channels to
/// C_l = C / reduction; `weight` is the C_l x C_l bilinear form, stored as a
/// 1x1 kernel so it applies per position.
template <typename T>
struct PcmParams {
  GateParams<T> soft;
  Tensor<T> eta;     // [C_l x C x 1 x 1]
  Tensor<T> weight;  // [C_l x C_l x 1 x 1]

  static PcmParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                          int reduction, int gate_ratio, int gate_kernel);
};

/// Co-attention between two same-shaped maps.
///
/// With P', Q' the soft-attention outputs flattened to [C x N] (N = H*W,
/// row-major over y then x):
///   A   = eta(Q')^T W eta(P')        [N x N]
///   P^  = P' softmax_rows(A)
///   Q^  = Q' softmax_cols(A)
/// returns (P + P^, Q + Q^) reshaped to the input shape.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> pcm_fuse(const Tensor<T>& p, const Tensor<T>& q, const PcmParams<T>& params);

template <typename T>
struct CcmParams {
  GacParams<T> gac;
  GafParams<T> gaf;

  static CcmParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels, int gate_ratio,
                          int gate_kernel);
};

// gaf(gac(left) + gac(right)); with use_gac = false the gac terms are
// replaced by their inputs.
template <typename T>
Tensor<T> ccm_fuse(const Tensor<T>& left, const Tensor<T>& right, const CcmParams<T>& params,
                   bool use_gac = true);

}  // namespace scfnet
