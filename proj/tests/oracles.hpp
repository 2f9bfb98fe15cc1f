#pragma once

// Straight-line reference implementations over plain vectors, batch size 1.
// They share no code with the library beyond reading parameter values.

#include <algorithm>
#include <cmath>
#include <vector>

#include "scfnet/attention.hpp"
#include "scfnet/model.hpp"

namespace scfnet::oracle {

struct Map {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;  // c-major, then row y, then column x

  Map() = default;
  Map(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

template <typename T>
Map from_tensor(const Tensor<T>& t) {
  Map m(t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = static_cast<double>(t.at(i));
  return m;
}

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// out[o] = sum_c w[o][c] * in[c] + b[o] at every pixel.
template <typename T>
Map pointwise_linear(const Map& in, const Tensor<T>& w, const Tensor<T>* b) {
  const std::size_t out_c = w.dim(0);
  Map out(out_c, in.h, in.w);
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x) {
        double s = b ? static_cast<double>(b->at(o)) : 0.0;
        for (std::size_t c = 0; c < in.c; ++c) s += w.at(o * in.c + c) * in.at(c, y, x);
        out.at(o, y, x) = s;
      }
  return out;
}

template <typename T>
Map gate(const Map& x, const GateParams<T>& p) {
  std::vector<double> gap(x.c, 0.0);
  for (std::size_t c = 0; c < x.c; ++c) {
    for (std::size_t i = 0; i < x.h * x.w; ++i) gap[c] += x.v[c * x.h * x.w + i];
    gap[c] /= static_cast<double>(x.h * x.w);
  }
  const std::size_t hidden = p.fc1_w.dim(0);
  std::vector<double> hid(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double s = p.fc1_b.at(j);
    for (std::size_t c = 0; c < x.c; ++c) s += p.fc1_w.at(j * x.c + c) * gap[c];
    hid[j] = std::max(0.0, s);
  }
  std::vector<double> chan(x.c);
  for (std::size_t c = 0; c < x.c; ++c) {
    double s = p.fc2_b.at(c);
    for (std::size_t j = 0; j < hidden; ++j) s += p.fc2_w.at(c * hidden + j) * hid[j];
    chan[c] = sig(s);
  }
  const int k = p.kernel, r = k / 2;
  Map out(x.c, x.h, x.w);
  for (std::size_t y = 0; y < x.h; ++y)
    for (std::size_t xx = 0; xx < x.w; ++xx) {
      double s = p.spatial_b.at(0);
      for (std::size_t c = 0; c < x.c; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const long iy = static_cast<long>(y) + ky - r, ix = static_cast<long>(xx) + kx - r;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) || ix >= static_cast<long>(x.w)) continue;
            s += p.spatial_w.at((c * k + ky) * k + kx) * x.at(c, iy, ix);
          }
      const double spatial = sig(s);
      for (std::size_t c = 0; c < x.c; ++c) out.at(c, y, xx) = x.at(c, y, xx) * chan[c] * spatial;
    }
  return out;
}

inline Map plus(const Map& a, const Map& b) {
  Map out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

// Dense matrices for the co-attention: flatten, three products, two softmaxes.
template <typename T>
std::pair<Map, Map> pcm(const Map& p, const Map& q, const PcmParams<T>& params) {
  const Map ps = gate(p, params.soft), qs = gate(q, params.soft);
  const Map ep = pointwise_linear<T>(ps, params.eta, nullptr);
  const Map eq = pointwise_linear<T>(qs, params.eta, nullptr);
  const std::size_t cl = ep.c, n = p.h * p.w;
  // W * eta(P')
  std::vector<double> wep(cl * n, 0.0);
  for (std::size_t i = 0; i < cl; ++i)
    for (std::size_t j = 0; j < cl; ++j)
      for (std::size_t s = 0; s < n; ++s) wep[i * n + s] += params.weight.at(i * cl + j) * ep.v[j * n + s];
  // A = eta(Q')^T (W eta(P'))
  std::vector<double> a(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < cl; ++i) a[r * n + s] += eq.v[i * n + r] * wep[i * n + s];
  std::vector<double> srow(n * n), scol(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    double z = 0;
    for (std::size_t s = 0; s < n; ++s) z += std::exp(a[r * n + s]);
    for (std::size_t s = 0; s < n; ++s) srow[r * n + s] = std::exp(a[r * n + s]) / z;
  }
  for (std::size_t s = 0; s < n; ++s) {
    double z = 0;
    for (std::size_t r = 0; r < n; ++r) z += std::exp(a[r * n + s]);
    for (std::size_t r = 0; r < n; ++r) scol[r * n + s] = std::exp(a[r * n + s]) / z;
  }
  Map phat(p.c, p.h, p.w), qhat(q.c, q.h, q.w);
  for (std::size_t c = 0; c < p.c; ++c)
    for (std::size_t s = 0; s < n; ++s) {
      double sp = 0, sq = 0;
      for (std::size_t r = 0; r < n; ++r) {
        sp += ps.v[c * n + r] * srow[r * n + s];
        sq += qs.v[c * n + r] * scol[r * n + s];
      }
      phat.v[c * n + s] = sp;
      qhat.v[c * n + s] = sq;
    }
  return {plus(p, phat), plus(q, qhat)};
}

// align_corners=false bilinear resampling of every channel.
inline Map upsample(const Map& in, std::size_t oh, std::size_t ow) {
  Map out(in.c, oh, ow);
  auto coord = [](std::size_t i, std::size_t n_in, std::size_t n_out, std::size_t& i0, std::size_t& i1,
                  double& frac) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    if (src < 0) src = 0;
    i0 = std::min(static_cast<std::size_t>(src), n_in - 1);
    i1 = std::min(i0 + 1, n_in - 1);
    frac = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, in.h, oh, y0, y1, fy);
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, in.w, ow, x0, x1, fx);
      for (std::size_t c = 0; c < in.c; ++c) {
        out.at(c, y, x) = (1 - fy) * ((1 - fx) * in.at(c, y0, x0) + fx * in.at(c, y0, x1)) +
                          fy * ((1 - fx) * in.at(c, y1, x0) + fx * in.at(c, y1, x1));
      }
    }
  }
  return out;
}

// F^i -> Linear(C_i, C) -> Upsample(H/4 x W/4) -> Concat -> Linear(4C, C)
// -> Linear(C, 1) -> Upsample(H x W).
template <typename T>
Map decoder(const std::array<Map, 4>& f, const DecoderParams<T>& p, std::size_t out_h, std::size_t out_w) {
  const std::size_t gh = f[0].h, gw = f[0].w;
  std::vector<Map> hat;
  for (std::size_t i = 0; i < 4; ++i) {
    hat.push_back(upsample(pointwise_linear<T>(f[i], p.proj_w[i], &p.proj_b[i]), gh, gw));
  }
  Map cat(4 * hat[0].c, gh, gw);
  for (std::size_t i = 0; i < 4; ++i)
    std::copy(hat[i].v.begin(), hat[i].v.end(), cat.v.begin() + static_cast<long>(i * hat[0].v.size()));
  const Map fused = pointwise_linear<T>(cat, p.fuse_w, &p.fuse_b);
  const Map mask = pointwise_linear<T>(fused, p.pred_w, &p.pred_b);
  return upsample(mask, out_h, out_w);
}

}  // namespace scfnet::oracle
