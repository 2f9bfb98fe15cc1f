#include "scfnet/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace scfnet::ops {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string pair_str(const Shape& a, const Shape& b) {
  return shape_str(a) + " and " + shape_str(b);
}

// C[m x n] (+)= op(A) * B, op(A) = A or A^T. A is m x k, or k x m when
// transposed; B is k x n. The inner loop runs along contiguous rows of B and C.
template <typename T>
void gemm_rowmajor(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
                   bool trans_a, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  if (!trans_a) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = a[p * m + i];
        if (av == T(0)) continue;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, std::vector<T>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// General C = op(A) op(B) for row-major storage.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k, bool trans_a,
          bool trans_b, bool accumulate) {
  if (!trans_b) {
    gemm_rowmajor(a, b, c, m, n, k, trans_a, accumulate);
    return;
  }
  std::vector<T> bt;
  transpose_into(b, n, k, bt);
  gemm_rowmajor(a, bt.data(), c, m, n, k, trans_a, accumulate);
}

struct ConvGeom {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw, out_h, out_w;
  int stride, pad;
  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
  bool trivial() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t ohw = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * ohw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = xc + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
  const std::size_t ohw = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * ohw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = xc + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// Shape with four axes, padding leading ones.
std::array<std::size_t, 4> as4(const Shape& s) {
  std::array<std::size_t, 4> out{1, 1, 1, 1};
  const std::size_t off = 4 - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) out[off + i] = s[i];
  return out;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 operands, got " +
                                              pair_str(a.shape(), b.shape()));
  require(a.dim(1) == b.dim(0), "matmul inner dimensions disagree: " + pair_str(a.shape(), b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  gemm(a.data().data(), b.data().data(), out.data(), m, n, k, false, false, false);
  Tensor<T> res({m, n}, std::move(out));
  auto ai = a.impl(), bi = b.impl();
  detail::record_op<T>("matmul", {&a, &b}, res, [ai, bi, m, n, k](std::span<const T> g) {
    if (ai->requires_grad) {
      std::vector<T> ga(m * k);
      gemm(g.data(), bi->data.data(), ga.data(), m, k, n, false, true, false);
      detail::accumulate_grad<T>(*ai, ga);
    }
    if (bi->requires_grad) {
      std::vector<T> gb(k * n);
      gemm(ai->data.data(), g.data(), gb.data(), k, n, m, true, false, false);
      detail::accumulate_grad<T>(*bi, gb);
    }
  });
  return res;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  require(a.rank() == 3 && b.rank() == 3,
          "bmm expects rank-3 operands, got " + pair_str(a.shape(), b.shape()));
  require(a.dim(0) == b.dim(0), "bmm batch sizes disagree: " + pair_str(a.shape(), b.shape()));
  const std::size_t batch = a.dim(0);
  const std::size_t m = trans_a ? a.dim(2) : a.dim(1);
  const std::size_t k = trans_a ? a.dim(1) : a.dim(2);
  const std::size_t kb = trans_b ? b.dim(2) : b.dim(1);
  const std::size_t n = trans_b ? b.dim(1) : b.dim(2);
  require(k == kb, "bmm inner dimensions disagree: " + pair_str(a.shape(), b.shape()));
  std::vector<T> out(batch * m * n);
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(ad + i * m * k, bd + i * k * n, out.data() + i * m * n, m, n, k, trans_a, trans_b, false);
  }
  Tensor<T> res({batch, m, n}, std::move(out));
  auto ai = a.impl(), bi = b.impl();
  detail::record_op<T>("bmm", {&a, &b}, res,
                       [ai, bi, batch, m, n, k, trans_a, trans_b](std::span<const T> g) {
    // C = op(A) op(B): dop(A) = G op(B)^T, dop(B) = op(A)^T G.
    if (ai->requires_grad) {
      std::vector<T> ga(batch * m * k);
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gi = g.data() + i * m * n;
        const T* bb = bi->data.data() + i * k * n;
        T* dst = ga.data() + i * m * k;
        if (!trans_a) {
          // dA[m x k] = G[m x n] op(B)^T
          gemm(gi, bb, dst, m, k, n, false, !trans_b, false);
        } else {
          // A stored k x m: dA = op(B) G^T, i.e. [k x n][n x m]
          gemm(bb, gi, dst, k, m, n, trans_b, true, false);
        }
      }
      detail::accumulate_grad<T>(*ai, ga);
    }
    if (bi->requires_grad) {
      std::vector<T> gb(batch * k * n);
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gi = g.data() + i * m * n;
        const T* aa = ai->data.data() + i * m * k;
        T* dst = gb.data() + i * k * n;
        if (!trans_b) {
          // dB[k x n] = op(A)^T G
          gemm(aa, gi, dst, k, n, m, !trans_a, false, false);
        } else {
          // B stored n x k: dB = G^T op(A), i.e. [n x m][m x k]
          gemm(gi, aa, dst, n, k, m, true, trans_a, false);
        }
      }
      detail::accumulate_grad<T>(*bi, gb);
    }
  });
  return res;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, SoftmaxAxis axis) {
  require(a.rank() == 2 || a.rank() == 3,
          "softmax expects a rank-2 or rank-3 tensor, got " + shape_str(a.shape()));
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t rows = a.dim(a.rank() - 2), cols = a.dim(a.rank() - 1);
  // Slices of `len` elements spaced `step` apart; `count` slices per matrix.
  const bool along_rows = axis == SoftmaxAxis::Rows;
  const std::size_t len = along_rows ? cols : rows;
  const std::size_t step = along_rows ? 1 : cols;
  const std::size_t count = along_rows ? rows : cols;
  const std::size_t slice_stride = along_rows ? cols : 1;

  const auto& x = a.vec();
  std::vector<T> y(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t off = base + s * slice_stride;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[off + i * step]);
      T total = 0;
      for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(x[off + i * step] - mx);
        y[off + i * step] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) y[off + i * step] /= total;
    }
  }
  Tensor<T> res(a.shape(), std::move(y));
  auto ai = a.impl();
  auto yi = res.impl();
  std::weak_ptr<TensorImpl<T>> yw = yi;
  detail::record_op<T>("softmax", {&a}, res,
                       [ai, yw, batch, rows, cols, len, step, count, slice_stride](std::span<const T> g) {
    auto yl = yw.lock();
    const auto& yv = yl->data;
    std::vector<T> gx(yv.size());
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * rows * cols;
      for (std::size_t s = 0; s < count; ++s) {
        const std::size_t off = base + s * slice_stride;
        T dot = 0;
        for (std::size_t i = 0; i < len; ++i) dot += g[off + i * step] * yv[off + i * step];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t p = off + i * step;
          gx[p] = yv[p] * (g[p] - dot);
        }
      }
    }
    detail::accumulate_grad<T>(*ai, gx);
  });
  return res;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  require(x.rank() == 4 && w.rank() == 4,
          "conv2d expects rank-4 input and kernel, got " + pair_str(x.shape(), w.shape()));
  if (stride < 1 || pad < 0) throw ArgumentError("conv2d needs stride >= 1 and pad >= 0");
  require(x.dim(1) == w.dim(1),
          "conv2d channel mismatch between input and kernel: " + pair_str(x.shape(), w.shape()));
  ConvGeom geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0, stride, pad};
  const std::size_t ph = geo.height + 2 * static_cast<std::size_t>(pad);
  const std::size_t pw = geo.width + 2 * static_cast<std::size_t>(pad);
  require(geo.kh <= ph && geo.kw <= pw,
          "conv2d kernel larger than padded input: " + pair_str(x.shape(), w.shape()));
  geo.out_h = (ph - geo.kh) / static_cast<std::size_t>(stride) + 1;
  geo.out_w = (pw - geo.kw) / static_cast<std::size_t>(stride) + 1;

  const std::size_t in_sz = geo.channels * geo.height * geo.width;
  const std::size_t out_sz = geo.out_channels * geo.col_cols();
  std::vector<T> out(geo.batch * out_sz);
  std::vector<T> col(geo.trivial() ? 0 : geo.col_rows() * geo.col_cols());
  for (std::size_t b = 0; b < geo.batch; ++b) {
    const T* xb = x.data().data() + b * in_sz;
    const T* cb = xb;
    if (!geo.trivial()) {
      im2col(xb, geo, col.data());
      cb = col.data();
    }
    gemm(w.data().data(), cb, out.data() + b * out_sz, geo.out_channels, geo.col_cols(),
         geo.col_rows(), false, false, false);
  }
  Tensor<T> res({geo.batch, geo.out_channels, geo.out_h, geo.out_w}, std::move(out));
  auto xi = x.impl(), wi = w.impl();
  detail::record_op<T>("conv2d", {&x, &w}, res, [xi, wi, geo, in_sz, out_sz](std::span<const T> g) {
    std::vector<T> gx, gw;
    if (xi->requires_grad) gx.assign(xi->data.size(), T(0));
    if (wi->requires_grad) gw.assign(wi->data.size(), T(0));
    std::vector<T> col(geo.trivial() ? 0 : geo.col_rows() * geo.col_cols());
    std::vector<T> gcol(geo.col_rows() * geo.col_cols());
    for (std::size_t b = 0; b < geo.batch; ++b) {
      const T* gb = g.data() + b * out_sz;
      if (wi->requires_grad) {
        const T* cb = xi->data.data() + b * in_sz;
        if (!geo.trivial()) {
          im2col(cb, geo, col.data());
          cb = col.data();
        }
        gemm(gb, cb, gw.data(), geo.out_channels, geo.col_rows(), geo.col_cols(), false, true, true);
      }
      if (xi->requires_grad) {
        gemm(wi->data.data(), gb, gcol.data(), geo.col_rows(), geo.col_cols(), geo.out_channels, true,
             false, false);
        T* gxb = gx.data() + b * in_sz;
        if (geo.trivial()) {
          for (std::size_t i = 0; i < in_sz; ++i) gxb[i] += gcol[i];
        } else {
          col2im_add(gcol.data(), geo, gxb);
        }
      }
    }
    if (xi->requires_grad) detail::accumulate_grad<T>(*xi, gx);
    if (wi->requires_grad) detail::accumulate_grad<T>(*wi, gw);
  });
  return res;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require(x.rank() == 4 && bias.rank() == 1 && bias.dim(0) == x.dim(1),
          "add_channel_bias expects [B x C x H x W] and [C], got " + pair_str(x.shape(), bias.shape()));
  const std::size_t batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.vec());
  const auto& bv = bias.vec();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      T* p = out.data() + (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bv[c];
    }
  Tensor<T> res(x.shape(), std::move(out));
  auto xi = x.impl(), bi = bias.impl();
  detail::record_op<T>("add_channel_bias", {&x, &bias}, res, [xi, bi, batch, ch, hw](std::span<const T> g) {
    detail::accumulate_grad<T>(*xi, g);
    if (bi->requires_grad) {
      std::vector<T> gb(ch, T(0));
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          const T* p = g.data() + (b * ch + c) * hw;
          T s = 0;
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
          gb[c] += s;
        }
      detail::accumulate_grad<T>(*bi, gb);
    }
  });
  return res;
}

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, PointwiseFn fn, T constant) {
  const auto& xv = x.vec();
  std::vector<T> y(xv.size());
  switch (fn) {
    case PointwiseFn::Relu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
    case PointwiseFn::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_scalar(xv[i]);
      break;
    case PointwiseFn::AddConst:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + constant;
      break;
    case PointwiseFn::Scale:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * constant;
      break;
  }
  Tensor<T> res(x.shape(), std::move(y));
  auto xi = x.impl();
  std::weak_ptr<TensorImpl<T>> yw = res.impl();
  detail::record_op<T>("pointwise", {&x}, res, [xi, yw, fn, constant](std::span<const T> g) {
    std::vector<T> gx(g.size());
    switch (fn) {
      case PointwiseFn::Relu:
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = xi->data[i] > T(0) ? g[i] : T(0);
        break;
      case PointwiseFn::Sigmoid: {
        const auto& yv = yw.lock()->data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * yv[i] * (T(1) - yv[i]);
        break;
      }
      case PointwiseFn::AddConst:
        std::copy(g.begin(), g.end(), gx.begin());
        break;
      case PointwiseFn::Scale:
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * constant;
        break;
    }
    detail::accumulate_grad<T>(*xi, gx);
  });
  return res;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return pointwise(x, PointwiseFn::Relu);
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return pointwise(x, PointwiseFn::Sigmoid);
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return pointwise(x, PointwiseFn::AddConst, c);
}
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return pointwise(x, PointwiseFn::Scale, c);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add needs identical shapes, got " + pair_str(a.shape(), b.shape()));
  std::vector<T> y(a.vec());
  const auto& bv = b.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  Tensor<T> res(a.shape(), std::move(y));
  auto ai = a.impl(), bi = b.impl();
  detail::record_op<T>("add", {&a, &b}, res, [ai, bi](std::span<const T> g) {
    detail::accumulate_grad<T>(*ai, g);
    detail::accumulate_grad<T>(*bi, g);
  });
  return res;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul needs identical shapes, got " + pair_str(a.shape(), b.shape()));
  std::vector<T> y(a.vec());
  const auto& bv = b.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  Tensor<T> res(a.shape(), std::move(y));
  auto ai = a.impl(), bi = b.impl();
  detail::record_op<T>("mul", {&a, &b}, res, [ai, bi](std::span<const T> g) {
    if (ai->requires_grad) {
      std::vector<T> ga(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bi->data[i];
      detail::accumulate_grad<T>(*ai, ga);
    }
    if (bi->requires_grad) {
      std::vector<T> gb(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * ai->data[i];
      detail::accumulate_grad<T>(*bi, gb);
    }
  });
  return res;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ArgumentError("concat of an empty list");
  const Shape& first = xs.front().shape();
  require(axis < first.size(), "concat axis " + std::to_string(axis) + " out of range for " +
                                   shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    require(t.rank() == first.size(), "concat rank mismatch: " + pair_str(first, t.shape()));
    for (std::size_t d = 0; d < first.size(); ++d) {
      require(d == axis || t.dim(d) == first[d],
              "concat shapes differ off the join axis: " + pair_str(first, t.shape()));
    }
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<T> y(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t row = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.data().data() + o * row, row, y.data() + o * out_row + off);
    }
    off += row;
  }
  Tensor<T> res(out_shape, std::move(y));
  std::vector<std::shared_ptr<TensorImpl<T>>> impls;
  std::vector<std::size_t> rows;
  for (const auto& t : xs) {
    impls.push_back(t.impl());
    rows.push_back(t.dim(axis) * inner);
  }
  detail::record_op<T>("concat", xs, res, [impls, rows, offsets, outer, out_row](std::span<const T> g) {
    for (std::size_t k = 0; k < impls.size(); ++k) {
      if (!impls[k]->requires_grad) continue;
      std::vector<T> gk(outer * rows[k]);
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(g.data() + o * out_row + offsets[k], rows[k], gk.data() + o * rows[k]);
      }
      detail::accumulate_grad<T>(*impls[k], gk);
    }
  });
  return res;
}

template <typename T>
Tensor<T> combine(const std::vector<Tensor<T>>& xs, CombineMode mode, std::size_t axis) {
  if (xs.empty()) throw ArgumentError("combine of an empty list");
  if (mode == CombineMode::Concat) return concat(xs, axis);
  Tensor<T> acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    acc = mode == CombineMode::Add ? add(acc, xs[i]) : mul(acc, xs[i]);
  }
  return acc;
}

template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& gate) {
  require(x.rank() == gate.rank() && x.rank() <= 4,
          "broadcast_mul needs equal ranks <= 4, got " + pair_str(x.shape(), gate.shape()));
  for (std::size_t d = 0; d < x.rank(); ++d) {
    require(gate.dim(d) == x.dim(d) || gate.dim(d) == 1,
            "broadcast_mul gate not broadcastable: " + pair_str(x.shape(), gate.shape()));
  }
  const auto xs = as4(x.shape());
  const auto gs = as4(gate.shape());
  std::array<std::size_t, 4> gstride{};
  {
    std::size_t s = 1;
    for (int d = 3; d >= 0; --d) {
      gstride[d] = gs[d] == 1 ? 0 : s;
      s *= gs[d];
    }
  }
  auto for_each = [xs, gstride](auto&& fn) {
    std::size_t flat = 0;
    for (std::size_t i0 = 0; i0 < xs[0]; ++i0)
      for (std::size_t i1 = 0; i1 < xs[1]; ++i1)
        for (std::size_t i2 = 0; i2 < xs[2]; ++i2) {
          const std::size_t gbase = i0 * gstride[0] + i1 * gstride[1] + i2 * gstride[2];
          for (std::size_t i3 = 0; i3 < xs[3]; ++i3, ++flat) fn(flat, gbase + i3 * gstride[3]);
        }
  };
  std::vector<T> y(x.numel());
  const auto& xv = x.vec();
  const auto& gv = gate.vec();
  for_each([&](std::size_t i, std::size_t j) { y[i] = xv[i] * gv[j]; });
  Tensor<T> res(x.shape(), std::move(y));
  auto xi = x.impl(), gi = gate.impl();
  detail::record_op<T>("broadcast_mul", {&x, &gate}, res, [xi, gi, for_each](std::span<const T> g) {
    if (xi->requires_grad) {
      std::vector<T> gx(g.size());
      for_each([&](std::size_t i, std::size_t j) { gx[i] = g[i] * gi->data[j]; });
      detail::accumulate_grad<T>(*xi, gx);
    }
    if (gi->requires_grad) {
      std::vector<T> gg(gi->data.size(), T(0));
      for_each([&](std::size_t i, std::size_t j) { gg[j] += g[i] * xi->data[i]; });
      detail::accumulate_grad<T>(*gi, gg);
    }
  });
  return res;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require(x.rank() == 4, "global_avg_pool expects [B x C x H x W], got " + shape_str(x.shape()));
  const std::size_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> y(bc);
  const auto& xv = x.vec();
  for (std::size_t i = 0; i < bc; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += xv[i * hw + j];
    y[i] = s / static_cast<T>(hw);
  }
  Tensor<T> res({x.dim(0), x.dim(1), 1, 1}, std::move(y));
  auto xi = x.impl();
  detail::record_op<T>("global_avg_pool", {&x}, res, [xi, bc, hw](std::span<const T> g) {
    std::vector<T> gx(bc * hw);
    for (std::size_t i = 0; i < bc; ++i) {
      const T v = g[i] / static_cast<T>(hw);
      std::fill_n(gx.data() + i * hw, hw, v);
    }
    detail::accumulate_grad<T>(*xi, gx);
  });
  return res;
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad) {
  require(x.rank() == 4, "max_pool2d expects [B x C x H x W], got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel) {
    throw ArgumentError("max_pool2d needs kernel >= 1, stride >= 1, 0 <= pad < kernel");
  }
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  require(static_cast<std::size_t>(kernel) <= h + 2 * pad && static_cast<std::size_t>(kernel) <= w + 2 * pad,
          "max_pool2d window larger than padded input " + shape_str(x.shape()));
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kernel) / stride + 1;
  std::vector<T> y(bc * oh * ow);
  std::vector<std::size_t> argmax(y.size());
  const auto& xv = x.vec();
  for (std::size_t p = 0; p < bc; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        for (int ki = 0; ki < kernel; ++ki) {
          const long iy = static_cast<long>(oy) * stride - pad + ki;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const long ix = static_cast<long>(ox) * stride - pad + kj;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = p * h * w + iy * w + ix;
            if (xv[idx] > best) {
              best = xv[idx];
              best_i = idx;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        y[o] = best;
        argmax[o] = best_i;
      }
  }
  Tensor<T> res({x.dim(0), x.dim(1), oh, ow}, std::move(y));
  auto xi = x.impl();
  detail::record_op<T>("max_pool2d", {&x}, res, [xi, argmax = std::move(argmax)](std::span<const T> g) {
    std::vector<T> gx(xi->data.size(), T(0));
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
    detail::accumulate_grad<T>(*xi, gx);
  });
  return res;
}

namespace {

struct LerpAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;  // weight of `hi`
};

LerpAxis lerp_axis(std::size_t in, std::size_t out) {
  LerpAxis ax;
  ax.lo.resize(out);
  ax.hi.resize(out);
  ax.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    ax.lo[i] = lo;
    ax.hi[i] = std::min(lo + 1, in - 1);
    ax.frac[i] = src - static_cast<double>(lo);
    if (ax.hi[i] == lo) ax.frac[i] = 0;
  }
  return ax;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require(x.rank() == 4, "bilinear_upsample expects [B x C x H x W], got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw ArgumentError("bilinear_upsample target dims must be positive");
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < h || out_w < w) {
    throw ArgumentError("bilinear_upsample cannot shrink " + shape_str(x.shape()) + " to " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto ry = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
  auto rx = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
  std::vector<T> y(bc * out_h * out_w);
  const auto& xv = x.vec();
  for (std::size_t p = 0; p < bc; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = y.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ry->frac[oy]);
      const T* r0 = src + ry->lo[oy] * w;
      const T* r1 = src + ry->hi[oy] * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(rx->frac[ox]);
        const std::size_t x0 = rx->lo[ox], x1 = rx->hi[ox];
        const T top = r0[x0] * (T(1) - fx) + r0[x1] * fx;
        const T bot = r1[x0] * (T(1) - fx) + r1[x1] * fx;
        dst[oy * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  Tensor<T> res({x.dim(0), x.dim(1), out_h, out_w}, std::move(y));
  auto xi = x.impl();
  detail::record_op<T>("bilinear_upsample", {&x}, res, [xi, ry, rx, bc, h, w, out_h, out_w](std::span<const T> g) {
    std::vector<T> gx(bc * h * w, T(0));
    for (std::size_t p = 0; p < bc; ++p) {
      const T* gs = g.data() + p * out_h * out_w;
      T* dst = gx.data() + p * h * w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T fy = static_cast<T>(ry->frac[oy]);
        T* r0 = dst + ry->lo[oy] * w;
        T* r1 = dst + ry->hi[oy] * w;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const T fx = static_cast<T>(rx->frac[ox]);
          const std::size_t x0 = rx->lo[ox], x1 = rx->hi[ox];
          const T v = gs[oy * out_w + ox];
          r0[x0] += v * (T(1) - fy) * (T(1) - fx);
          r0[x1] += v * (T(1) - fy) * fx;
          r1[x0] += v * fy * (T(1) - fx);
          r1[x1] += v * fy * fx;
        }
      }
    }
    detail::accumulate_grad<T>(*xi, gx);
  });
  return res;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape cannot map " + shape_str(x.shape()) + " onto " + shape_str(shape));
  Tensor<T> res(std::move(shape), x.vec());
  auto xi = x.impl();
  detail::record_op<T>("reshape", {&x}, res, [xi](std::span<const T> g) { detail::accumulate_grad<T>(*xi, g); });
  return res;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  auto res = Tensor<T>::scalar(s);
  auto xi = x.impl();
  detail::record_op<T>("sum", {&x}, res, [xi](std::span<const T> g) {
    detail::accumulate_grad<T>(*xi, std::vector<T>(xi->data.size(), g[0]));
  });
  return res;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           double eps, BatchStats* stats) {
  require(x.rank() == 4, "batch_norm expects [B x C x H x W], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch},
          "batch_norm affine params must be [" + std::to_string(ch) + "], got " +
              pair_str(gamma.shape(), beta.shape()));
  const std::size_t count = batch * hw;
  const auto& xv = x.vec();
  std::vector<T> xhat(xv.size());
  std::vector<T> invstd(ch);
  std::vector<T> y(xv.size());
  if (stats) {
    stats->mean.assign(ch, 0);
    stats->var.assign(ch, 0);
    stats->count = count;
  }
  for (std::size_t c = 0; c < ch; ++c) {
    T m = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = xv.data() + (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) m += p[i];
    }
    m /= static_cast<T>(count);
    T v = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = xv.data() + (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
    }
    v /= static_cast<T>(count);
    invstd[c] = T(1) / std::sqrt(v + static_cast<T>(eps));
    if (stats) {
      stats->mean[c] = static_cast<double>(m);
      stats->var[c] = static_cast<double>(v);
    }
    const T gm = gamma.vec()[c], bt = beta.vec()[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[off + i] = (xv[off + i] - m) * invstd[c];
        y[off + i] = gm * xhat[off + i] + bt;
      }
    }
  }
  Tensor<T> res(x.shape(), std::move(y));
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  detail::record_op<T>("batch_norm_train", {&x, &gamma, &beta}, res,
                       [xi, gi, bi, xhat = std::move(xhat), invstd = std::move(invstd), batch, ch, hw,
                        count](std::span<const T> g) {
    std::vector<T> gx(xhat.size()), gg(ch, T(0)), gb(ch, T(0));
    for (std::size_t c = 0; c < ch; ++c) {
      T sum_g = 0, sum_gx = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * ch + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_g += g[off + i];
          sum_gx += g[off + i] * xhat[off + i];
        }
      }
      gg[c] = sum_gx;
      gb[c] = sum_g;
      const T gm = gi->data[c];
      const T k = gm * invstd[c] / static_cast<T>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * ch + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          gx[off + i] = k * (static_cast<T>(count) * g[off + i] - sum_g - xhat[off + i] * sum_gx);
        }
      }
    }
    detail::accumulate_grad<T>(*xi, gx);
    detail::accumulate_grad<T>(*gi, gg);
    detail::accumulate_grad<T>(*bi, gb);
  });
  return res;
}

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           std::span<const T> mean_in, std::span<const T> var_in, double eps) {
  require(x.rank() == 4, "batch_norm expects [B x C x H x W], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch} && mean_in.size() == ch &&
              var_in.size() == ch,
          "batch_norm parameters do not match " + std::to_string(ch) + " channels");
  std::vector<T> invstd(ch), mu(mean_in.begin(), mean_in.end());
  for (std::size_t c = 0; c < ch; ++c) invstd[c] = T(1) / std::sqrt(var_in[c] + static_cast<T>(eps));
  const auto& xv = x.vec();
  std::vector<T> y(xv.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * hw;
      const T a = gamma.vec()[c] * invstd[c];
      const T sh = beta.vec()[c] - a * mu[c];
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = a * xv[off + i] + sh;
    }
  Tensor<T> res(x.shape(), std::move(y));
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  detail::record_op<T>("batch_norm_infer", {&x, &gamma, &beta}, res,
                       [xi, gi, bi, invstd, mu, batch, ch, hw](std::span<const T> g) {
    std::vector<T> gx(g.size()), gg(ch, T(0)), gb(ch, T(0));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (b * ch + c) * hw;
        const T a = gi->data[c] * invstd[c];
        for (std::size_t i = 0; i < hw; ++i) {
          gx[off + i] = a * g[off + i];
          gg[c] += g[off + i] * (xi->data[off + i] - mu[c]) * invstd[c];
          gb[c] += g[off + i];
        }
      }
    detail::accumulate_grad<T>(*xi, gx);
    detail::accumulate_grad<T>(*gi, gg);
    detail::accumulate_grad<T>(*bi, gb);
  });
  return res;
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  require(logits.shape() == target.shape(),
          "bce_with_logits shape mismatch: " + pair_str(logits.shape(), target.shape()));
  const auto& z = logits.vec();
  const auto& y = target.vec();
  T total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(y[i] >= T(0) && y[i] <= T(1))) throw ArgumentError("bce_with_logits targets must lie in [0, 1]");
    total += std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const T n = static_cast<T>(z.size());
  auto res = Tensor<T>::scalar(total / n);
  auto zi = logits.impl(), yi = target.impl();
  detail::record_op<T>("bce_with_logits", {&logits}, res, [zi, yi, n](std::span<const T> g) {
    std::vector<T> gz(zi->data.size());
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] = g[0] * (sigmoid_scalar(zi->data[i]) - yi->data[i]) / n;
    detail::accumulate_grad<T>(*zi, gz);
  });
  return res;
}

#define SCFNET_OPS_INSTANTIATE(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool, bool);                           \
  template Tensor<T> softmax(const Tensor<T>&, SoftmaxAxis);                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                          \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> pointwise(const Tensor<T>&, PointwiseFn, T);                                   \
  template Tensor<T> relu(const Tensor<T>&);                                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                                    \
  template Tensor<T> combine(const std::vector<Tensor<T>>&, CombineMode, std::size_t);              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                            \
  template Tensor<T> broadcast_mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                             \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                                   \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                         \
  template Tensor<T> mean(const Tensor<T>&);                                                        \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, \
                                      BatchStats*);                                                 \
  template Tensor<T> batch_norm_infer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                      std::span<const T>, std::span<const T>, double);              \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);

SCFNET_OPS_INSTANTIATE(float)
SCFNET_OPS_INSTANTIATE(double)

}  // namespace scfnet::ops
