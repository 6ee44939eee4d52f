#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "attrnet/graph.hpp"
#include "attrnet/tensor.hpp"

namespace attrnet {

enum class Mode { train, eval };

namespace ops {
namespace detail {

template <class T>
Tensor<T> make_output(Shape shape, bool tracked) {
  Tensor<T> out(std::move(shape));
  if (tracked) out.set_requires_grad(true);
  return out;
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) +
                         " input, got " + shape_string(s));
  }
}

/// out[i] += a * x[i]
template <class T>
inline void axpy(std::size_t n, T a, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a * x[i];
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t k() const { return c * kh * kw; }
  std::size_t p() const { return oh * ow; }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride,
                                  std::size_t pad, const char* op) {
  require_rank(op, x, 4);
  require_rank(op, w, 4);
  if (stride == 0) throw ContractError(std::string(op) + ": stride must be positive");
  if (w[1] != x[1]) {
    throw DimensionError(std::string(op) + ": weight " + shape_string(w) +
                         " does not match input channels of " + shape_string(x));
  }
  if (w[2] > x[2] + 2 * pad || w[3] > x[3] + 2 * pad) {
    throw DimensionError(std::string(op) + ": kernel " + shape_string(w) +
                         " larger than padded input " + shape_string(x) + " with pad " +
                         std::to_string(pad));
  }
  ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], stride, pad, 0, 0};
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

/// Unfolds one [C,H,W] image into a [C*kh*kw, OH*OW] matrix; padding reads as 0.
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

/// Scatter-adds a [C*kh*kw, OH*OW] column gradient back into [C,H,W].
template <class T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Output spatial size of a conv/pool window.
inline std::size_t window_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Graph<T>* g = nullptr) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool tracked = tracks(g, {&a, &b});
  auto out = detail::make_output<T>({m, n}, tracked);
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.mutable_ptr();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) detail::axpy(n, pa[i * k + p], pb + p * n, po + i * n);
  }
  if (tracked) {
    g->record("matmul", {a, b}, out, [a, b, out, m, k, n]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        // da = g * b^T
        auto ga = a.grad();
        const T* pb = b.ptr();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T s{0};
            for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * pb[p * n + j];
            ga[i * k + p] += s;
          }
        }
      }
      if (b.requires_grad()) {
        // db = a^T * g
        auto gb = b.grad();
        const T* pa = a.ptr();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            detail::axpy(n, pa[i * k + p], go.data() + i * n, gb.data() + p * n);
          }
        }
      }
    });
  }
  return out;
}

/// Elementwise sum. `b` may also be rank 1 and broadcast along dimension 1
/// of `a` (channel bias for NCHW, column bias for [N,K]).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Graph<T>* g = nullptr) {
  const bool same = a.shape() == b.shape();
  const bool channel = !same && b.rank() == 1 && a.rank() >= 2 && a.dim(1) == b.dim(0);
  if (!same && !channel) {
    throw DimensionError("add shape mismatch: " + shape_string(a.shape()) + " + " +
                         shape_string(b.shape()));
  }
  const bool tracked = tracks(g, {&a, &b});
  auto out = detail::make_output<T>(a.shape(), tracked);
  const std::size_t outer = channel ? a.dim(0) : 1;
  const std::size_t chans = channel ? a.dim(1) : 1;
  const std::size_t inner = channel ? a.numel() / (outer * chans) : a.numel();
  {
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.mutable_ptr();
    if (same) {
      for (std::size_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
    } else {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t c = 0; c < chans; ++c) {
          const std::size_t base = (o * chans + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) po[base + i] = pa[base + i] + pb[c];
        }
    }
  }
  if (tracked) {
    g->record("add", {a, b}, out, [a, b, out, same, outer, chans, inner]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        if (same) {
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        } else {
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t c = 0; c < chans; ++c) {
              const std::size_t base = (o * chans + c) * inner;
              T s{0};
              for (std::size_t i = 0; i < inner; ++i) s += go[base + i];
              gb[c] += s;
            }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Graph<T>* g = nullptr) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  const bool tracked = tracks(g, {&a, &b});
  auto out = detail::make_output<T>(a.shape(), tracked);
  for (std::size_t i = 0; i < a.numel(); ++i) out.mutable_ptr()[i] = a[i] * b[i];
  if (tracked) {
    g->record("mul", {a, b}, out, [a, b, out]() mutable {
      auto go = out.grad();
      // Read both inputs before accumulating: a and b may be the same tensor.
      const std::vector<T> va(a.data().begin(), a.data().end());
      const std::vector<T> vb(b.data().begin(), b.data().end());
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
      }
    });
  }
  return out;
}

/// Sum of all elements as a [1] tensor.
template <class T>
Tensor<T> sum(const Tensor<T>& x, Graph<T>* g = nullptr) {
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>({1}, tracked);
  T s{0};
  for (T v : x.data()) s += v;
  out.mutable_ptr()[0] = s;
  if (tracked) {
    g->record("sum", {x}, out, [x, out]() mutable {
      const T go = out.grad()[0];
      if (!x.requires_grad()) return;
      for (auto& v : x.grad()) v += go;
    });
  }
  return out;
}

/// max(x, 0); the derivative at exactly 0 is taken as 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x, Graph<T>* g = nullptr) {
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>(x.shape(), tracked);
  const T* px = x.ptr();
  T* po = out.mutable_ptr();
  for (std::size_t i = 0; i < x.numel(); ++i) po[i] = px[i] > T{0} ? px[i] : T{0};
  if (tracked) {
    g->record("relu", {x}, out, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      const T* px = x.ptr();
      for (std::size_t i = 0; i < go.size(); ++i)
        if (px[i] > T{0}) gx[i] += go[i];
    });
  }
  return out;
}

template <class T>
inline T sigmoid_scalar(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x, Graph<T>* g = nullptr) {
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>(x.shape(), tracked);
  for (std::size_t i = 0; i < x.numel(); ++i) out.mutable_ptr()[i] = sigmoid_scalar(x[i]);
  if (tracked) {
    g->record("sigmoid", {x}, out, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const T y = out[i];
        gx[i] += go[i] * y * (T{1} - y);
      }
    });
  }
  return out;
}

/// Row-wise softmax of a [N,K] tensor, computed with the row max subtracted.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x, Graph<T>* g = nullptr) {
  if (x.rank() != 2) throw DimensionError("softmax_rows expects rank 2, got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), k = x.dim(1);
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>(x.shape(), tracked);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.ptr() + i * k;
    T* dst = out.mutable_ptr() + i * k;
    const T mx = *std::max_element(row, row + k);
    T s{0};
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - mx);
      s += dst[j];
    }
    for (std::size_t j = 0; j < k; ++j) dst[j] /= s;
  }
  if (tracked) {
    g->record("softmax_rows", {x}, out, [x, out, n, k]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < n; ++i) {
        T dot{0};
        for (std::size_t j = 0; j < k; ++j) dot += go[i * k + j] * out[i * k + j];
        for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += out[i * k + j] * (go[i * k + j] - dot);
      }
    });
  }
  return out;
}

/// Max pooling over NCHW; padded cells never win. Ties go to the first
/// position in row-major window order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad = 0,
                    Graph<T>* g = nullptr) {
  detail::require_rank("maxpool2d", x.shape(), 4);
  if (kernel == 0 || stride == 0) throw ContractError("maxpool2d: kernel and stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kernel > H + 2 * pad || kernel > W + 2 * pad) {
    throw DimensionError("maxpool2d: window " + std::to_string(kernel) + " larger than padded input " +
                         shape_string(x.shape()));
  }
  if (pad >= kernel) throw ContractError("maxpool2d: pad must be smaller than kernel");
  const std::size_t OH = window_out(H, kernel, stride, pad), OW = window_out(W, kernel, stride, pad);
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>({N, C, OH, OW}, tracked);
  std::vector<std::size_t> argmax(out.numel());
  const T* px = x.ptr();
  T* po = out.mutable_ptr();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* plane = px + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (!found || plane[idx] > best) {
              best = plane[idx];
              best_i = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (nc * OH + oy) * OW + ox;
        po[o] = best;
        argmax[o] = nc * H * W + best_i;
      }
    }
  }
  if (tracked) {
    g->record("maxpool2d", {x}, out, [x, out, argmax = std::move(argmax)]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
    });
  }
  return out;
}

/// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
Tensor<T> global_avgpool(const Tensor<T>& x, Graph<T>* g = nullptr) {
  detail::require_rank("global_avgpool", x.shape(), 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const bool tracked = tracks(g, {&x});
  auto out = detail::make_output<T>({N, C}, tracked);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    T s{0};
    const T* p = x.ptr() + nc * HW;
    for (std::size_t i = 0; i < HW; ++i) s += p[i];
    out.mutable_ptr()[nc] = s / static_cast<T>(HW);
  }
  if (tracked) {
    g->record("global_avgpool", {x}, out, [x, out, N, C, HW]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      const T inv = T{1} / static_cast<T>(HW);
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T v = go[nc] * inv;
        for (std::size_t i = 0; i < HW; ++i) gx[nc * HW + i] += v;
      }
    });
  }
  return out;
}

/// [N,...] -> [N, prod(...)].
template <class T>
Tensor<T> flatten(const Tensor<T>& x, Graph<T>* g = nullptr) {
  if (x.rank() < 1) throw DimensionError("flatten on rank-0 tensor");
  const std::size_t n = x.dim(0);
  const bool tracked = tracks(g, {&x});
  Tensor<T> out(Shape{n, x.numel() / n}, std::vector<T>(x.data().begin(), x.data().end()));
  if (tracked) {
    out.set_requires_grad(true);
    g->record("flatten", {x}, out, [x, out]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

/// 2-D convolution (cross-correlation), NCHW input, [F,C,kh,kw] weights,
/// zero padding. Lowered to im2col followed by a matrix product whose
/// accumulation order over (c, ky, kx) matches conv2d_direct exactly.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias, std::size_t stride,
                 std::size_t pad, Graph<T>* g = nullptr) {
  const auto geo = detail::conv_geometry(x.shape(), w.shape(), stride, pad, "conv2d");
  if (bias && bias->defined() && (bias->rank() != 1 || bias->dim(0) != geo.f)) {
    throw DimensionError("conv2d: bias " + shape_string(bias->shape()) + " does not match " +
                         std::to_string(geo.f) + " filters");
  }
  const bool has_bias = bias && bias->defined();
  const bool tracked = tracks(g, {&x, &w, has_bias ? bias : nullptr});
  auto out = detail::make_output<T>({geo.n, geo.f, geo.oh, geo.ow}, tracked);
  const std::size_t K = geo.k(), P = geo.p();
  std::vector<T> col(K * P);
  const T* pw = w.ptr();
  for (std::size_t n = 0; n < geo.n; ++n) {
    detail::im2col(geo, x.ptr() + n * geo.c * geo.h * geo.w, col.data());
    T* po = out.mutable_ptr() + n * geo.f * P;
    for (std::size_t f = 0; f < geo.f; ++f) {
      T* row = po + f * P;
      for (std::size_t k = 0; k < K; ++k) detail::axpy(P, pw[f * K + k], col.data() + k * P, row);
      if (has_bias) {
        const T b = (*bias)[f];
        for (std::size_t p = 0; p < P; ++p) row[p] += b;
      }
    }
  }
  if (tracked) {
    std::vector<Tensor<T>> inputs{x, w};
    Tensor<T> b = has_bias ? *bias : Tensor<T>();
    if (has_bias) inputs.push_back(b);
    g->record("conv2d", std::move(inputs), out, [x, w, b, out, geo]() mutable {
      const std::size_t K = geo.k(), P = geo.p();
      auto go = out.grad();
      if (b.defined() && b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t n = 0; n < geo.n; ++n)
          for (std::size_t f = 0; f < geo.f; ++f) {
            T s{0};
            const T* row = go.data() + (n * geo.f + f) * P;
            for (std::size_t p = 0; p < P; ++p) s += row[p];
            gb[f] += s;
          }
      }
      const bool need_w = w.requires_grad();
      const bool need_x = x.requires_grad();
      if (!need_w && !need_x) return;
      std::vector<T> col(K * P), colT(need_w ? K * P : 0), dcol(need_x ? K * P : 0);
      std::span<T> gw = need_w ? w.grad() : std::span<T>();
      std::span<T> gx = need_x ? x.grad() : std::span<T>();
      const T* pw = w.ptr();
      for (std::size_t n = 0; n < geo.n; ++n) {
        const T* gon = go.data() + n * geo.f * P;
        if (need_w) {
          detail::im2col(geo, x.ptr() + n * geo.c * geo.h * geo.w, col.data());
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t p = 0; p < P; ++p) colT[p * K + k] = col[k * P + p];
          for (std::size_t f = 0; f < geo.f; ++f) {
            T* gwf = gw.data() + f * K;
            for (std::size_t p = 0; p < P; ++p) {
              const T s = gon[f * P + p];
              if (s != T{0}) detail::axpy(K, s, colT.data() + p * K, gwf);
            }
          }
        }
        if (need_x) {
          std::fill(dcol.begin(), dcol.end(), T{0});
          for (std::size_t f = 0; f < geo.f; ++f)
            for (std::size_t k = 0; k < K; ++k) detail::axpy(P, pw[f * K + k], gon + f * P, dcol.data() + k * P);
          detail::col2im(geo, dcol.data(), gx.data() + n * geo.c * geo.h * geo.w);
        }
      }
    });
  }
  return out;
}

/// Reference convolution by direct summation. Forward only; used to check
/// conv2d and as a readable statement of the operation.
template <class T>
Tensor<T> conv2d_direct(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias, std::size_t stride,
                        std::size_t pad) {
  const auto geo = detail::conv_geometry(x.shape(), w.shape(), stride, pad, "conv2d_direct");
  Tensor<T> out({geo.n, geo.f, geo.oh, geo.ow});
  const bool has_bias = bias && bias->defined();
  for (std::size_t n = 0; n < geo.n; ++n)
    for (std::size_t f = 0; f < geo.f; ++f)
      for (std::size_t oy = 0; oy < geo.oh; ++oy)
        for (std::size_t ox = 0; ox < geo.ow; ++ox) {
          T acc{0};
          for (std::size_t c = 0; c < geo.c; ++c)
            for (std::size_t ky = 0; ky < geo.kh; ++ky)
              for (std::size_t kx = 0; kx < geo.kw; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                const bool inside = iy >= 0 && iy < static_cast<long>(geo.h) && ix >= 0 &&
                                    ix < static_cast<long>(geo.w);
                const T v = inside ? x[((n * geo.c + c) * geo.h + iy) * geo.w + ix] : T{0};
                acc += w[((f * geo.c + c) * geo.kh + ky) * geo.kw + kx] * v;
              }
          if (has_bias) acc += (*bias)[f];
          out.mutable_ptr()[((n * geo.f + f) * geo.oh + oy) * geo.ow + ox] = acc;
        }
  return out;
}

/// Running statistics owned by one batchnorm layer.
template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  static BatchNormState fresh(std::size_t channels) {
    return {Tensor<T>::zeros({channels}), Tensor<T>::ones({channels})};
  }
};

struct BatchNormOptions {
  double eps = 1e-5;
  /// Weight of the current batch in the running-stat update.
  double momentum = 0.1;
  bool operator==(const BatchNormOptions&) const = default;
};

/// Per-channel batch normalization over (N,H,W).
///
/// Train mode normalizes with biased batch variance and folds the batch
/// mean and unbiased variance into `state`. Eval mode reads `state` only.
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, const BatchNormOptions& opt, Mode mode,
                      Graph<T>* g = nullptr) {
  detail::require_rank("batchnorm2d", x.shape(), 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
    if (t->rank() != 1 || t->dim(0) != C) {
      throw DimensionError("batchnorm2d: per-channel tensor " + shape_string(t->shape()) +
                           " does not match input " + shape_string(x.shape()));
    }
  }
  const std::size_t M = N * HW;
  if (M == 0) throw ContractError("batchnorm2d: empty batch");
  const T eps = static_cast<T>(opt.eps);
  const bool tracked = tracks(g, {&x, &gamma, &beta});
  auto out = detail::make_output<T>(x.shape(), tracked);
  // Per-channel normalized input and inverse std are kept for backward.
  std::vector<T> xhat(x.numel());
  std::vector<T> invstd(C);
  const T* px = x.ptr();
  T* po = out.mutable_ptr();
  for (std::size_t c = 0; c < C; ++c) {
    T mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) s += px[(n * C + c) * HW + i];
      const double m = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = px[(n * C + c) * HW + i] - m;
          ss += d * d;
        }
      const double v = ss / static_cast<double>(M);
      mean = static_cast<T>(m);
      var = static_cast<T>(v);
      const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : v;
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      rm[c] = static_cast<T>((1.0 - opt.momentum) * rm[c] + opt.momentum * m);
      rv[c] = static_cast<T>((1.0 - opt.momentum) * rv[c] + opt.momentum * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T sd = std::sqrt(var + eps);
    invstd[c] = T{1} / sd;
    const T ga = gamma[c], be = beta[c];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t idx = (n * C + c) * HW + i;
        const T xh = (px[idx] - mean) / sd;
        xhat[idx] = xh;
        po[idx] = ga * xh + be;
      }
  }
  if (tracked) {
    g->record("batchnorm2d", {x, gamma, beta}, out,
              [x, gamma, beta, out, xhat = std::move(xhat), invstd = std::move(invstd), N, C, HW, M,
               mode]() mutable {
                auto go = out.grad();
                std::vector<T> sum_g(C, T{0}), sum_gx(C, T{0});
                for (std::size_t n = 0; n < N; ++n)
                  for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < HW; ++i) {
                      const std::size_t idx = (n * C + c) * HW + i;
                      sum_g[c] += go[idx];
                      sum_gx[c] += go[idx] * xhat[idx];
                    }
                if (gamma.requires_grad()) {
                  auto gg = gamma.grad();
                  for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
                }
                if (beta.requires_grad()) {
                  auto gb = beta.grad();
                  for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                }
                if (!x.requires_grad()) return;
                auto gx = x.grad();
                const T inv_m = T{1} / static_cast<T>(M);
                for (std::size_t n = 0; n < N; ++n)
                  for (std::size_t c = 0; c < C; ++c) {
                    const T scale = gamma[c] * invstd[c];
                    for (std::size_t i = 0; i < HW; ++i) {
                      const std::size_t idx = (n * C + c) * HW + i;
                      if (mode == Mode::train) {
                        gx[idx] += scale * (go[idx] - inv_m * sum_g[c] - xhat[idx] * inv_m * sum_gx[c]);
                      } else {
                        gx[idx] += scale * go[idx];
                      }
                    }
                  }
              });
  }
  return out;
}

/// x[N,in] * w[in,out] + b[out].
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Graph<T>* g = nullptr) {
  return add(matmul(x, w, g), b, g);
}

}  // namespace ops
}  // namespace attrnet
