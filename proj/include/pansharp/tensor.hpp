/*
Copyright 2026 the pansharp authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pansharp/common.hpp"
#include "pansharp/kernels.hpp"

namespace pansharp {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ConfigError("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i)
    r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

// Dense row-major array. The f32 instantiation is the training path, f64 the
// verification path for gradient checks.
template <class T>
struct Array {
  Shape shape;
  std::vector<T> data;

  Array() = default;
  Array(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != int64_t(data.size()))
      throw ConfigError("tensor: shape " + shape_str(shape) +
                        " does not match payload of " +
                        std::to_string(data.size()));
  }

  static Array zeros(Shape s) {
    int64_t n = shape_numel(s);
    return Array(std::move(s), std::vector<T>(size_t(n), T(0)));
  }
  static Array full(Shape s, T v) {
    int64_t n = shape_numel(s);
    return Array(std::move(s), std::vector<T>(size_t(n), v));
  }
  static Array scalar(T v) { return Array({1}, {v}); }

  int64_t numel() const { return int64_t(data.size()); }
  bool same_shape(const Array& o) const { return shape == o.shape; }

  template <class U>
  Array<U> cast() const {
    std::vector<U> d(data.size());
    for (size_t i = 0; i < data.size(); ++i) d[i] = U(data[i]);
    return Array<U>(shape, std::move(d));
  }
};

namespace detail {

template <class T>
inline void ew_add(const T* a, const T* b, T* c, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().add(a, b, c, n);
  } else {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
  }
}
template <class T>
inline void ew_sub(const T* a, const T* b, T* c, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().sub(a, b, c, n);
  } else {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
  }
}
template <class T>
inline void ew_mul(const T* a, const T* b, T* c, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().mul(a, b, c, n);
  } else {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
  }
}
template <class T>
inline void ew_div(const T* a, const T* b, T* c, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().div(a, b, c, n);
  } else {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] / b[i];
  }
}
template <class T>
inline void ew_mul_acc(const T* a, const T* b, T* c, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().mul_acc(a, b, c, n);
  } else {
    for (int64_t i = 0; i < n; ++i) c[i] += a[i] * b[i];
  }
}
template <class T>
inline void ew_scale(T s, const T* x, T* y, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().scale(s, x, y, n);
  } else {
    for (int64_t i = 0; i < n; ++i) y[i] = s * x[i];
  }
}
template <class T>
inline void ew_relu(const T* x, T* y, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().relu(x, y, n);
  } else {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  }
}
template <class T>
inline void ew_relu_bwd(const T* x, const T* g, T* dx, int64_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kern::active_ops().relu_bwd(x, g, dx, n);
  } else {
    for (int64_t i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? g[i] : T(0);
  }
}

// Separable resampling/filter taps: out[o] = sum_t w[o,t] * in[idx[o,t]].
struct TapTable {
  int taps = 0;
  std::vector<int> idx;     // n_out * taps
  std::vector<double> w;    // n_out * taps
  int n_out = 0;
};

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Catmull-Rom kernel (a = -0.5).
inline double cubic_kernel(double x) {
  x = std::abs(x);
  if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x - 1.0;
  return 0.0;
}

// Taps for bicubic resampling from n_in to n_out samples. When minifying,
// the kernel support is stretched by the scale factor so downsampling
// prefilters before sampling. Borders reflect; weights renormalize to sum 1.
inline TapTable bicubic_taps(int n_in, int n_out) {
  if (n_out < 1) throw ConfigError("resize: output dimension < 1");
  TapTable t;
  const double scale = double(n_in) / double(n_out);
  const double filter_scale = scale > 1.0 ? scale : 1.0;
  const double radius = 2.0 * filter_scale;
  t.taps = 2 * int(std::ceil(radius)) + 1;
  t.n_out = n_out;
  t.idx.resize(size_t(n_out) * t.taps);
  t.w.resize(size_t(n_out) * t.taps);
  for (int o = 0; o < n_out; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int start = int(std::floor(center - radius + 0.5));
    double sum = 0.0;
    for (int k = 0; k < t.taps; ++k) {
      const double x = (center - (start + k)) / filter_scale;
      const double wv = cubic_kernel(x);
      t.idx[size_t(o) * t.taps + k] = reflect_index(start + k, n_in);
      t.w[size_t(o) * t.taps + k] = wv;
      sum += wv;
    }
    for (int k = 0; k < t.taps; ++k) t.w[size_t(o) * t.taps + k] /= sum;
  }
  return t;
}

// Normalized Gaussian taps applied at identical resolution with reflection.
inline TapTable gaussian_taps(int n, double sigma, int ksize) {
  if (sigma <= 0) throw ConfigError("gaussian_blur: sigma must be positive");
  if (ksize < 1 || ksize % 2 == 0)
    throw ConfigError("gaussian_blur: kernel size must be odd and positive");
  std::vector<double> w(ksize);
  const int r = ksize / 2;
  double sum = 0.0;
  for (int k = 0; k < ksize; ++k) {
    const double x = k - r;
    w[k] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    sum += w[k];
  }
  for (auto& v : w) v /= sum;
  TapTable t;
  t.taps = ksize;
  t.n_out = n;
  t.idx.resize(size_t(n) * ksize);
  t.w.resize(size_t(n) * ksize);
  for (int o = 0; o < n; ++o)
    for (int k = 0; k < ksize; ++k) {
      t.idx[size_t(o) * ksize + k] = reflect_index(o - r + k, n);
      t.w[size_t(o) * ksize + k] = w[k];
    }
  return t;
}

// Apply taps along the last axis of a [rows, n_in] view.
template <class T>
inline void taps_apply_rows(const TapTable& t, const T* in, int n_in, T* out,
                            int64_t rows) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = in + r * n_in;
    T* dst = out + r * t.n_out;
    for (int o = 0; o < t.n_out; ++o) {
      const int* ip = &t.idx[size_t(o) * t.taps];
      const double* wp = &t.w[size_t(o) * t.taps];
      T s = 0;
      for (int k = 0; k < t.taps; ++k) s += T(wp[k]) * src[ip[k]];
      dst[o] = s;
    }
  }
}

// Adjoint of taps_apply_rows; scatter order is fixed, so gradients are
// deterministic.
template <class T>
inline void taps_adjoint_rows(const TapTable& t, const T* gout, T* gin,
                              int n_in, int64_t rows) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* gsrc = gout + r * t.n_out;
    T* gdst = gin + r * n_in;
    for (int o = 0; o < t.n_out; ++o) {
      const int* ip = &t.idx[size_t(o) * t.taps];
      const double* wp = &t.w[size_t(o) * t.taps];
      for (int k = 0; k < t.taps; ++k) gdst[ip[k]] += T(wp[k]) * gsrc[o];
    }
  }
}

// Apply taps along the second-to-last axis: in is [rows, n_in, inner].
template <class T>
inline void taps_apply_cols(const TapTable& t, const T* in, int n_in,
                            int inner, T* out, int64_t rows) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = in + r * int64_t(n_in) * inner;
    T* dst = out + r * int64_t(t.n_out) * inner;
    for (int o = 0; o < t.n_out; ++o) {
      T* drow = dst + int64_t(o) * inner;
      const int* ip = &t.idx[size_t(o) * t.taps];
      const double* wp = &t.w[size_t(o) * t.taps];
      for (int x = 0; x < inner; ++x) drow[x] = 0;
      for (int k = 0; k < t.taps; ++k) {
        const T* srow = src + int64_t(ip[k]) * inner;
        const T wv = T(wp[k]);
        if constexpr (std::is_same_v<T, float>) {
          kern::active_ops().axpy(wv, srow, drow, inner);
        } else {
          for (int x = 0; x < inner; ++x) drow[x] += wv * srow[x];
        }
      }
    }
  }
}

template <class T>
inline void taps_adjoint_cols(const TapTable& t, const T* gout, T* gin,
                              int n_in, int inner, int64_t rows) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* gsrc = gout + r * int64_t(t.n_out) * inner;
    T* gdst = gin + r * int64_t(n_in) * inner;
    for (int o = 0; o < t.n_out; ++o) {
      const T* grow = gsrc + int64_t(o) * inner;
      const int* ip = &t.idx[size_t(o) * t.taps];
      const double* wp = &t.w[size_t(o) * t.taps];
      for (int k = 0; k < t.taps; ++k) {
        T* drow = gdst + int64_t(ip[k]) * inner;
        const T wv = T(wp[k]);
        if constexpr (std::is_same_v<T, float>) {
          kern::active_ops().axpy(wv, grow, drow, inner);
        } else {
          for (int x = 0; x < inner; ++x) drow[x] += wv * grow[x];
        }
      }
    }
  }
}

template <class T>
inline void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride,
                   int pad, int OH, int OW, T* col) {
  const int64_t P = int64_t(OH) * OW;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j, ++row) {
        T* dst = col + row * P;
        for (int oy = 0; oy < OH; ++oy) {
          const int y = oy * stride + i - pad;
          T* drow = dst + int64_t(oy) * OW;
          if (y < 0 || y >= H) {
            for (int ox = 0; ox < OW; ++ox) drow[ox] = 0;
            continue;
          }
          const T* srow = x + (int64_t(c) * H + y) * W;
          if (stride == 1) {
            for (int ox = 0; ox < OW; ++ox) {
              const int xx = ox + j - pad;
              drow[ox] = (xx >= 0 && xx < W) ? srow[xx] : T(0);
            }
          } else {
            for (int ox = 0; ox < OW; ++ox) {
              const int xx = ox * stride + j - pad;
              drow[ox] = (xx >= 0 && xx < W) ? srow[xx] : T(0);
            }
          }
        }
      }
}

template <class T>
inline void col2im_acc(const T* col, int C, int H, int W, int kh, int kw,
                       int stride, int pad, int OH, int OW, T* dx) {
  const int64_t P = int64_t(OH) * OW;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j, ++row) {
        const T* src = col + row * P;
        for (int oy = 0; oy < OH; ++oy) {
          const int y = oy * stride + i - pad;
          if (y < 0 || y >= H) continue;
          const T* srow = src + int64_t(oy) * OW;
          T* drow = dx + (int64_t(c) * H + y) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int xx = ox * stride + j - pad;
            if (xx >= 0 && xx < W) drow[xx] += srow[ox];
          }
        }
      }
}

}  // namespace detail

// Reverse-mode tape. Forward evaluation is eager; each primitive appends one
// node recording a backward closure. backward() replays the record in exact
// reverse order and is allowed once per tape.
template <class T>
class Tape {
 public:
  using Id = int32_t;

  Id value(Array<T> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }
  Id constant(Array<T> v) { return push(std::move(v), false, nullptr); }
  Id scalar(T v) { return constant(Array<T>::scalar(v)); }

  const Array<T>& val(Id id) const { return node(id).val; }
  const Array<T>& grad(Id id) const {
    const NodeRec& n = node(id);
    if (!done_) throw ConfigError("tape: gradient read before backward");
    if (!n.needs) throw ConfigError("tape: node does not carry a gradient");
    return n.grad;
  }
  bool needs_grad(Id id) const { return node(id).needs; }
  T scalar_val(Id id) const {
    const Array<T>& v = val(id);
    if (v.numel() != 1) throw ConfigError("tape: not a scalar node");
    return v.data[0];
  }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise -------------------------------------------------------

  Id add(Id a, Id b) { return binary(a, b, BinOp::Add); }
  Id sub(Id a, Id b) { return binary(a, b, BinOp::Sub); }
  Id mul(Id a, Id b) { return binary(a, b, BinOp::Mul); }
  Id div(Id a, Id b) { return binary(a, b, BinOp::Div); }

  Id scale(Id a, T c) {
    Array<T> out = Array<T>::zeros(val(a).shape);
    detail::ew_scale(c, val(a).data.data(), out.data.data(), out.numel());
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, c] {
        Array<T>& da = node(a).grad;
        const Array<T>& g = node(id).grad;
        if constexpr (std::is_same_v<T, float>)
          kern::active_ops().axpy(c, g.data.data(), da.data.data(), g.numel());
        else
          for (int64_t i = 0; i < g.numel(); ++i) da.data[i] += c * g.data[i];
      };
    return id;
  }

  Id add_const(Id a, T c) {
    Array<T> out = val(a);
    for (auto& v : out.data) v += c;
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] { accumulate(a, node(id).grad.data); };
    return id;
  }

  Id neg(Id a) { return scale(a, T(-1)); }

  Id exp(Id a) {
    Array<T> out = val(a);
    for (auto& v : out.data) v = std::exp(v);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        detail::ew_mul_acc(node(id).grad.data.data(),
                           node(id).val.data.data(),
                           node(a).grad.data.data(), node(id).val.numel());
      };
    return id;
  }

  Id log(Id a) {
    Array<T> out = val(a);
    for (auto& v : out.data) v = std::log(v);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        const Array<T>& g = node(id).grad;
        const Array<T>& x = node(a).val;
        Array<T>& da = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i)
          da.data[i] += g.data[i] / x.data[i];
      };
    return id;
  }

  Id sqrt_(Id a) {
    Array<T> out = val(a);
    for (auto& v : out.data) v = std::sqrt(v);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        const Array<T>& g = node(id).grad;
        const Array<T>& y = node(id).val;
        Array<T>& da = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i)
          da.data[i] += g.data[i] * T(0.5) / y.data[i];
      };
    return id;
  }

  Id abs_(Id a) {
    Array<T> out = val(a);
    for (auto& v : out.data) v = std::abs(v);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        const Array<T>& g = node(id).grad;
        const Array<T>& x = node(a).val;
        Array<T>& da = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (x.data[i] > T(0))
            da.data[i] += g.data[i];
          else if (x.data[i] < T(0))
            da.data[i] -= g.data[i];
        }
      };
    return id;
  }

  Id relu(Id a) {
    Array<T> out = Array<T>::zeros(val(a).shape);
    detail::ew_relu(val(a).data.data(), out.data.data(), out.numel());
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        detail::ew_relu_bwd(node(a).val.data.data(), node(id).grad.data.data(),
                            node(a).grad.data.data(), node(a).val.numel());
      };
    return id;
  }

  // ---- reductions --------------------------------------------------------

  Id sum(Id a) {
    T s = kern::reduce_sum(val(a).data.data(), val(a).numel());
    Id id = push(Array<T>::scalar(s), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] {
        const T g = node(id).grad.data[0];
        for (auto& v : node(a).grad.data) v += g;
      };
    return id;
  }

  Id mean(Id a) {
    const int64_t n = val(a).numel();
    return scale(sum(a), T(1) / T(n));
  }

  Id row_sum(Id a) {
    const Shape& s = val(a).shape;
    if (s.size() != 2) throw ConfigError("row_sum: expects a matrix");
    const int N = s[0], M = s[1];
    Array<T> out = Array<T>::zeros({N});
    for (int i = 0; i < N; ++i)
      out.data[i] =
          kern::reduce_sum(val(a).data.data() + int64_t(i) * M, M);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, N, M] {
        const Array<T>& g = node(id).grad;
        Array<T>& da = node(a).grad;
        for (int i = 0; i < N; ++i) {
          const T gv = g.data[i];
          T* dst = da.data.data() + int64_t(i) * M;
          for (int j = 0; j < M; ++j) dst[j] += gv;
        }
      };
    return id;
  }

  // Global average pool over the two trailing axes of [B,C,H,W].
  Id mean_hw(Id a) {
    const Shape& s = val(a).shape;
    if (s.size() != 4) throw ConfigError("mean_hw: expects [B,C,H,W]");
    const int B = s[0], C = s[1];
    const int64_t hw = int64_t(s[2]) * s[3];
    Array<T> out = Array<T>::zeros({B, C});
    for (int i = 0; i < B * C; ++i)
      out.data[i] =
          kern::reduce_sum(val(a).data.data() + i * hw, hw) / T(hw);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, B, C, hw] {
        const Array<T>& g = node(id).grad;
        Array<T>& da = node(a).grad;
        for (int i = 0; i < B * C; ++i) {
          const T gv = g.data[i] / T(hw);
          T* dst = da.data.data() + i * hw;
          for (int64_t j = 0; j < hw; ++j) dst[j] += gv;
        }
      };
    return id;
  }

  // ---- linear algebra ----------------------------------------------------

  Id matmul(Id a, Id b) {
    const Shape& sa = val(a).shape;
    const Shape& sb = val(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw ConfigError("matmul: incompatible shapes " + shape_str(sa) +
                        " x " + shape_str(sb));
    const int M = sa[0], K = sa[1], N = sb[1];
    Array<T> out = Array<T>::zeros({M, N});
    kern::gemm_nn(M, N, K, val(a).data.data(), K, val(b).data.data(), N,
                  out.data.data(), N, false);
    Id id = push(std::move(out), node(a).needs || node(b).needs, nullptr);
    node(id).back = [this, a, b, id, M, K, N] {
      const Array<T>& g = node(id).grad;
      if (node(a).needs)  // dA += g * B^T
        kern::gemm_nt(M, K, N, g.data.data(), N, node(b).val.data.data(), N,
                      node(a).grad.data.data(), K, true);
      if (node(b).needs)  // dB += A^T * g
        kern::gemm_tn(K, N, M, node(a).val.data.data(), K, g.data.data(), N,
                      node(b).grad.data.data(), N, true);
    };
    if (!node(id).needs) node(id).back = nullptr;
    return id;
  }

  // a[N,K] * b[M,K]^T -> [N,M]; the similarity-matrix workhorse.
  Id matmul_nt(Id a, Id b) {
    const Shape& sa = val(a).shape;
    const Shape& sb = val(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1])
      throw ConfigError("matmul_nt: incompatible shapes " + shape_str(sa) +
                        " x " + shape_str(sb));
    const int N = sa[0], K = sa[1], M = sb[0];
    Array<T> out = Array<T>::zeros({N, M});
    kern::gemm_nt(N, M, K, val(a).data.data(), K, val(b).data.data(), K,
                  out.data.data(), M, false);
    Id id = push(std::move(out), node(a).needs || node(b).needs, nullptr);
    node(id).back = [this, a, b, id, N, K, M] {
      const Array<T>& g = node(id).grad;
      if (node(a).needs)  // dA += g * B
        kern::gemm_nn(N, K, M, g.data.data(), M, node(b).val.data.data(), K,
                      node(a).grad.data.data(), K, true);
      if (node(b).needs)  // dB += g^T * A
        kern::gemm_tn(M, K, N, g.data.data(), M, node(a).val.data.data(), K,
                      node(b).grad.data.data(), K, true);
    };
    if (!node(id).needs) node(id).back = nullptr;
    return id;
  }

  Id bias_row(Id x, Id b) {
    const Shape& sx = val(x).shape;
    const Shape& sb = val(b).shape;
    if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1])
      throw ConfigError("bias_row: incompatible shapes");
    const int N = sx[0], M = sx[1];
    Array<T> out = val(x);
    for (int i = 0; i < N; ++i)
      detail::ew_add(out.data.data() + int64_t(i) * M, val(b).data.data(),
                     out.data.data() + int64_t(i) * M, M);
    Id id = push(std::move(out), node(x).needs || node(b).needs, nullptr);
    node(id).back = [this, x, b, id, N, M] {
      const Array<T>& g = node(id).grad;
      if (node(x).needs) accumulate(x, g.data);
      if (node(b).needs) {
        Array<T>& db = node(b).grad;
        for (int i = 0; i < N; ++i)
          detail::ew_add(db.data.data(), g.data.data() + int64_t(i) * M,
                         db.data.data(), M);
      }
    };
    if (!node(id).needs) node(id).back = nullptr;
    return id;
  }

  Id bias_channel(Id x, Id b) {
    const Shape& sx = val(x).shape;
    const Shape& sb = val(b).shape;
    if (sx.size() != 4 || sb.size() != 1 || sb[0] != sx[1])
      throw ConfigError("bias_channel: incompatible shapes");
    const int B = sx[0], C = sx[1];
    const int64_t hw = int64_t(sx[2]) * sx[3];
    Array<T> out = val(x);
    for (int i = 0; i < B; ++i)
      for (int c = 0; c < C; ++c) {
        T* dst = out.data.data() + (int64_t(i) * C + c) * hw;
        const T bv = val(b).data[c];
        for (int64_t j = 0; j < hw; ++j) dst[j] += bv;
      }
    Id id = push(std::move(out), node(x).needs || node(b).needs, nullptr);
    node(id).back = [this, x, b, id, B, C, hw] {
      const Array<T>& g = node(id).grad;
      if (node(x).needs) accumulate(x, g.data);
      if (node(b).needs) {
        Array<T>& db = node(b).grad;
        for (int i = 0; i < B; ++i)
          for (int c = 0; c < C; ++c)
            db.data[c] += kern::reduce_sum(
                g.data.data() + (int64_t(i) * C + c) * hw, hw);
      }
    };
    if (!node(id).needs) node(id).back = nullptr;
    return id;
  }

  // ---- convolution -------------------------------------------------------

  // Cross-correlation of x[B,C,H,W] with w[F,C,kh,kw], zero padding.
  Id conv2d(Id x, Id w, int stride, int pad) {
    const Shape& sx = val(x).shape;
    const Shape& sw = val(w).shape;
    if (sx.size() != 4 || sw.size() != 4)
      throw ConfigError("conv2d: expects [B,C,H,W] and [F,C,kh,kw]");
    if (sx[1] != sw[1])
      throw ConfigError("conv2d: input channels " + std::to_string(sx[1]) +
                        " do not match kernel channels " +
                        std::to_string(sw[1]));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (pad < 0) throw ConfigError("conv2d: negative padding");
    const int B = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const int F = sw[0], kh = sw[2], kw = sw[3];
    if (kh > H + 2 * pad || kw > W + 2 * pad)
      throw ConfigError("conv2d: kernel larger than padded input");
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    const int K = C * kh * kw;
    const int64_t P = int64_t(OH) * OW;

    Array<T> out = Array<T>::zeros({B, F, OH, OW});
    std::vector<T> col(size_t(K) * P);
    for (int b = 0; b < B; ++b) {
      detail::im2col(val(x).data.data() + int64_t(b) * C * H * W, C, H, W, kh,
                     kw, stride, pad, OH, OW, col.data());
      kern::gemm_nn(F, int(P), K, val(w).data.data(), K, col.data(), int(P),
                    out.data.data() + int64_t(b) * F * P, int(P), false);
    }
    Id id = push(std::move(out), node(x).needs || node(w).needs, nullptr);
    node(id).back = [this, x, w, id, B, C, H, W, F, kh, kw, stride, pad, OH,
                     OW, K, P] {
      const Array<T>& g = node(id).grad;
      std::vector<T> col(size_t(K) * P);
      std::vector<T> dcol;
      if (node(x).needs) dcol.resize(size_t(K) * P);
      for (int b = 0; b < B; ++b) {
        const T* gb = g.data.data() + int64_t(b) * F * P;
        if (node(w).needs) {
          detail::im2col(node(x).val.data.data() + int64_t(b) * C * H * W, C,
                         H, W, kh, kw, stride, pad, OH, OW, col.data());
          kern::gemm_nt(F, K, int(P), gb, int(P), col.data(), int(P),
                        node(w).grad.data.data(), K, true);
        }
        if (node(x).needs) {
          kern::gemm_tn(K, int(P), F, node(w).val.data.data(), K, gb, int(P),
                        dcol.data(), int(P), false);
          detail::col2im_acc(dcol.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                             node(x).grad.data.data() +
                                 int64_t(b) * C * H * W);
        }
      }
    };
    if (!node(id).needs) node(id).back = nullptr;
    return id;
  }

  // ---- shape plumbing ----------------------------------------------------

  Id reshape(Id a, Shape s) {
    if (shape_numel(s) != val(a).numel())
      throw ConfigError("reshape: element count mismatch");
    Array<T> out(std::move(s), val(a).data);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id] { accumulate(a, node(id).grad.data); };
    return id;
  }

  Id concat(const std::vector<Id>& parts, int axis) {
    if (parts.empty()) throw ConfigError("concat: empty part list");
    Shape s = val(parts[0]).shape;
    if (axis < 0 || axis >= int(s.size()))
      throw ConfigError("concat: bad axis");
    int total = 0;
    for (Id p : parts) {
      const Shape& sp = val(p).shape;
      if (sp.size() != s.size()) throw ConfigError("concat: rank mismatch");
      for (size_t d = 0; d < s.size(); ++d)
        if (int(d) != axis && sp[d] != s[d])
          throw ConfigError("concat: shape mismatch off-axis");
      total += sp[axis];
    }
    Shape so = s;
    so[axis] = total;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Array<T> out = Array<T>::zeros(so);
    bool needs = false;
    int64_t off = 0;
    for (Id p : parts) {
      const Array<T>& v = val(p);
      const int64_t len = v.shape[axis] * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(v.data.data() + o * len, len,
                    out.data.data() + o * int64_t(total) * inner + off);
      off += len;
      needs = needs || node(p).needs;
    }
    Id id = push(std::move(out), needs, nullptr);
    if (needs) {
      std::vector<Id> ps = parts;
      node(id).back = [this, ps, id, outer, inner, total, axis] {
        const Array<T>& g = node(id).grad;
        int64_t off = 0;
        for (Id p : ps) {
          const int64_t len = node(p).val.shape[axis] * inner;
          if (node(p).needs) {
            Array<T>& dp = node(p).grad;
            for (int64_t o = 0; o < outer; ++o)
              detail::ew_add(dp.data.data() + o * len,
                             g.data.data() + o * int64_t(total) * inner + off,
                             dp.data.data() + o * len, len);
          }
          off += len;
        }
      };
    }
    return id;
  }

  Id narrow(Id a, int axis, int start, int len) {
    const Shape& s = val(a).shape;
    if (axis < 0 || axis >= int(s.size()))
      throw ConfigError("narrow: bad axis");
    if (start < 0 || len < 1 || start + len > s[axis])
      throw ConfigError("narrow: range out of bounds");
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape so = s;
    so[axis] = len;
    Array<T> out = Array<T>::zeros(so);
    const int64_t src_stride = int64_t(s[axis]) * inner;
    const int64_t dst_stride = int64_t(len) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(val(a).data.data() + o * src_stride + int64_t(start) * inner,
                  dst_stride, out.data.data() + o * dst_stride);
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, outer, inner, start, src_stride,
                       dst_stride] {
        const Array<T>& g = node(id).grad;
        Array<T>& da = node(a).grad;
        for (int64_t o = 0; o < outer; ++o)
          detail::ew_add(
              da.data.data() + o * src_stride + int64_t(start) * inner,
              g.data.data() + o * dst_stride,
              da.data.data() + o * src_stride + int64_t(start) * inner,
              dst_stride);
      };
    return id;
  }

  Id take(Id a, std::vector<int64_t> idx) {
    for (int64_t i : idx)
      if (i < 0 || i >= val(a).numel())
        throw ConfigError("take: index out of range");
    Array<T> out = Array<T>::zeros({int(idx.size())});
    for (size_t i = 0; i < idx.size(); ++i)
      out.data[i] = val(a).data[size_t(idx[i])];
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, idx = std::move(idx)] {
        const Array<T>& g = node(id).grad;
        Array<T>& da = node(a).grad;
        for (size_t i = 0; i < idx.size(); ++i)
          da.data[size_t(idx[i])] += g.data[i];
      };
    return id;
  }

  // ---- softmax machinery -------------------------------------------------

  // Row-wise log(sum(exp(.))) with max subtraction.
  Id row_logsumexp(Id a) {
    const Shape& s = val(a).shape;
    if (s.size() != 2) throw ConfigError("row_logsumexp: expects a matrix");
    const int N = s[0], M = s[1];
    Array<T> out = Array<T>::zeros({N});
    for (int i = 0; i < N; ++i) {
      const T* row = val(a).data.data() + int64_t(i) * M;
      T m = row[0];
      for (int j = 1; j < M; ++j) m = std::max(m, row[j]);
      T se = 0;
      for (int j = 0; j < M; ++j) se += std::exp(row[j] - m);
      out.data[i] = m + std::log(se);
    }
    Id id = push(std::move(out), node(a).needs, nullptr);
    if (node(a).needs)
      node(id).back = [this, a, id, N, M] {
        const Array<T>& g = node(id).grad;
        const Array<T>& y = node(id).val;
        const Array<T>& x = node(a).val;
        Array<T>& da = node(a).grad;
        for (int i = 0; i < N; ++i) {
          const T gv = g.data[i];
          const T* row = x.data.data() + int64_t(i) * M;
          T* drow = da.data.data() + int64_t(i) * M;
          for (int j = 0; j < M; ++j)
            drow[j] += gv * std::exp(row[j] - y.data[i]);
        }
      };
    return id;
  }

  // ---- fixed linear resamplers -------------------------------------------

  // Bicubic resampling of [B,C,H,W] to (oh, ow); Catmull-Rom kernel,
  // reflected borders, stretched support when minifying.
  Id resize_bicubic(Id x, int oh, int ow) {
    const Shape& s = val(x).shape;
    if (s.size() != 4) throw ConfigError("resize: expects [B,C,H,W]");
    const int B = s[0], C = s[1], H = s[2], W = s[3];
    const detail::TapTable tr = detail::bicubic_taps(W, ow);
    const detail::TapTable tc = detail::bicubic_taps(H, oh);
    // rows pass: [B*C*H, W] -> [., ow]; cols pass: [B*C, H, ow] -> [., oh, .]
    std::vector<T> mid(size_t(B) * C * H * ow);
    detail::taps_apply_rows(tr, val(x).data.data(), W, mid.data(),
                            int64_t(B) * C * H);
    Array<T> out = Array<T>::zeros({B, C, oh, ow});
    detail::taps_apply_cols(tc, mid.data(), H, ow, out.data.data(),
                            int64_t(B) * C);
    Id id = push(std::move(out), node(x).needs, nullptr);
    if (node(x).needs)
      node(id).back = [this, x, id, tr, tc, B, C, H, W, oh, ow] {
        const Array<T>& g = node(id).grad;
        std::vector<T> gmid(size_t(B) * C * H * ow, T(0));
        detail::taps_adjoint_cols(tc, g.data.data(), gmid.data(), H, ow,
                                  int64_t(B) * C);
        detail::taps_adjoint_rows(tr, gmid.data(),
                                  node(x).grad.data.data(), W,
                                  int64_t(B) * C * H);
        (void)oh;
      };
    return id;
  }

  // Separable Gaussian blur with reflected borders; kernel normalized to 1.
  Id gaussian_blur(Id x, double sigma, int ksize) {
    const Shape& s = val(x).shape;
    if (s.size() != 4) throw ConfigError("blur: expects [B,C,H,W]");
    const int B = s[0], C = s[1], H = s[2], W = s[3];
    const detail::TapTable tr = detail::gaussian_taps(W, sigma, ksize);
    const detail::TapTable tc = detail::gaussian_taps(H, sigma, ksize);
    std::vector<T> mid(size_t(B) * C * H * W);
    detail::taps_apply_rows(tr, val(x).data.data(), W, mid.data(),
                            int64_t(B) * C * H);
    Array<T> out = Array<T>::zeros({B, C, H, W});
    detail::taps_apply_cols(tc, mid.data(), H, W, out.data.data(),
                            int64_t(B) * C);
    Id id = push(std::move(out), node(x).needs, nullptr);
    if (node(x).needs)
      node(id).back = [this, x, id, tr, tc, B, C, H, W] {
        const Array<T>& g = node(id).grad;
        std::vector<T> gmid(size_t(B) * C * H * W, T(0));
        detail::taps_adjoint_cols(tc, g.data.data(), gmid.data(), H, W,
                                  int64_t(B) * C);
        detail::taps_adjoint_rows(tr, gmid.data(), node(x).grad.data.data(),
                                  W, int64_t(B) * C * H);
      };
    return id;
  }

  // ---- backward ----------------------------------------------------------

  void backward(Id loss) {
    if (done_) throw ConfigError("tape: backward already ran; tape consumed");
    const NodeRec& ln = node(loss);
    if (ln.val.numel() != 1)
      throw ConfigError("tape: backward requires a scalar loss");
    if (!ln.needs)
      throw ConfigError("tape: loss does not depend on any gradient leaf");
    for (auto& n : nodes_)
      if (n.needs) n.grad = Array<T>::zeros(n.val.shape);
    done_ = true;  // grads readable inside closures via accumulate paths
    node(loss).grad.data[0] = T(1);
    for (int32_t i = int32_t(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].back && nodes_[i].needs) nodes_[i].back();
  }

 private:
  enum class BinOp { Add, Sub, Mul, Div };

  struct NodeRec {
    Array<T> val;
    Array<T> grad;
    bool needs = false;
    std::function<void()> back;
  };

  std::deque<NodeRec> nodes_;
  bool done_ = false;

  NodeRec& node(Id id) {
    if (id < 0 || id >= Id(nodes_.size()))
      throw ConfigError("tape: bad node id");
    return nodes_[id];
  }
  const NodeRec& node(Id id) const {
    if (id < 0 || id >= Id(nodes_.size()))
      throw ConfigError("tape: bad node id");
    return nodes_[id];
  }

  Id push(Array<T> v, bool needs, std::function<void()> back) {
    if (done_) throw ConfigError("tape: consumed; build a fresh tape");
    nodes_.push_back(NodeRec{std::move(v), {}, needs, std::move(back)});
    return Id(nodes_.size() - 1);
  }

  void accumulate(Id a, const std::vector<T>& g) {
    Array<T>& da = node(a).grad;
    detail::ew_add(da.data.data(), g.data(), da.data.data(), da.numel());
  }

  // Elementwise binary with scalar broadcast on either side.
  Id binary(Id a, Id b, BinOp op) {
    const Array<T>& va = val(a);
    const Array<T>& vb = val(b);
    const bool sa = va.numel() == 1, sb = vb.numel() == 1;
    if (!sa && !sb && !va.same_shape(vb))
      throw ConfigError("elementwise: shape mismatch " + shape_str(va.shape) +
                        " vs " + shape_str(vb.shape));
    const Shape& so = (sa && !sb) ? vb.shape : va.shape;
    Array<T> out = Array<T>::zeros(so);
    const int64_t n = out.numel();
    auto ap = [&](int64_t i) { return va.data[sa ? 0 : i]; };
    auto bp = [&](int64_t i) { return vb.data[sb ? 0 : i]; };
    if (!sa && !sb) {
      switch (op) {
        case BinOp::Add:
          detail::ew_add(va.data.data(), vb.data.data(), out.data.data(), n);
          break;
        case BinOp::Sub:
          detail::ew_sub(va.data.data(), vb.data.data(), out.data.data(), n);
          break;
        case BinOp::Mul:
          detail::ew_mul(va.data.data(), vb.data.data(), out.data.data(), n);
          break;
        case BinOp::Div:
          detail::ew_div(va.data.data(), vb.data.data(), out.data.data(), n);
          break;
      }
    } else {
      for (int64_t i = 0; i < n; ++i) {
        switch (op) {
          case BinOp::Add: out.data[i] = ap(i) + bp(i); break;
          case BinOp::Sub: out.data[i] = ap(i) - bp(i); break;
          case BinOp::Mul: out.data[i] = ap(i) * bp(i); break;
          case BinOp::Div: out.data[i] = ap(i) / bp(i); break;
        }
      }
    }
    Id id = push(std::move(out), node(a).needs || node(b).needs, nullptr);
    if (node(id).needs)
      node(id).back = [this, a, b, id, op, sa, sb, n] {
        const Array<T>& g = node(id).grad;
        const Array<T>& va = node(a).val;
        const Array<T>& vb = node(b).val;
        auto gacc = [&](Id t, bool scalar_t, auto dfn) {
          if (!node(t).needs) return;
          Array<T>& dt = node(t).grad;
          if (scalar_t) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += dfn(i);
            dt.data[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i) dt.data[i] += dfn(i);
          }
        };
        auto av = [&](int64_t i) { return va.data[sa ? 0 : i]; };
        auto bv = [&](int64_t i) { return vb.data[sb ? 0 : i]; };
        switch (op) {
          case BinOp::Add:
            gacc(a, sa, [&](int64_t i) { return g.data[i]; });
            gacc(b, sb, [&](int64_t i) { return g.data[i]; });
            break;
          case BinOp::Sub:
            gacc(a, sa, [&](int64_t i) { return g.data[i]; });
            gacc(b, sb, [&](int64_t i) { return -g.data[i]; });
            break;
          case BinOp::Mul:
            gacc(a, sa, [&](int64_t i) { return g.data[i] * bv(i); });
            gacc(b, sb, [&](int64_t i) { return g.data[i] * av(i); });
            break;
          case BinOp::Div:
            gacc(a, sa, [&](int64_t i) { return g.data[i] / bv(i); });
            gacc(b, sb, [&](int64_t i) {
              return -g.data[i] * av(i) / (bv(i) * bv(i));
            });
            break;
        }
      };
    return id;
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace pansharp
