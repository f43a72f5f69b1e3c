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

#include "pansharp/tensor.hpp"

// Composite differentiable operations built from tape primitives. All of
// these inherit their backward pass from the primitives they compose.

namespace pansharp::ops {

template <class T>
using Id = typename Tape<T>::Id;

// Unit-normalize a vector ([D] or [1,D]). Zero vectors are rejected rather
// than silently producing NaN.
template <class T>
Id<T> l2_normalize(Tape<T>& tp, Id<T> v) {
  Id<T> sq = tp.mul(v, v);
  Id<T> n2 = tp.sum(sq);
  if (tp.scalar_val(n2) <= T(0))
    throw ConfigError("l2_normalize: zero vector");
  return tp.div(v, tp.sqrt_(n2));
}

// Row-wise unit normalization of [N,D].
template <class T>
Id<T> l2_normalize_rows(Tape<T>& tp, Id<T> a) {
  const Shape& s = tp.val(a).shape;
  if (s.size() != 2) throw ConfigError("l2_normalize_rows: expects [N,D]");
  const int N = s[0], D = s[1];
  Id<T> n2 = tp.row_sum(tp.mul(a, a));  // [N]
  for (int i = 0; i < N; ++i)
    if (tp.val(n2).data[i] <= T(0))
      throw ConfigError("l2_normalize_rows: zero row");
  Id<T> inv = tp.reshape(tp.sqrt_(n2), {N, 1});
  // broadcast divide via per-row scale: tile [N,1] to [N,D]
  std::vector<typename Tape<T>::Id> cols(D, inv);
  Id<T> tiled = tp.concat(cols, 1);
  return tp.div(a, tiled);
}

template <class T>
Id<T> dot(Tape<T>& tp, Id<T> a, Id<T> b) {
  return tp.sum(tp.mul(a, b));
}

// Cosine similarity of two vectors; distinct from the sign convention in
// raw dot products, this normalizes both sides and rejects zero vectors.
template <class T>
Id<T> cosine_sim(Tape<T>& tp, Id<T> a, Id<T> b) {
  Id<T> na = tp.sqrt_(tp.sum(tp.mul(a, a)));
  Id<T> nb = tp.sqrt_(tp.sum(tp.mul(b, b)));
  if (tp.scalar_val(na) <= T(0) || tp.scalar_val(nb) <= T(0))
    throw ConfigError("cosine_sim: zero-norm input");
  return tp.div(dot(tp, a, b), tp.mul(na, nb));
}

// Row-wise cosine of two [N,D] batches -> [N].
template <class T>
Id<T> cosine_rows(Tape<T>& tp, Id<T> a, Id<T> b) {
  Id<T> na = tp.sqrt_(tp.row_sum(tp.mul(a, a)));
  Id<T> nb = tp.sqrt_(tp.row_sum(tp.mul(b, b)));
  Id<T> d = tp.row_sum(tp.mul(a, b));
  return tp.div(tp.div(d, na), nb);
}

// Mean over rows of -log softmax at the diagonal; similarities [N,N] with
// positive pairs on the diagonal.
template <class T>
Id<T> info_nce(Tape<T>& tp, Id<T> sim, Id<T> tau) {
  const Shape& s = tp.val(sim).shape;
  if (s.size() != 2 || s[0] != s[1])
    throw ConfigError("info_nce: expects a square similarity matrix");
  const int N = s[0];
  if (N == 0) throw ConfigError("info_nce: empty batch");
  if (tp.scalar_val(tau) <= T(0))
    throw ConfigError("info_nce: temperature must be positive");
  Id<T> logits = tp.div(sim, tau);
  std::vector<int64_t> diag(N);
  for (int i = 0; i < N; ++i) diag[i] = int64_t(i) * N + i;
  Id<T> lse = tp.row_logsumexp(logits);
  Id<T> pos = tp.take(logits, diag);
  return tp.mean(tp.sub(lse, pos));
}

template <class T>
Id<T> info_nce(Tape<T>& tp, Id<T> sim, double tau) {
  return info_nce(tp, sim, tp.scalar(T(tau)));
}

// Mean squared error.
template <class T>
Id<T> mse(Tape<T>& tp, Id<T> a, Id<T> b) {
  Id<T> d = tp.sub(a, b);
  return tp.mean(tp.mul(d, d));
}

// Sum of absolute differences (l1 norm of the difference).
template <class T>
Id<T> l1(Tape<T>& tp, Id<T> a, Id<T> b) {
  return tp.sum(tp.abs_(tp.sub(a, b)));
}

// Mean structural similarity over valid 11x11 Gaussian windows (sigma 1.5),
// stabilizers C1=(0.01)^2 and C2=(0.03)^2 on unit dynamic range. Inputs are
// [B,C,H,W]; each band is treated as an independent plane.
template <class T>
Id<T> ssim(Tape<T>& tp, Id<T> a, Id<T> b, int win = 11, double sigma = 1.5) {
  const Shape& s = tp.val(a).shape;
  if (s != tp.val(b).shape) throw ConfigError("ssim: shape mismatch");
  if (s.size() != 4) throw ConfigError("ssim: expects [B,C,H,W]");
  const int B = s[0], C = s[1], H = s[2], W = s[3];
  if (H < win || W < win)
    throw ConfigError("ssim: image smaller than window");
  // Gaussian window as a constant conv kernel.
  std::vector<T> k(size_t(win) * win);
  {
    double sum = 0.0;
    const int r = win / 2;
    for (int i = 0; i < win; ++i)
      for (int j = 0; j < win; ++j) {
        const double d2 = double(i - r) * (i - r) + double(j - r) * (j - r);
        const double v = std::exp(-d2 / (2.0 * sigma * sigma));
        k[size_t(i) * win + j] = T(v);
        sum += v;
      }
    for (auto& v : k) v = T(double(v) / sum);
  }
  Id<T> kern_id = tp.constant(Array<T>({1, 1, win, win}, std::move(k)));
  Id<T> x = tp.reshape(a, {B * C, 1, H, W});
  Id<T> y = tp.reshape(b, {B * C, 1, H, W});
  auto blur = [&](Id<T> v) { return tp.conv2d(v, kern_id, 1, 0); };
  const T c1 = T(0.01) * T(0.01);
  const T c2 = T(0.03) * T(0.03);
  Id<T> mx = blur(x);
  Id<T> my = blur(y);
  Id<T> mxx = blur(tp.mul(x, x));
  Id<T> myy = blur(tp.mul(y, y));
  Id<T> mxy = blur(tp.mul(x, y));
  Id<T> mx2 = tp.mul(mx, mx);
  Id<T> my2 = tp.mul(my, my);
  Id<T> vx = tp.sub(mxx, mx2);
  Id<T> vy = tp.sub(myy, my2);
  Id<T> cxy = tp.sub(mxy, tp.mul(mx, my));
  Id<T> num = tp.mul(tp.add_const(tp.scale(tp.mul(mx, my), T(2)), c1),
                     tp.add_const(tp.scale(cxy, T(2)), c2));
  Id<T> den = tp.mul(tp.add_const(tp.add(mx2, my2), c1),
                     tp.add_const(tp.add(vx, vy), c2));
  return tp.mean(tp.div(num, den));
}

}  // namespace pansharp::ops
