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
// NEON kernels for aarch64. Two q-registers emulate the 8-lane blocked
// pattern (lanes 0-3 and 4-7), so reductions fold in the same tree as the
// scalar reference and the AVX2 variant.

#include <arm_neon.h>

#include <cmath>

#include "pansharp/kernels.hpp"

namespace pansharp::kern {
namespace {

inline float fold8(float32x4_t lo, float32x4_t hi) {
  // (p0+p4, p1+p5, p2+p6, p3+p7)
  float32x4_t q = vaddq_f32(lo, hi);
  float p02 = vgetq_lane_f32(q, 0) + vgetq_lane_f32(q, 2);
  float p13 = vgetq_lane_f32(q, 1) + vgetq_lane_f32(q, 3);
  return p02 + p13;
}

struct IdxNN {
  int lda;
  int64_t operator()(int i, int p) const { return int64_t(i) * lda + p; }
};
struct IdxTN {
  int lda;
  int64_t operator()(int i, int p) const { return int64_t(p) * lda + i; }
};

template <class AIdx>
void gemm_bcast(int m, int n, int k, const float* a, AIdx aidx, const float* b,
                int ldb, float* c, int ldc, bool acc) {
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    for (int i = 0; i < m; ++i) {
      float32x4_t c0, c1;
      if (acc) {
        c0 = vld1q_f32(c + int64_t(i) * ldc + j);
        c1 = vld1q_f32(c + int64_t(i) * ldc + j + 4);
      } else {
        c0 = vdupq_n_f32(0.0f);
        c1 = vdupq_n_f32(0.0f);
      }
      for (int p = 0; p < k; ++p) {
        const float32x4_t av = vdupq_n_f32(a[aidx(i, p)]);
        c0 = vfmaq_f32(c0, av, vld1q_f32(b + int64_t(p) * ldb + j));
        c1 = vfmaq_f32(c1, av, vld1q_f32(b + int64_t(p) * ldb + j + 4));
      }
      vst1q_f32(c + int64_t(i) * ldc + j, c0);
      vst1q_f32(c + int64_t(i) * ldc + j + 4, c1);
    }
  }
  for (; j < n; ++j)
    for (int i = 0; i < m; ++i) {
      float s = acc ? c[int64_t(i) * ldc + j] : 0.0f;
      for (int p = 0; p < k; ++p)
        s = std::fma(a[aidx(i, p)], b[int64_t(p) * ldb + j], s);
      c[int64_t(i) * ldc + j] = s;
    }
}

void n_gemm_nn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  gemm_bcast(m, n, k, a, IdxNN{lda}, b, ldb, c, ldc, acc);
}
void n_gemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  gemm_bcast(m, n, k, a, IdxTN{lda}, b, ldb, c, ldc, acc);
}

inline float dot_neon(const float* a, const float* b, int64_t n) {
  float32x4_t lo = vdupq_n_f32(0.0f), hi = vdupq_n_f32(0.0f);
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8) {
    lo = vfmaq_f32(lo, vld1q_f32(a + i), vld1q_f32(b + i));
    hi = vfmaq_f32(hi, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  float s = fold8(lo, hi);
  for (int64_t i = nv; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void n_gemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = dot_neon(a + int64_t(i) * lda, b + int64_t(j) * ldb, k);
      float* cp = c + int64_t(i) * ldc + j;
      *cp = acc ? *cp + s : s;
    }
}

void n_add(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(c + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}
void n_sub(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(c + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}
void n_mul(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(c + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}
void n_div(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(c + i, vdivq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) c[i] = a[i] / b[i];
}
void n_mul_acc(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(c + i,
              vfmaq_f32(vld1q_f32(c + i), vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) c[i] = std::fma(a[i], b[i], c[i]);
}
void n_axpy(float s, const float* x, float* y, int64_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), vs, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
void n_scale(float s, const float* x, float* y, int64_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_f32(vs, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = s * x[i];
}
void n_relu(const float* x, float* y, int64_t n) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const uint32x4_t mask = vcgtq_f32(v, z);
    vst1q_f32(y + i, vreinterpretq_f32_u32(vandq_u32(
                         vreinterpretq_u32_f32(v), mask)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void n_relu_bwd(const float* x, const float* g, float* dx, int64_t n) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), z);
    const float32x4_t gv = vreinterpretq_f32_u32(
        vandq_u32(vreinterpretq_u32_f32(vld1q_f32(g + i)), mask));
    vst1q_f32(dx + i, vaddq_f32(vld1q_f32(dx + i), gv));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0f ? g[i] : 0.0f;
}
float n_reduce_sum(const float* x, int64_t n) {
  float32x4_t lo = vdupq_n_f32(0.0f), hi = vdupq_n_f32(0.0f);
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8) {
    lo = vaddq_f32(lo, vld1q_f32(x + i));
    hi = vaddq_f32(hi, vld1q_f32(x + i + 4));
  }
  float s = fold8(lo, hi);
  for (int64_t i = nv; i < n; ++i) s += x[i];
  return s;
}
float n_dot(const float* a, const float* b, int64_t n) {
  return dot_neon(a, b, n);
}

}  // namespace

const Ops* neon_ops() {
  static const Ops ops = {
      "neon",   n_gemm_nn, n_gemm_tn, n_gemm_nt, n_add,
      n_sub,    n_mul,     n_div,     n_mul_acc, n_axpy,
      n_scale,  n_relu,    n_relu_bwd, n_reduce_sum,
      n_dot,
  };
  return &ops;
}

}  // namespace pansharp::kern
