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
// AVX2+FMA kernels. Bit-identical to the scalar reference: lanes run the
// same fma chains, and dot-shaped reductions use the blocked-8 pattern with
// the 128-bit fold tree documented in kernels.hpp.

#include <immintrin.h>

#include <cmath>

#include "pansharp/kernels.hpp"

namespace pansharp::kern {
namespace {

inline float fold8(__m256 v) {
  __m128 q = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  __m128 r = _mm_add_ps(q, _mm_movehl_ps(q, q));
  return _mm_cvtss_f32(_mm_add_ss(r, _mm_shuffle_ps(r, r, 1)));
}

// Shared driver for gemm_nn / gemm_tn: they differ only in how the broadcast
// operand A is addressed.
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
  for (; j + 16 <= n; j += 16) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      __m256 c00, c01, c10, c11, c20, c21, c30, c31;
      if (acc) {
        c00 = _mm256_loadu_ps(c + (i + 0) * int64_t(ldc) + j);
        c01 = _mm256_loadu_ps(c + (i + 0) * int64_t(ldc) + j + 8);
        c10 = _mm256_loadu_ps(c + (i + 1) * int64_t(ldc) + j);
        c11 = _mm256_loadu_ps(c + (i + 1) * int64_t(ldc) + j + 8);
        c20 = _mm256_loadu_ps(c + (i + 2) * int64_t(ldc) + j);
        c21 = _mm256_loadu_ps(c + (i + 2) * int64_t(ldc) + j + 8);
        c30 = _mm256_loadu_ps(c + (i + 3) * int64_t(ldc) + j);
        c31 = _mm256_loadu_ps(c + (i + 3) * int64_t(ldc) + j + 8);
      } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
      }
      for (int p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + int64_t(p) * ldb + j);
        const __m256 b1 = _mm256_loadu_ps(b + int64_t(p) * ldb + j + 8);
        __m256 av;
        av = _mm256_set1_ps(a[aidx(i + 0, p)]);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_set1_ps(a[aidx(i + 1, p)]);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_set1_ps(a[aidx(i + 2, p)]);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_set1_ps(a[aidx(i + 3, p)]);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
      }
      _mm256_storeu_ps(c + (i + 0) * int64_t(ldc) + j, c00);
      _mm256_storeu_ps(c + (i + 0) * int64_t(ldc) + j + 8, c01);
      _mm256_storeu_ps(c + (i + 1) * int64_t(ldc) + j, c10);
      _mm256_storeu_ps(c + (i + 1) * int64_t(ldc) + j + 8, c11);
      _mm256_storeu_ps(c + (i + 2) * int64_t(ldc) + j, c20);
      _mm256_storeu_ps(c + (i + 2) * int64_t(ldc) + j + 8, c21);
      _mm256_storeu_ps(c + (i + 3) * int64_t(ldc) + j, c30);
      _mm256_storeu_ps(c + (i + 3) * int64_t(ldc) + j + 8, c31);
    }
    for (; i < m; ++i) {
      __m256 c0 = acc ? _mm256_loadu_ps(c + int64_t(i) * ldc + j)
                      : _mm256_setzero_ps();
      __m256 c1 = acc ? _mm256_loadu_ps(c + int64_t(i) * ldc + j + 8)
                      : _mm256_setzero_ps();
      for (int p = 0; p < k; ++p) {
        const __m256 av = _mm256_set1_ps(a[aidx(i, p)]);
        c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + int64_t(p) * ldb + j), c0);
        c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + int64_t(p) * ldb + j + 8),
                             c1);
      }
      _mm256_storeu_ps(c + int64_t(i) * ldc + j, c0);
      _mm256_storeu_ps(c + int64_t(i) * ldc + j + 8, c1);
    }
  }
  for (; j + 8 <= n; j += 8) {
    for (int i = 0; i < m; ++i) {
      __m256 c0 = acc ? _mm256_loadu_ps(c + int64_t(i) * ldc + j)
                      : _mm256_setzero_ps();
      for (int p = 0; p < k; ++p)
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(a[aidx(i, p)]),
                             _mm256_loadu_ps(b + int64_t(p) * ldb + j), c0);
      _mm256_storeu_ps(c + int64_t(i) * ldc + j, c0);
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

void a_gemm_nn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  gemm_bcast(m, n, k, a, IdxNN{lda}, b, ldb, c, ldc, acc);
}
void a_gemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  gemm_bcast(m, n, k, a, IdxTN{lda}, b, ldb, c, ldc, acc);
}

inline float dot_avx(const float* a, const float* b, int64_t n) {
  __m256 accv = _mm256_setzero_ps();
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8)
    accv = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                           accv);
  float s = fold8(accv);
  for (int64_t i = nv; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void a_gemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    int j = 0;
    for (; j + 2 <= n; j += 2) {
      __m256 s00 = _mm256_setzero_ps(), s01 = _mm256_setzero_ps();
      __m256 s10 = _mm256_setzero_ps(), s11 = _mm256_setzero_ps();
      __m256 s20 = _mm256_setzero_ps(), s21 = _mm256_setzero_ps();
      __m256 s30 = _mm256_setzero_ps(), s31 = _mm256_setzero_ps();
      const float* a0 = a + int64_t(i) * lda;
      const float* a1 = a0 + lda;
      const float* a2 = a1 + lda;
      const float* a3 = a2 + lda;
      const float* b0 = b + int64_t(j) * ldb;
      const float* b1 = b0 + ldb;
      int64_t pv = int64_t(k) & ~int64_t(7);
      for (int64_t p = 0; p < pv; p += 8) {
        const __m256 vb0 = _mm256_loadu_ps(b0 + p);
        const __m256 vb1 = _mm256_loadu_ps(b1 + p);
        __m256 va;
        va = _mm256_loadu_ps(a0 + p);
        s00 = _mm256_fmadd_ps(va, vb0, s00);
        s01 = _mm256_fmadd_ps(va, vb1, s01);
        va = _mm256_loadu_ps(a1 + p);
        s10 = _mm256_fmadd_ps(va, vb0, s10);
        s11 = _mm256_fmadd_ps(va, vb1, s11);
        va = _mm256_loadu_ps(a2 + p);
        s20 = _mm256_fmadd_ps(va, vb0, s20);
        s21 = _mm256_fmadd_ps(va, vb1, s21);
        va = _mm256_loadu_ps(a3 + p);
        s30 = _mm256_fmadd_ps(va, vb0, s30);
        s31 = _mm256_fmadd_ps(va, vb1, s31);
      }
      float r[4][2] = {{fold8(s00), fold8(s01)},
                       {fold8(s10), fold8(s11)},
                       {fold8(s20), fold8(s21)},
                       {fold8(s30), fold8(s31)}};
      const float* ar[4] = {a0, a1, a2, a3};
      for (int ii = 0; ii < 4; ++ii)
        for (int jj = 0; jj < 2; ++jj) {
          float s = r[ii][jj];
          const float* bp = jj ? b1 : b0;
          for (int64_t p = pv; p < k; ++p) s = std::fma(ar[ii][p], bp[p], s);
          float* cp = c + int64_t(i + ii) * ldc + j + jj;
          *cp = acc ? *cp + s : s;
        }
    }
    for (; j < n; ++j)
      for (int ii = 0; ii < 4; ++ii) {
        float s = dot_avx(a + int64_t(i + ii) * lda, b + int64_t(j) * ldb, k);
        float* cp = c + int64_t(i + ii) * ldc + j;
        *cp = acc ? *cp + s : s;
      }
  }
  for (; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = dot_avx(a + int64_t(i) * lda, b + int64_t(j) * ldb, k);
      float* cp = c + int64_t(i) * ldc + j;
      *cp = acc ? *cp + s : s;
    }
}

void a_add(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}
void a_sub(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}
void a_mul(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}
void a_div(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_div_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] / b[i];
}
void a_mul_acc(const float* a, const float* b, float* c, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i,
                     _mm256_fmadd_ps(_mm256_loadu_ps(a + i),
                                     _mm256_loadu_ps(b + i),
                                     _mm256_loadu_ps(c + i)));
  for (; i < n; ++i) c[i] = std::fma(a[i], b[i], c[i]);
}
void a_axpy(float s, const float* x, float* y, int64_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + i),
                               _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
void a_scale(float s, const float* x, float* y, int64_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = s * x[i];
}
void a_relu(const float* x, float* y, int64_t n) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(y + i,
                     _mm256_and_ps(v, _mm256_cmp_ps(v, z, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void a_relu_bwd(const float* x, const float* g, float* dx, int64_t n) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    const __m256 gv = _mm256_and_ps(_mm256_loadu_ps(g + i), mask);
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), gv));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0f ? g[i] : 0.0f;
}
float a_reduce_sum(const float* x, int64_t n) {
  __m256 accv = _mm256_setzero_ps();
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8)
    accv = _mm256_add_ps(accv, _mm256_loadu_ps(x + i));
  float s = fold8(accv);
  for (int64_t i = nv; i < n; ++i) s += x[i];
  return s;
}
float a_dot(const float* a, const float* b, int64_t n) {
  return dot_avx(a, b, n);
}

}  // namespace

const Ops* avx2_ops() {
  static const Ops ops = {
      "avx2",   a_gemm_nn, a_gemm_tn, a_gemm_nt, a_add,
      a_sub,    a_mul,     a_div,     a_mul_acc, a_axpy,
      a_scale,  a_relu,    a_relu_bwd, a_reduce_sum,
      a_dot,
  };
  return &ops;
}

}  // namespace pansharp::kern
