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

namespace pansharp::kern {

// f32 compute kernels. The scalar reference and every SIMD variant produce
// bit-identical results: per output element the accumulation order is pinned
// (k ascending fma chains for gemm_nn/gemm_tn, the blocked-8 pattern
// below for dot-shaped reductions), and each lane performs the same rounded
// operations a scalar loop would.
//
// Blocked-8 reduction: eight interleaved partial sums over k (lane j takes
// k == j mod 8), folded with the AVX2 128-bit tree
//   s = ((p0+p4)+(p2+p6)) + ((p1+p5)+(p3+p7))
// then trailing elements appended sequentially.
struct Ops {
  const char* name;

  // C[M,N] (+)= A[M,K] * B[K,N], row-major with leading dimensions.
  void (*gemm_nn)(int m, int n, int k, const float* a, int lda,
                  const float* b, int ldb, float* c, int ldc, bool acc);
  // C[M,N] (+)= A^T * B with A stored [K,M]: C[i,j] = sum_k A[k,i] B[k,j].
  void (*gemm_tn)(int m, int n, int k, const float* a, int lda,
                  const float* b, int ldb, float* c, int ldc, bool acc);
  // C[M,N] (+)= A * B^T with B stored [N,K]: C[i,j] = sum_k A[i,k] B[j,k].
  void (*gemm_nt)(int m, int n, int k, const float* a, int lda,
                  const float* b, int ldb, float* c, int ldc, bool acc);

  void (*add)(const float* a, const float* b, float* c, int64_t n);
  void (*sub)(const float* a, const float* b, float* c, int64_t n);
  void (*mul)(const float* a, const float* b, float* c, int64_t n);
  void (*div)(const float* a, const float* b, float* c, int64_t n);
  // c[i] += a[i] * b[i]
  void (*mul_acc)(const float* a, const float* b, float* c, int64_t n);
  // y[i] += s * x[i]
  void (*axpy)(float s, const float* x, float* y, int64_t n);
  // y[i] = s * x[i]
  void (*scale)(float s, const float* x, float* y, int64_t n);
  void (*relu)(const float* x, float* y, int64_t n);
  // dx[i] += x[i] > 0 ? g[i] : 0
  void (*relu_bwd)(const float* x, const float* g, float* dx, int64_t n);

  float (*reduce_sum)(const float* x, int64_t n);
  float (*dot)(const float* a, const float* b, int64_t n);
};

const Ops& scalar_ops();
// SIMD variant compiled for this target if the CPU supports it, else null.
const Ops* simd_ops();
// Runtime selection; PANSHARP_KERNELS=scalar|avx2|neon|auto overrides.
const Ops& active_ops();

// ---------------------------------------------------------------------------
// Typed entry points. float routes through the dispatch table; double always
// runs the plain sequential loops below (the verification path).

template <class T>
inline void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b,
                    int ldb, T* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * ldc + j] : T(0);
      for (int p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
}
template <>
inline void gemm_nn<float>(int m, int n, int k, const float* a, int lda,
                           const float* b, int ldb, float* c, int ldc,
                           bool acc) {
  active_ops().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

template <class T>
inline void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b,
                    int ldb, T* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * ldc + j] : T(0);
      for (int p = 0; p < k; ++p) s += a[p * lda + i] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
}
template <>
inline void gemm_tn<float>(int m, int n, int k, const float* a, int lda,
                           const float* b, int ldb, float* c, int ldc,
                           bool acc) {
  active_ops().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

template <class T>
inline void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b,
                    int ldb, T* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * ldc + j] : T(0);
      for (int p = 0; p < k; ++p) s += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] = s;
    }
}
template <>
inline void gemm_nt<float>(int m, int n, int k, const float* a, int lda,
                           const float* b, int ldb, float* c, int ldc,
                           bool acc) {
  active_ops().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, acc);
}

template <class T>
inline T reduce_sum(const T* x, int64_t n) {
  T s = 0;
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}
template <>
inline float reduce_sum<float>(const float* x, int64_t n) {
  return active_ops().reduce_sum(x, n);
}

template <class T>
inline T dot(const T* a, const T* b, int64_t n) {
  T s = 0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
template <>
inline float dot<float>(const float* a, const float* b, int64_t n) {
  return active_ops().dot(a, b, n);
}

template <class T>
inline void axpy(T s, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += s * x[i];
}
template <>
inline void axpy<float>(float s, const float* x, float* y, int64_t n) {
  active_ops().axpy(s, x, y, n);
}

}  // namespace pansharp::kern
