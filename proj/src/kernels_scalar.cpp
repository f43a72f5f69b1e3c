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
// Scalar reference kernels. Every loop mirrors the operation order of the
// SIMD variants exactly (fma chains, blocked-8 reductions), so the variants
// can be equivalence-tested bit for bit. Compiled with -fno-tree-vectorize.

#include <cmath>

#include "pansharp/kernels.hpp"

namespace pansharp::kern {
namespace {

void s_gemm_nn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = acc ? c[i * ldc + j] : 0.0f;
      for (int p = 0; p < k; ++p)
        s = std::fma(a[i * lda + p], b[p * ldb + j], s);
      c[i * ldc + j] = s;
    }
}

void s_gemm_tn(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = acc ? c[i * ldc + j] : 0.0f;
      for (int p = 0; p < k; ++p)
        s = std::fma(a[p * lda + i], b[p * ldb + j], s);
      c[i * ldc + j] = s;
    }
}

// Blocked-8 dot; the fold tree matches the AVX2 128-bit reduction.
float dot8(const float* a, const float* b, int64_t n) {
  float p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8)
    for (int j = 0; j < 8; ++j) p[j] = std::fma(a[i + j], b[i + j], p[j]);
  float s = ((p[0] + p[4]) + (p[2] + p[6])) + ((p[1] + p[5]) + (p[3] + p[7]));
  for (int64_t i = nv; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void s_gemm_nt(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = dot8(a + int64_t(i) * lda, b + int64_t(j) * ldb, k);
      c[i * ldc + j] = acc ? c[i * ldc + j] + s : s;
    }
}

void s_add(const float* a, const float* b, float* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
void s_sub(const float* a, const float* b, float* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
void s_mul(const float* a, const float* b, float* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
void s_div(const float* a, const float* b, float* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] / b[i];
}
void s_mul_acc(const float* a, const float* b, float* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = std::fma(a[i], b[i], c[i]);
}
void s_axpy(float s, const float* x, float* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
void s_scale(float s, const float* x, float* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = s * x[i];
}
void s_relu(const float* x, float* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void s_relu_bwd(const float* x, const float* g, float* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0f ? g[i] : 0.0f;
}
float s_reduce_sum(const float* x, int64_t n) {
  float p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t nv = n & ~int64_t(7);
  for (int64_t i = 0; i < nv; i += 8)
    for (int j = 0; j < 8; ++j) p[j] += x[i + j];
  float s = ((p[0] + p[4]) + (p[2] + p[6])) + ((p[1] + p[5]) + (p[3] + p[7]));
  for (int64_t i = nv; i < n; ++i) s += x[i];
  return s;
}

float s_dot(const float* a, const float* b, int64_t n) { return dot8(a, b, n); }

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      "scalar",  s_gemm_nn, s_gemm_tn, s_gemm_nt, s_add,
      s_sub,     s_mul,     s_div,     s_mul_acc, s_axpy,
      s_scale,   s_relu,    s_relu_bwd, s_reduce_sum,
      s_dot,
  };
  return ops;
}

}  // namespace pansharp::kern
