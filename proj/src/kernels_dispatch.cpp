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
#include <cstdlib>
#include <cstring>

#include "pansharp/common.hpp"
#include "pansharp/kernels.hpp"

namespace pansharp::kern {

#if defined(PANSHARP_HAVE_AVX2_TU)
const Ops* avx2_ops();
#endif
#if defined(PANSHARP_HAVE_NEON_TU)
const Ops* neon_ops();
#endif

const Ops* simd_ops() {
#if defined(PANSHARP_HAVE_AVX2_TU)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_ops();
#endif
#if defined(PANSHARP_HAVE_NEON_TU)
  return neon_ops();  // NEON is baseline on aarch64
#endif
  return nullptr;
}

static const Ops& select_ops() {
  const char* env = std::getenv("PANSHARP_KERNELS");
  if (env == nullptr || std::strcmp(env, "") == 0 ||
      std::strcmp(env, "auto") == 0) {
    const Ops* simd = simd_ops();
    return simd ? *simd : scalar_ops();
  }
  if (std::strcmp(env, "scalar") == 0) return scalar_ops();
  const Ops* simd = simd_ops();
  if (simd && std::strcmp(env, simd->name) == 0) return *simd;
  throw ConfigError(std::string("PANSHARP_KERNELS: unsupported variant '") +
                    env + "' on this machine");
}

const Ops& active_ops() {
  static const Ops& ops = select_ops();
  return ops;
}

}  // namespace pansharp::kern
