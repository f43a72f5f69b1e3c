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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pansharp {

// Error taxonomy mirrored by the CLI exit codes: ConfigError -> 2,
// DataError -> 3, NumericError -> 4, anything else -> 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad parameters, shapes, or contract violations caused by caller input.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or inconsistent data (files, batches, references).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or diverging optimization.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Deterministic splitmix64 generator. Uniform draws use only IEEE arithmetic
// (no libm), so sequences are byte-identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // in [0, n)
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Derive an independent stream; mixing keeps streams decorrelated for
  // adjacent tags.
  Rng fork(uint64_t tag) const {
    Rng r(state_ ^ (0xd1342543de82ef95ull * (tag + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace pansharp
