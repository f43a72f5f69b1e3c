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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pansharp/common.hpp"
#include "pansharp/tensor.hpp"

namespace pansharp {

// Planar multispectral or panchromatic image; band-major f32 planes with
// values clamped to [0,1] at creation.
struct Raster {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<float> data;  // band-major: data[(b*H + y)*W + x]

  Raster() = default;

  // Clamps to [0,1]; rejects NaN.
  static Raster from_values(int width, int height, int bands,
                            std::vector<float> values);
  static Raster zeros(int width, int height, int bands);

  float at(int b, int y, int x) const {
    return data[(size_t(b) * height + y) * width + x];
  }
  float& at(int b, int y, int x) {
    return data[(size_t(b) * height + y) * width + x];
  }
  const float* plane(int b) const {
    return data.data() + size_t(b) * height * width;
  }
  float* plane(int b) { return data.data() + size_t(b) * height * width; }
  size_t pixels() const { return size_t(width) * height; }

  // [1, bands, H, W] tensor view for the training path.
  template <class T>
  Array<T> to_array() const {
    std::vector<T> d(data.size());
    for (size_t i = 0; i < data.size(); ++i) d[i] = T(data[i]);
    return Array<T>({1, bands, height, width}, std::move(d));
  }
};

// Synthetic ground scene; hr_ms exists only for simulation and
// reduced-resolution scoring.
struct Scene {
  int64_t id = 0;
  uint64_t seed = 0;
  Raster hr_ms;
};

// Raster container: magic "PANR", little-endian u32 width/height/bands/dtype
// (0 = f32), then band-major f32 payload. Round trips bit-exactly.
void write_raster(const Raster& r, const std::string& path);
Raster read_raster(const std::string& path);
std::string raster_bytes(const Raster& r);
Raster raster_from_bytes(const std::string& bytes, const std::string& origin);

// Binary PPM (P6) from three band indices, or PGM (P5) from the band mean;
// per-band 1-99 percentile stretch, degenerate ranges map to mid-gray.
std::string export_preview(const Raster& r, const std::array<int, 3>& rgb);
std::string export_preview_gray(const Raster& r);
// band_map is "gray" or three comma-separated band indices, e.g. "2,1,0".
std::string export_preview(const Raster& r, const std::string& band_map);

// Deterministic scene generator: band-correlated low-frequency fields from a
// shared latent mixed through a random spectral matrix, sharp geometric shapes
// with band-dependent albedo, and mild uniform noise. Uses IEEE arithmetic
// only, so output is byte-identical across platforms for a fixed seed.
Scene synth_scene(uint64_t seed, int size, int bands);

}  // namespace pansharp
