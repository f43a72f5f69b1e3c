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
#include "pansharp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pansharp {

Raster Raster::from_values(int width, int height, int bands,
                           std::vector<float> values) {
  if (width < 1 || height < 1 || bands < 1)
    throw ConfigError("raster: non-positive dimensions");
  if (values.size() != size_t(width) * height * bands)
    throw ConfigError("raster: payload size does not match dimensions");
  for (float& v : values) {
    if (std::isnan(v)) throw NumericError("raster: NaN sample");
    v = std::min(1.0f, std::max(0.0f, v));
  }
  Raster r;
  r.width = width;
  r.height = height;
  r.bands = bands;
  r.data = std::move(values);
  return r;
}

Raster Raster::zeros(int width, int height, int bands) {
  return from_values(width, height, bands,
                     std::vector<float>(size_t(width) * height * bands, 0.0f));
}

// ---------------------------------------------------------------------------
// PANR container

namespace {
void put_u32(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.append(b, 4);
}
uint32_t get_u32(const std::string& s, size_t& off, const std::string& origin) {
  if (off + 4 > s.size())
    throw DataError("raster '" + origin + "': truncated header at byte " +
                    std::to_string(off));
  uint32_t v = uint32_t(uint8_t(s[off])) | uint32_t(uint8_t(s[off + 1])) << 8 |
               uint32_t(uint8_t(s[off + 2])) << 16 |
               uint32_t(uint8_t(s[off + 3])) << 24;
  off += 4;
  return v;
}
}  // namespace

std::string raster_bytes(const Raster& r) {
  std::string out = "PANR";
  put_u32(out, uint32_t(r.width));
  put_u32(out, uint32_t(r.height));
  put_u32(out, uint32_t(r.bands));
  put_u32(out, 0);  // dtype: f32
  static_assert(sizeof(float) == 4);
  const size_t base = out.size();
  out.resize(base + r.data.size() * 4);
  std::memcpy(out.data() + base, r.data.data(), r.data.size() * 4);
  return out;
}

Raster raster_from_bytes(const std::string& s, const std::string& origin) {
  if (s.size() < 4 || s.compare(0, 4, "PANR") != 0)
    throw DataError("raster '" + origin + "': bad magic at byte 0");
  size_t off = 4;
  const uint32_t w = get_u32(s, off, origin);
  const uint32_t h = get_u32(s, off, origin);
  const uint32_t b = get_u32(s, off, origin);
  const uint32_t dtype = get_u32(s, off, origin);
  if (dtype != 0)
    throw DataError("raster '" + origin + "': unsupported dtype tag at byte " +
                    std::to_string(off - 4));
  if (w == 0 || h == 0 || b == 0 || uint64_t(w) * h * b > (1ull << 31))
    throw DataError("raster '" + origin + "': dimension overflow at byte 4");
  const uint64_t n = uint64_t(w) * h * b;
  if (off + n * 4 > s.size())
    throw DataError("raster '" + origin +
                    "': declared size exceeds payload at byte " +
                    std::to_string(off));
  if (off + n * 4 < s.size())
    throw DataError("raster '" + origin + "': trailing bytes at " +
                    std::to_string(off + n * 4));
  std::vector<float> data(size_t{n});
  std::memcpy(data.data(), s.data() + off, size_t(n) * 4);
  return Raster::from_values(int(w), int(h), int(b), std::move(data));
}

void write_raster(const Raster& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("raster: cannot open '" + path + "' for write");
  const std::string bytes = raster_bytes(r);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw DataError("raster: write failed for '" + path + "'");
}

Raster read_raster(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("raster: cannot open '" + path + "'");
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  return raster_from_bytes(s, path);
}

// ---------------------------------------------------------------------------
// Previews

namespace {
// 1-99 percentile limits by nearest rank; lo==hi collapses to mid-gray.
std::pair<float, float> stretch_limits(const std::vector<float>& v) {
  std::vector<float> s = v;
  std::sort(s.begin(), s.end());
  const auto rank = [&](double p) {
    return s[size_t(std::lround(p / 100.0 * double(s.size() - 1)))];
  };
  return {rank(1.0), rank(99.0)};
}

uint8_t stretch(float v, float lo, float hi) {
  if (!(hi > lo)) return 128;
  const float t = (v - lo) / (hi - lo);
  const float c = std::min(1.0f, std::max(0.0f, t));
  return uint8_t(std::lround(c * 255.0f));
}
}  // namespace

std::string export_preview(const Raster& r, const std::array<int, 3>& rgb) {
  for (int b : rgb)
    if (b < 0 || b >= r.bands)
      throw ConfigError("preview: band index " + std::to_string(b) +
                        " out of range for " + std::to_string(r.bands) +
                        " bands");
  std::array<std::pair<float, float>, 3> lim;
  for (int c = 0; c < 3; ++c) {
    std::vector<float> band(r.plane(rgb[c]), r.plane(rgb[c]) + r.pixels());
    lim[c] = stretch_limits(band);
  }
  std::string out = "P6\n" + std::to_string(r.width) + " " +
                    std::to_string(r.height) + "\n255\n";
  out.reserve(out.size() + r.pixels() * 3);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.push_back(char(
            stretch(r.at(rgb[c], y, x), lim[c].first, lim[c].second)));
  return out;
}

std::string export_preview_gray(const Raster& r) {
  std::vector<float> gray(r.pixels(), 0.0f);
  for (int b = 0; b < r.bands; ++b) {
    const float* p = r.plane(b);
    for (size_t i = 0; i < r.pixels(); ++i) gray[i] += p[i];
  }
  for (float& v : gray) v /= float(r.bands);
  const auto lim = stretch_limits(gray);
  std::string out = "P5\n" + std::to_string(r.width) + " " +
                    std::to_string(r.height) + "\n255\n";
  out.reserve(out.size() + r.pixels());
  for (size_t i = 0; i < r.pixels(); ++i)
    out.push_back(char(stretch(gray[i], lim.first, lim.second)));
  return out;
}

std::string export_preview(const Raster& r, const std::string& band_map) {
  if (band_map == "gray") return export_preview_gray(r);
  std::vector<int> idx;
  size_t pos = 0;
  while (pos <= band_map.size()) {
    size_t next = band_map.find(',', pos);
    if (next == std::string::npos) next = band_map.size();
    try {
      idx.push_back(std::stoi(band_map.substr(pos, next - pos)));
    } catch (const std::exception&) {
      throw ConfigError("preview: bad band map '" + band_map + "'");
    }
    pos = next + 1;
  }
  if (idx.size() != 3)
    throw ConfigError("preview: band map needs three indices or 'gray'");
  return export_preview(r, std::array<int, 3>{idx[0], idx[1], idx[2]});
}

// ---------------------------------------------------------------------------
// Scene synthesis

namespace {

struct LatentField {
  int grid = 0;
  int cell = 8;
  std::vector<double> values;  // (grid)^2

  double sample(double x, double y) const {
    const double gx = x / cell;
    const double gy = y / cell;
    const int x0 = std::min(int(gx), grid - 2);
    const int y0 = std::min(int(gy), grid - 2);
    const double fx = gx - x0;
    const double fy = gy - y0;
    const double v00 = values[size_t(y0) * grid + x0];
    const double v01 = values[size_t(y0) * grid + x0 + 1];
    const double v10 = values[size_t(y0 + 1) * grid + x0];
    const double v11 = values[size_t(y0 + 1) * grid + x0 + 1];
    return (v00 * (1 - fx) + v01 * fx) * (1 - fy) +
           (v10 * (1 - fx) + v11 * fx) * fy;
  }
};

}  // namespace

Scene synth_scene(uint64_t seed, int size, int bands) {
  if (size < 8 || size % 4 != 0)
    throw ConfigError("synth_scene: size must be a multiple of 4 and >= 8");
  if (bands != 4 && bands != 8)
    throw ConfigError("synth_scene: bands must be 4 or 8");

  Rng rng(seed ^ 0xa5c152f00ull);
  constexpr int kLatents = 3;

  LatentField lat[kLatents];
  for (auto& f : lat) {
    f.cell = 8;
    f.grid = size / f.cell + 2;
    f.values.resize(size_t(f.grid) * f.grid);
    for (auto& v : f.values) v = rng.uniform();
  }

  // Random spectral mixing: rows normalized so bands stay correlated but
  // distinct (spectral-fidelity losses need non-degenerate band structure).
  std::vector<double> mix(size_t(bands) * kLatents);
  for (int b = 0; b < bands; ++b) {
    double sum = 0.0;
    for (int l = 0; l < kLatents; ++l) {
      const double v = 0.05 + rng.uniform();
      mix[size_t(b) * kLatents + l] = v;
      sum += v;
    }
    for (int l = 0; l < kLatents; ++l) mix[size_t(b) * kLatents + l] /= sum;
  }

  std::vector<double> img(size_t(bands) * size * size);
  for (int b = 0; b < bands; ++b)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = 0.0;
        for (int l = 0; l < kLatents; ++l)
          v += mix[size_t(b) * kLatents + l] * lat[l].sample(x, y);
        img[(size_t(b) * size + y) * size + x] = 0.15 + 0.7 * v;
      }

  // Sharp structures: rectangles, ellipses, lines with band-dependent albedo.
  const int n_shapes = 6 + int(rng.below(6));
  for (int s = 0; s < n_shapes; ++s) {
    const int kind = int(rng.below(3));
    std::vector<double> albedo(bands);
    const double base = rng.uniform(0.1, 0.9);
    for (int b = 0; b < bands; ++b)
      albedo[b] =
          std::min(1.0, std::max(0.0, base + rng.uniform(-0.25, 0.25)));
    auto paint = [&](int x, int y) {
      for (int b = 0; b < bands; ++b)
        img[(size_t(b) * size + y) * size + x] = albedo[b];
    };
    if (kind == 0) {  // rectangle
      const int w = 2 + int(rng.below(uint64_t(size / 2)));
      const int h = 2 + int(rng.below(uint64_t(size / 2)));
      const int x0 = int(rng.below(uint64_t(size - 1)));
      const int y0 = int(rng.below(uint64_t(size - 1)));
      for (int y = y0; y < std::min(size, y0 + h); ++y)
        for (int x = x0; x < std::min(size, x0 + w); ++x) paint(x, y);
    } else if (kind == 1) {  // ellipse
      const double cx = rng.uniform(0, size);
      const double cy = rng.uniform(0, size);
      const double rx = rng.uniform(2, size / 4.0);
      const double ry = rng.uniform(2, size / 4.0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = (x - cx) / rx;
          const double dy = (y - cy) / ry;
          if (dx * dx + dy * dy <= 1.0) paint(x, y);
        }
    } else {  // line segment with thickness
      const double x0 = rng.uniform(0, size), y0 = rng.uniform(0, size);
      const double x1 = rng.uniform(0, size), y1 = rng.uniform(0, size);
      const double th = rng.uniform(0.7, 2.0);
      const double ux = x1 - x0, uy = y1 - y0;
      const double len2 = ux * ux + uy * uy + 1e-9;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          double t = ((x - x0) * ux + (y - y0) * uy) / len2;
          t = std::min(1.0, std::max(0.0, t));
          const double px = x0 + t * ux - x, py = y0 + t * uy - y;
          if (std::sqrt(px * px + py * py) <= th) paint(x, y);
        }
    }
  }

  // Mild per-band sensor noise.
  for (int b = 0; b < bands; ++b)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img[(size_t(b) * size + y) * size + x] += rng.uniform(-0.02, 0.02);

  std::vector<float> out(img.size());
  for (size_t i = 0; i < img.size(); ++i) out[i] = float(img[i]);
  Scene scene;
  scene.id = int64_t(seed);
  scene.seed = seed;
  scene.hr_ms = Raster::from_values(size, size, bands, std::move(out));
  return scene;
}

}  // namespace pansharp
