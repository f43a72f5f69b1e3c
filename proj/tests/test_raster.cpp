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
#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "pansharp/raster.hpp"

using namespace pansharp;

TEST_SUITE("raster") {

TEST_CASE("creation clamps to [0,1] and rejects NaN") {
  Raster r = Raster::from_values(2, 1, 1, {-0.5f, 1.5f});
  CHECK(r.data[0] == 0.0f);
  CHECK(r.data[1] == 1.0f);
  CHECK_THROWS_AS(Raster::from_values(1, 1, 1, {NAN}), NumericError);
  CHECK_THROWS_AS(Raster::from_values(2, 2, 1, {0.1f}), ConfigError);
}

TEST_CASE("synth_scene: range, determinism, seed sensitivity, rejection") {
  Scene a = synth_scene(0, 64, 4);
  CHECK(a.hr_ms.width == 64);
  CHECK(a.hr_ms.height == 64);
  CHECK(a.hr_ms.bands == 4);
  for (float v : a.hr_ms.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Scene b = synth_scene(0, 64, 4);
  CHECK(std::memcmp(a.hr_ms.data.data(), b.hr_ms.data.data(),
                    a.hr_ms.data.size() * 4) == 0);
  Scene c = synth_scene(1, 64, 4);
  CHECK(std::memcmp(a.hr_ms.data.data(), c.hr_ms.data.data(),
                    a.hr_ms.data.size() * 4) != 0);
  CHECK_THROWS_AS(synth_scene(0, 63, 4), ConfigError);
  CHECK_THROWS_AS(synth_scene(0, 64, 5), ConfigError);
  CHECK(synth_scene(3, 32, 8).hr_ms.bands == 8);
}

TEST_CASE("PANR container round trips bit-exactly (random shapes)") {
  Rng rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    const int w = 1 + int(rng.below(17));
    const int h = 1 + int(rng.below(13));
    const int b = 1 + int(rng.below(8));
    Raster r = oracle::random_raster(rng, w, h, b);
    const std::string path = "/tmp/pansharp_test_roundtrip.panr";
    write_raster(r, path);
    Raster back = read_raster(path);
    CHECK(back.width == w);
    CHECK(back.height == h);
    CHECK(back.bands == b);
    CHECK(std::memcmp(back.data.data(), r.data.data(), r.data.size() * 4) ==
          0);
  }
}

TEST_CASE("PANR rejects bad magic, truncation, overflow, trailing bytes") {
  Rng rng(42);
  Raster r = oracle::random_raster(rng, 4, 4, 2);
  std::string good = raster_bytes(r);
  {
    std::string bad = good;
    bad.replace(0, 4, "XXXX");
    CHECK_THROWS_WITH_AS(raster_from_bytes(bad, "t"),
                         doctest::Contains("bad magic"), DataError);
  }
  {
    std::string bad = good.substr(0, good.size() - 5);
    CHECK_THROWS_WITH_AS(raster_from_bytes(bad, "t"),
                         doctest::Contains("declared size exceeds payload"),
                         DataError);
  }
  {
    std::string bad = good + "zz";
    CHECK_THROWS_AS(raster_from_bytes(bad, "t"), DataError);
  }
  {
    // huge declared dimensions
    std::string bad = good;
    bad[4] = char(0xff);
    bad[5] = char(0xff);
    bad[6] = char(0xff);
    bad[7] = char(0x7f);
    CHECK_THROWS_WITH_AS(raster_from_bytes(bad, "t"),
                         doctest::Contains("overflow"), DataError);
  }
}

TEST_CASE("previews: graymap, degenerate stretch, band permutation") {
  Rng rng(43);
  {
    Raster pan = oracle::random_raster(rng, 8, 6, 1);
    const std::string p = export_preview(pan, "gray");
    CHECK(p.compare(0, 2, "P5") == 0);
    CHECK(p.find("8 6") != std::string::npos);
  }
  {
    Raster flat =
        Raster::from_values(4, 4, 3, std::vector<float>(48, 0.5f));
    const std::string p = export_preview(flat, std::array<int, 3>{0, 1, 2});
    const size_t header = p.find("255\n") + 4;
    for (size_t i = header; i < p.size(); ++i) CHECK(uint8_t(p[i]) == 128);
  }
  {
    Raster r = oracle::random_raster(rng, 5, 5, 4);
    const std::string a = export_preview(r, std::array<int, 3>{2, 1, 0});
    const std::string b = export_preview(r, std::array<int, 3>{0, 1, 2});
    const size_t header = a.find("255\n") + 4;
    REQUIRE(a.size() == b.size());
    bool swapped = true;
    for (size_t i = header; i + 2 < a.size(); i += 3)
      swapped = swapped && a[i] == b[i + 2] && a[i + 2] == b[i] &&
                a[i + 1] == b[i + 1];
    CHECK(swapped);
    CHECK(a != b);
  }
  {
    Raster r = oracle::random_raster(rng, 4, 4, 2);
    CHECK_THROWS_AS(export_preview(r, std::array<int, 3>{0, 1, 2}), ConfigError);
    CHECK_THROWS_AS(export_preview(r, "0,1"), ConfigError);
  }
}

}  // TEST_SUITE
