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

#include <optional>
#include <string>

#include "pansharp/protocol.hpp"
#include "pansharp/raster.hpp"

namespace pansharp {

// Evaluation-grade quality indices (pure f64 path, non-differentiable).

struct MetricReport {
  std::optional<double> mpsnr, ergas, sam, q2n, d_lambda, d_s, qnr;

  static const char* csv_header() {
    return "mpsnr,ergas,sam,q2n,d_lambda,d_s,qnr";
  }
  std::string csv_row() const;
};

// Mean over bands of the peak signal-to-noise ratio at unit peak; identical
// bands report the 99 dB cap rather than infinity.
double mpsnr(const Raster& fused, const Raster& ref);

// Relative dimensionless global synthesis error.
double ergas(const Raster& fused, const Raster& ref, int ratio = 4);

// Mean spectral angle in degrees; zero-vector pixels are skipped.
double sam_degrees(const Raster& fused, const Raster& ref);

// Hypercomplex universal quality index (Q4/Q8) over distinct blocks; the
// block edge clamps to the image size. Band count must be a power of two.
double q2n(const Raster& fused, const Raster& ref, int block = 32);

// Signed windowed universal image quality index between two planes,
// averaged over distinct blocks (edge clamped to the plane size).
double uiqi(const float* a, const float* b, int w, int h, int block = 32);

struct QnrResult {
  double d_lambda = 0.0;
  double d_s = 0.0;
  double qnr = 0.0;
};

// No-reference protocol: spectral distortion between fused and LRMS band
// pairs, spatial distortion against PAN and its MTF-degraded version,
// exponents p = q = 1.
QnrResult qnr(const Raster& fused, const Raster& lrms, const Raster& pan,
              const SensorModel& model, int block = 32);

// Full report; reduced-resolution columns require the reference scene.
MetricReport evaluate(const Raster& fused, const Raster* hr_ref,
                      const Raster& lrms, const Raster& pan,
                      const SensorModel& model);

}  // namespace pansharp
