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

#include "pansharp/raster.hpp"
#include "pansharp/tensor.hpp"

namespace pansharp {

// Gaussian approximation of the sensor MTF plus the spectral response used
// to synthesize PAN from the ground scene.
struct SensorModel {
  int ratio = 4;
  std::vector<float> mtf_gains;   // per-band Nyquist gain in (0,1)
  std::vector<float> pan_weights; // nonnegative, sum 1

  static SensorModel standard(int bands, double gain = 0.3) {
    SensorModel m;
    m.mtf_gains.assign(bands, float(gain));
    m.pan_weights.assign(bands, float(1.0 / bands));
    return m;
  }

  void validate(int bands) const {
    if (ratio < 2) throw ConfigError("sensor: ratio must be >= 2");
    if (int(mtf_gains.size()) != bands)
      throw ConfigError("sensor: gain count does not match band count");
    for (float g : mtf_gains)
      if (!(g > 0.0f && g < 1.0f))
        throw ConfigError("sensor: Nyquist gain must lie in (0,1)");
    if (int(pan_weights.size()) != bands)
      throw ConfigError("sensor: PAN weight count does not match band count");
    float sum = 0.0f;
    for (float w : pan_weights) {
      if (w < 0.0f) throw ConfigError("sensor: negative PAN weight");
      sum += w;
    }
    if (std::abs(sum - 1.0f) > 1e-6f)
      throw ConfigError("sensor: PAN weights must sum to 1");
  }

  // The PAN channel is degraded with the mean of the band gains.
  double pan_gain() const {
    double s = 0.0;
    for (float g : mtf_gains) s += g;
    return s / double(mtf_gains.size());
  }
};

// sigma of the Gaussian whose transfer function reaches gain G at Nyquist.
inline double mtf_sigma(double gain, int ratio) {
  return (double(ratio) / M_PI) * std::sqrt(-std::log(gain) / 2.0);
}

inline int mtf_kernel_size(double sigma) {
  return 2 * int(std::ceil(4.0 * sigma)) + 1;
}

// Reflect-padded separable Gaussian blur of one plane.
template <class T>
inline void blur_plane(const T* src, T* dst, int w, int h, double sigma,
                       int ksize) {
  const detail::TapTable tr = detail::gaussian_taps(w, sigma, ksize);
  const detail::TapTable tc = detail::gaussian_taps(h, sigma, ksize);
  std::vector<T> mid(size_t(w) * h);
  detail::taps_apply_rows(tr, src, w, mid.data(), h);
  detail::taps_apply_cols(tc, mid.data(), h, w, dst, 1);
}

// Bicubic resampling of one plane (same kernel as the tensor path).
template <class T>
inline void resize_plane(const T* src, int w, int h, T* dst, int ow, int oh) {
  const detail::TapTable tr = detail::bicubic_taps(w, ow);
  const detail::TapTable tc = detail::bicubic_taps(h, oh);
  std::vector<T> mid(size_t(ow) * h);
  detail::taps_apply_rows(tr, src, w, mid.data(), h);
  detail::taps_apply_cols(tc, mid.data(), h, ow, dst, 1);
}

// MTF-matched degradation: per-band Gaussian blur with the band's Nyquist
// gain, then decimation at pixel offset 0.
inline Raster mtf_degrade(const Raster& hr, const SensorModel& model) {
  model.validate(hr.bands);
  if (hr.width % model.ratio != 0 || hr.height % model.ratio != 0)
    throw ConfigError("mtf_degrade: dimensions must be multiples of ratio");
  const int ow = hr.width / model.ratio;
  const int oh = hr.height / model.ratio;
  std::vector<float> out(size_t(ow) * oh * hr.bands);
  std::vector<float> blurred(hr.pixels());
  for (int b = 0; b < hr.bands; ++b) {
    const double sigma = mtf_sigma(model.mtf_gains[b], model.ratio);
    blur_plane(hr.plane(b), blurred.data(), hr.width, hr.height, sigma,
               mtf_kernel_size(sigma));
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out[(size_t(b) * oh + y) * ow + x] =
            blurred[size_t(y) * model.ratio * hr.width + x * model.ratio];
  }
  return Raster::from_values(ow, oh, hr.bands, std::move(out));
}

// Single-band degradation of the PAN channel to LR scale.
inline Raster degrade_pan(const Raster& pan, const SensorModel& model) {
  if (pan.bands != 1) throw ConfigError("degrade_pan: expects PAN input");
  if (pan.width % model.ratio != 0 || pan.height % model.ratio != 0)
    throw ConfigError("degrade_pan: dimensions must be multiples of ratio");
  const int ow = pan.width / model.ratio;
  const int oh = pan.height / model.ratio;
  const double sigma = mtf_sigma(model.pan_gain(), model.ratio);
  std::vector<float> blurred(pan.pixels());
  blur_plane(pan.plane(0), blurred.data(), pan.width, pan.height, sigma,
             mtf_kernel_size(sigma));
  std::vector<float> out(size_t(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[size_t(y) * ow + x] =
          blurred[size_t(y) * model.ratio * pan.width + x * model.ratio];
  return Raster::from_values(ow, oh, 1, std::move(out));
}

// Pixelwise weighted band sum standing in for the PAN spectral response.
inline Raster synth_pan(const Raster& hr, const SensorModel& model) {
  model.validate(hr.bands);
  std::vector<float> out(hr.pixels(), 0.0f);
  for (int b = 0; b < hr.bands; ++b) {
    const float* p = hr.plane(b);
    const float w = model.pan_weights[b];
    for (size_t i = 0; i < out.size(); ++i) out[i] += w * p[i];
  }
  return Raster::from_values(hr.width, hr.height, 1, std::move(out));
}

// Plain bicubic x-ratio upsampling of every band; the weakest fusion
// baseline.
inline Raster exp_upsample(const Raster& lrms, int ratio = 4) {
  const int ow = lrms.width * ratio;
  const int oh = lrms.height * ratio;
  std::vector<float> out(size_t(ow) * oh * lrms.bands);
  for (int b = 0; b < lrms.bands; ++b)
    resize_plane(lrms.plane(b), lrms.width, lrms.height,
                 out.data() + size_t(b) * ow * oh, ow, oh);
  return Raster::from_values(ow, oh, lrms.bands, std::move(out));
}

// Co-registered patch group for one geographic scene.
struct SceneTriplet {
  int64_t scene_id = 0;
  Raster lrms;
  Raster pan;
  std::optional<Raster> pseudo_hrms;
};

// ---------------------------------------------------------------------------
// Band-dependent spatial detail fusion. Per band b, ridge least squares at
// reduced scale fits the Wald residual (M_b minus its degraded re-expansion)
// against the degraded PAN detail plus the degraded expanded MS bands
// (centered):
//   min || y_b - [d, M_L] theta ||^2 + lambda |theta|^2
// The injection gain gamma_b is theta_b[0]; only the PAN detail layer
// gamma_b * (PAN - expand(degrade(PAN))) is injected on top of the bicubic
// expansion, so a PAN that equals its own low-pass injects nothing. The MS
// columns act as nuisance regressors that keep gamma_b from absorbing the
// smooth part of the residual.
struct BdsdCoefficients {
  // theta[b] has size bands+1: the PAN-detail gain gamma first, then the
  // nuisance weights on the degraded expanded MS bands.
  std::vector<std::vector<double>> theta;
  double ridge = 1e-6;
};

// Reduced-scale regression features shared by the solver and its tests.
struct BdsdDesign {
  std::vector<double> detail_lr;              // degraded PAN detail at LR
  std::vector<double> pan_detail;             // PAN detail layer (HR scale)
  std::vector<std::vector<double>> ms_l;      // degraded expanded bands
  std::vector<std::vector<double>> expanded;  // bicubic expansion (HR scale)
  std::vector<std::vector<double>> residual;  // M_b - degraded expansion
};

inline BdsdDesign bdsd_design(const Raster& lrms, const Raster& pan,
                              const SensorModel& model) {
  if (pan.width != lrms.width * model.ratio ||
      pan.height != lrms.height * model.ratio)
    throw ConfigError("bdsd: PAN must be exactly ratio x LRMS");
  const int B = lrms.bands;
  const int lw = lrms.width, lh = lrms.height;
  const int hw = pan.width, hh = pan.height;
  const size_t np = size_t(lw) * lh;

  BdsdDesign d;
  d.expanded.assign(B, std::vector<double>(size_t(hw) * hh));
  for (int b = 0; b < B; ++b) {
    std::vector<double> src(lrms.plane(b), lrms.plane(b) + np);
    resize_plane(src.data(), lw, lh, d.expanded[b].data(), hw, hh);
  }

  auto degrade = [&](const double* plane, double gain) {
    const double sigma = mtf_sigma(gain, model.ratio);
    std::vector<double> blurred(size_t(hw) * hh);
    blur_plane(plane, blurred.data(), hw, hh, sigma, mtf_kernel_size(sigma));
    std::vector<double> out(np);
    for (int y = 0; y < lh; ++y)
      for (int x = 0; x < lw; ++x)
        out[size_t(y) * lw + x] =
            blurred[size_t(y) * model.ratio * hw + x * model.ratio];
    return out;
  };

  // PAN detail: the full-resolution PAN minus the expansion of its own
  // degraded version. A spatially smooth PAN yields an identically zero
  // detail layer.
  std::vector<double> pan_d(pan.plane(0), pan.plane(0) + pan.pixels());
  const std::vector<double> p_l = degrade(pan_d.data(), model.pan_gain());
  std::vector<double> pan_lp(size_t(hw) * hh);
  resize_plane(p_l.data(), lw, lh, pan_lp.data(), hw, hh);
  d.pan_detail.resize(size_t(hw) * hh);
  for (size_t p = 0; p < d.pan_detail.size(); ++p)
    d.pan_detail[p] = pan_d[p] - pan_lp[p];
  d.detail_lr = degrade(d.pan_detail.data(), model.pan_gain());

  d.ms_l.resize(B);
  d.residual.assign(B, std::vector<double>(np));
  for (int b = 0; b < B; ++b) {
    d.ms_l[b] = degrade(d.expanded[b].data(), model.mtf_gains[b]);
    const float* mb = lrms.plane(b);
    for (size_t p = 0; p < np; ++p)
      d.residual[b][p] = double(mb[p]) - d.ms_l[b][p];
  }
  return d;
}

inline BdsdCoefficients bdsd_solve(const BdsdDesign& design, int B) {
  const size_t np = design.detail_lr.size();

  // Centered normal equations over the (B+1)-column design [d, M_L].
  const int D = B + 1;
  auto col = [&](int j) -> const std::vector<double>& {
    return j == 0 ? design.detail_lr : design.ms_l[j - 1];
  };
  std::vector<double> mean(D, 0.0);
  for (int j = 0; j < D; ++j) {
    for (size_t p = 0; p < np; ++p) mean[j] += col(j)[p];
    mean[j] /= double(np);
  }
  std::vector<double> ata(size_t(D) * D, 0.0);
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) {
      double s = 0.0;
      for (size_t p = 0; p < np; ++p)
        s += (col(i)[p] - mean[i]) * (col(j)[p] - mean[j]);
      ata[size_t(i) * D + j] = s;
      ata[size_t(j) * D + i] = s;
    }

  BdsdCoefficients out;
  out.theta.assign(B, std::vector<double>(D, 0.0));
  for (int b = 0; b < B; ++b) {
    double ymean = 0.0;
    for (size_t p = 0; p < np; ++p) ymean += design.residual[b][p];
    ymean /= double(np);
    std::vector<double> rhs(D, 0.0);
    for (int j = 0; j < D; ++j) {
      double s = 0.0;
      for (size_t p = 0; p < np; ++p)
        s += (col(j)[p] - mean[j]) * (design.residual[b][p] - ymean);
      rhs[j] = s;
    }
    // Cholesky with escalating ridge; singular systems never crash.
    double lambda = out.ridge;
    for (int attempt = 0; attempt < 8; ++attempt) {
      std::vector<double> a = ata;
      for (int i = 0; i < D; ++i) a[size_t(i) * D + i] += lambda;
      std::vector<double> l(size_t(D) * D, 0.0);
      bool ok = true;
      for (int i = 0; i < D && ok; ++i) {
        for (int j = 0; j <= i; ++j) {
          double s = a[size_t(i) * D + j];
          for (int k = 0; k < j; ++k)
            s -= l[size_t(i) * D + k] * l[size_t(j) * D + k];
          if (i == j) {
            if (s <= 0.0) {
              ok = false;
              break;
            }
            l[size_t(i) * D + i] = std::sqrt(s);
          } else {
            l[size_t(i) * D + j] = s / l[size_t(j) * D + j];
          }
        }
      }
      if (!ok) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> y(D), x(D);
      for (int i = 0; i < D; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= l[size_t(i) * D + k] * y[k];
        y[i] = s / l[size_t(i) * D + i];
      }
      for (int i = D - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < D; ++k) s -= l[size_t(k) * D + i] * x[k];
        x[i] = s / l[size_t(i) * D + i];
      }
      out.theta[b] = x;
      break;
    }
  }
  return out;
}

inline BdsdCoefficients bdsd_coefficients(const Raster& lrms,
                                          const Raster& pan,
                                          const SensorModel& model) {
  return bdsd_solve(bdsd_design(lrms, pan, model), lrms.bands);
}

inline Raster bdsd_fuse(const Raster& lrms, const Raster& pan,
                        const SensorModel& model) {
  const BdsdDesign design = bdsd_design(lrms, pan, model);
  const BdsdCoefficients coeff = bdsd_solve(design, lrms.bands);
  const int B = lrms.bands;
  const int hw = pan.width, hh = pan.height;
  std::vector<float> fused(size_t(hw) * hh * B);
  for (int b = 0; b < B; ++b) {
    const double gamma = coeff.theta[b][0];
    for (size_t p = 0; p < size_t(hw) * hh; ++p)
      fused[size_t(b) * hw * hh + p] =
          float(design.expanded[b][p] + gamma * design.pan_detail[p]);
  }
  return Raster::from_values(hw, hh, B, std::move(fused));
}

// Wald-protocol triplet: degrade the ground scene to LRMS, synthesize PAN at
// full resolution, and optionally attach the classical-fusion pseudo
// reference.
inline SceneTriplet make_triplet(const Scene& scene, const SensorModel& model,
                                 bool with_pseudo) {
  SceneTriplet t;
  t.scene_id = scene.id;
  t.lrms = mtf_degrade(scene.hr_ms, model);
  t.pan = synth_pan(scene.hr_ms, model);
  if (with_pseudo) t.pseudo_hrms = bdsd_fuse(t.lrms, t.pan, model);
  return t;
}

}  // namespace pansharp
