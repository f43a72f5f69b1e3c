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
#include "pansharp/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace pansharp {

namespace {

constexpr double kQEps = 1e-8;  // flat-block stabilizer
constexpr double kPsnrCap = 99.0;

void check_same(const Raster& a, const Raster& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.bands != b.bands)
    throw ConfigError(std::string(what) + ": shape mismatch");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Cayley-Dickson product on length 2^n vectors: (a,b)(c,d) = (ac - d*b, da + bc*).
void cd_mult(const double* a, const double* b, double* out, int n) {
  if (n == 1) {
    out[0] = a[0] * b[0];
    return;
  }
  const int h = n / 2;
  std::vector<double> t1(h), t2(h), conj_buf(h);
  auto conj = [&](const double* v, double* dst) {
    dst[0] = v[0];
    for (int i = 1; i < h; ++i) dst[i] = -v[i];
  };
  // out_lo = a_lo * b_lo - conj(b_hi) * a_hi
  cd_mult(a, b, t1.data(), h);
  conj(b + h, conj_buf.data());
  cd_mult(conj_buf.data(), a + h, t2.data(), h);
  for (int i = 0; i < h; ++i) out[i] = t1[i] - t2[i];
  // out_hi = b_hi * a_lo + a_hi * conj(b_lo)
  cd_mult(b + h, a, t1.data(), h);
  conj(b, conj_buf.data());
  cd_mult(a + h, conj_buf.data(), t2.data(), h);
  for (int i = 0; i < h; ++i) out[h + i] = t1[i] + t2[i];
}

void cd_conj(double* v, int n) {
  for (int i = 1; i < n; ++i) v[i] = -v[i];
}

}  // namespace

std::string MetricReport::csv_row() const {
  std::string out;
  const std::optional<double>* cols[] = {&mpsnr, &ergas, &sam,   &q2n,
                                         &d_lambda, &d_s, &qnr};
  for (size_t i = 0; i < 7; ++i) {
    if (i) out += ',';
    if (cols[i]->has_value()) out += fmt(**cols[i]);
  }
  return out;
}

double mpsnr(const Raster& fused, const Raster& ref) {
  check_same(fused, ref, "mpsnr");
  double acc = 0.0;
  for (int b = 0; b < ref.bands; ++b) {
    const float* f = fused.plane(b);
    const float* r = ref.plane(b);
    double mse = 0.0;
    for (size_t i = 0; i < ref.pixels(); ++i) {
      const double d = double(f[i]) - double(r[i]);
      mse += d * d;
    }
    mse /= double(ref.pixels());
    const double psnr =
        mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
    acc += psnr;
  }
  return acc / double(ref.bands);
}

double ergas(const Raster& fused, const Raster& ref, int ratio) {
  check_same(fused, ref, "ergas");
  double acc = 0.0;
  for (int b = 0; b < ref.bands; ++b) {
    const float* f = fused.plane(b);
    const float* r = ref.plane(b);
    double mse = 0.0, mean = 0.0;
    for (size_t i = 0; i < ref.pixels(); ++i) {
      const double d = double(f[i]) - double(r[i]);
      mse += d * d;
      mean += double(r[i]);
    }
    mse /= double(ref.pixels());
    mean /= double(ref.pixels());
    if (mean == 0.0)
      throw DataError("ergas: degenerate reference band " + std::to_string(b));
    acc += mse / (mean * mean);
  }
  return (100.0 / double(ratio)) * std::sqrt(acc / double(ref.bands));
}

double sam_degrees(const Raster& fused, const Raster& ref) {
  check_same(fused, ref, "sam");
  const int B = ref.bands;
  double acc = 0.0;
  size_t used = 0, skipped = 0;
  for (size_t p = 0; p < ref.pixels(); ++p) {
    double ff = 0.0, rr = 0.0, fr = 0.0;
    for (int b = 0; b < B; ++b) {
      const double fv = fused.data[size_t(b) * ref.pixels() + p];
      const double rv = ref.data[size_t(b) * ref.pixels() + p];
      ff += fv * fv;
      rr += rv * rv;
      fr += fv * rv;
    }
    if (ff <= 0.0 || rr <= 0.0) {
      ++skipped;
      continue;
    }
    const double c = std::min(1.0, std::max(-1.0, fr / std::sqrt(ff * rr)));
    acc += std::acos(c);
    ++used;
  }
  if (used == 0) throw DataError("sam: all pixels spectrally degenerate");
  return acc / double(used) * (180.0 / M_PI);
}

double uiqi(const float* a, const float* b, int w, int h, int block) {
  const int bs = std::min(block, std::min(w, h));
  const int by = h / bs, bx = w / bs;
  const double n = double(bs) * bs;
  double acc = 0.0;
  for (int cy = 0; cy < by; ++cy)
    for (int cx = 0; cx < bx; ++cx) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x) {
          const double av = a[size_t(cy * bs + y) * w + cx * bs + x];
          const double bv = b[size_t(cy * bs + y) * w + cx * bs + x];
          sa += av;
          sb += bv;
          saa += av * av;
          sbb += bv * bv;
          sab += av * bv;
        }
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma;
      const double vb = sbb / n - mb * mb;
      const double cab = sab / n - ma * mb;
      acc += 4.0 * cab * ma * mb /
             ((va + vb + kQEps) * (ma * ma + mb * mb + kQEps));
    }
  return acc / double(by * bx);
}

double q2n(const Raster& fused, const Raster& ref, int block) {
  check_same(fused, ref, "q2n");
  const int B = ref.bands;
  if (B < 1 || (B & (B - 1)) != 0)
    throw ConfigError("q2n: band count must be a power of two");
  const int w = ref.width, h = ref.height;
  const int bs = std::min(block, std::min(w, h));
  const int by = h / bs, bx = w / bs;
  const double n = double(bs) * bs;
  const size_t px = ref.pixels();

  std::vector<double> u(B), v(B), prod(B), sum_uv(B);
  double acc = 0.0;
  for (int cy = 0; cy < by; ++cy)
    for (int cx = 0; cx < bx; ++cx) {
      std::vector<double> mu1(B, 0.0), mu2(B, 0.0);
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x) {
          const size_t p = size_t(cy * bs + y) * w + cx * bs + x;
          for (int b = 0; b < B; ++b) {
            mu1[b] += ref.data[size_t(b) * px + p];
            mu2[b] += fused.data[size_t(b) * px + p];
          }
        }
      for (int b = 0; b < B; ++b) {
        mu1[b] /= n;
        mu2[b] /= n;
      }
      double var1 = 0.0, var2 = 0.0;
      std::fill(sum_uv.begin(), sum_uv.end(), 0.0);
      for (int y = 0; y < bs; ++y)
        for (int x = 0; x < bs; ++x) {
          const size_t p = size_t(cy * bs + y) * w + cx * bs + x;
          for (int b = 0; b < B; ++b) {
            u[b] = double(ref.data[size_t(b) * px + p]) - mu1[b];
            v[b] = double(fused.data[size_t(b) * px + p]) - mu2[b];
            var1 += u[b] * u[b];
            var2 += v[b] * v[b];
          }
          cd_conj(v.data(), B);
          cd_mult(u.data(), v.data(), prod.data(), B);
          for (int b = 0; b < B; ++b) sum_uv[b] += prod[b];
        }
      var1 /= n;
      var2 /= n;
      double cov_mod = 0.0, m1 = 0.0, m2 = 0.0;
      for (int b = 0; b < B; ++b) {
        cov_mod += (sum_uv[b] / n) * (sum_uv[b] / n);
        m1 += mu1[b] * mu1[b];
        m2 += mu2[b] * mu2[b];
      }
      cov_mod = std::sqrt(cov_mod);
      acc += 4.0 * cov_mod * std::sqrt(m1) * std::sqrt(m2) /
             ((var1 + var2 + kQEps) * (m1 + m2 + kQEps));
    }
  return acc / double(by * bx);
}

QnrResult qnr(const Raster& fused, const Raster& lrms, const Raster& pan,
              const SensorModel& model, int block) {
  const int B = fused.bands;
  if (B < 2) throw ConfigError("qnr: spectral distortion needs >= 2 bands");
  if (lrms.bands != B) throw ConfigError("qnr: band count mismatch");
  if (pan.bands != 1) throw ConfigError("qnr: PAN must be single band");
  if (fused.width != pan.width || fused.height != pan.height)
    throw ConfigError("qnr: fused/PAN size mismatch");
  const Raster pan_lr = degrade_pan(pan, model);
  if (pan_lr.width != lrms.width || pan_lr.height != lrms.height)
    throw ConfigError("qnr: LRMS is not PAN/ratio sized");

  double dl = 0.0;
  for (int l = 0; l < B; ++l)
    for (int r = 0; r < B; ++r) {
      if (l == r) continue;
      const double qf =
          uiqi(fused.plane(l), fused.plane(r), fused.width, fused.height,
               block);
      const double qm =
          uiqi(lrms.plane(l), lrms.plane(r), lrms.width, lrms.height, block);
      dl += std::abs(qf - qm);
    }
  dl /= double(B) * (B - 1);

  double ds = 0.0;
  for (int l = 0; l < B; ++l) {
    const double qf = uiqi(fused.plane(l), pan.plane(0), fused.width,
                           fused.height, block);
    const double qm = uiqi(lrms.plane(l), pan_lr.plane(0), lrms.width,
                           lrms.height, block);
    ds += std::abs(qf - qm);
  }
  ds /= double(B);

  QnrResult out;
  out.d_lambda = dl;
  out.d_s = ds;
  out.qnr = (1.0 - dl) * (1.0 - ds);
  return out;
}

MetricReport evaluate(const Raster& fused, const Raster* hr_ref,
                      const Raster& lrms, const Raster& pan,
                      const SensorModel& model) {
  MetricReport rep;
  if (hr_ref != nullptr) {
    rep.mpsnr = mpsnr(fused, *hr_ref);
    rep.ergas = ergas(fused, *hr_ref, model.ratio);
    rep.sam = sam_degrees(fused, *hr_ref);
    rep.q2n = q2n(fused, *hr_ref);
  }
  const QnrResult q = qnr(fused, lrms, pan, model);
  rep.d_lambda = q.d_lambda;
  rep.d_s = q.d_s;
  rep.qnr = q.qnr;
  return rep;
}

}  // namespace pansharp
