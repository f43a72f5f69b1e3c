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

#include <map>
#include <string>
#include <vector>

#include "pansharp/ops.hpp"
#include "pansharp/params.hpp"
#include "pansharp/raster.hpp"

namespace pansharp {

// ---------------------------------------------------------------------------
// Prompts and vocabulary

enum class HrmsVariant { Wald, Khan, Noise, DescI, DescII };
enum class ProjectionMode { Conv, PCA, RGB, GBNIR };
enum class Modality { MS = 0, PAN = 1, HRMS = 2 };

inline const char* kMsPrompt = "a multispectral image";
inline const char* kPanPrompt = "a panchromatic image";

inline std::string hrms_prompt(HrmsVariant v) {
  switch (v) {
    case HrmsVariant::Wald:
      return "High-quality reference image adhering to Wald's protocol: "
             "spectrally consistent with original data and spatially sharp";
    case HrmsVariant::Khan:
      return "High-quality reference image adhering to Khan's protocol: "
             "fused detail matching the multispectral data after sensor "
             "filtering";
    case HrmsVariant::Noise:
      return "an image independent of the inputs";
    case HrmsVariant::DescI:
      return "This image is the fusion image of the input image";
    case HrmsVariant::DescII:
      return "a fused product of the MS and PAN images";
  }
  throw ConfigError("unknown prompt variant");
}

struct PromptSet {
  std::string ms = kMsPrompt;
  std::string pan = kPanPrompt;
  std::string hrms;
  HrmsVariant variant = HrmsVariant::Wald;

  static PromptSet make(HrmsVariant v) {
    PromptSet p;
    p.variant = v;
    p.hrms = hrms_prompt(v);
    return p;
  }
};

// Lowercase, non-alphanumeric characters break tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const char lc = (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c;
    if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) {
      cur += lc;
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Fixed vocabulary over the union of every prompt variant.
struct Vocab {
  std::map<std::string, int> ids;
  int max_len = 0;

  static const Vocab& instance() {
    static const Vocab v = build();
    return v;
  }

  static Vocab build() {
    Vocab v;
    std::vector<std::string> corpus = {kMsPrompt, kPanPrompt};
    for (HrmsVariant hv : {HrmsVariant::Wald, HrmsVariant::Khan,
                           HrmsVariant::Noise, HrmsVariant::DescI,
                           HrmsVariant::DescII})
      corpus.push_back(hrms_prompt(hv));
    for (const auto& text : corpus) {
      const auto toks = tokenize(text);
      v.max_len = std::max(v.max_len, int(toks.size()));
      for (const auto& t : toks) v.ids.emplace(t, 0);
    }
    int next = 0;
    for (auto& [word, id] : v.ids) id = next++;
    return v;
  }

  int size() const { return int(ids.size()); }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& t : tokenize(text)) {
      auto it = ids.find(t);
      if (it == ids.end())
        throw ConfigError("vocabulary: unknown token '" + t + "'");
      out.push_back(it->second);
    }
    if (out.empty()) throw ConfigError("vocabulary: empty prompt");
    return out;
  }
};

// ---------------------------------------------------------------------------
// Encoder parameters

struct EncoderConfig {
  int bands = 4;
  int dim = 64;             // shared embedding dimension D
  int stem_channels[3] = {16, 32, 64};
  int adapter_hidden = 16;  // D/4 bottleneck
  double adapter_alpha0 = 0.2;
  double tau0 = 0.07;
  ProjectionMode projection = ProjectionMode::Conv;
};

inline const char* modality_tag(Modality m) {
  switch (m) {
    case Modality::MS: return "ms";
    case Modality::PAN: return "pan";
    case Modality::HRMS: return "hrms";
  }
  throw ConfigError("unknown modality");
}

namespace detail_enc {
template <class T>
Array<T> he_uniform(Rng& rng, Shape shape, int fan_in) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  Array<T> a = Array<T>::zeros(shape);
  for (auto& v : a.data) v = T(rng.uniform(-limit, limit));
  return a;
}
}  // namespace detail_enc

// From-scratch initialization; deterministic in the seed. Map order is the
// draw order, so the layout below is part of the checkpoint contract.
inline ParamStore<float> init_encoder_params(const EncoderConfig& cfg,
                                             uint64_t seed) {
  using detail_enc::he_uniform;
  ParamStore<float> ps;
  Rng rng(seed ^ 0xe17c0de5ull);
  const int D = cfg.dim;
  const Vocab& vocab = Vocab::instance();

  // six bottleneck adapters, three per side
  for (const char* side : {"vis", "txt"})
    for (const char* tag : {"ms", "pan", "hrms"}) {
      const std::string p = std::string("ada.") + side + "." + tag;
      ps.tensors.emplace(p + ".w1",
                         he_uniform<float>(rng, {D, cfg.adapter_hidden}, D));
      ps.tensors.emplace(p + ".b1", Array<float>::zeros({cfg.adapter_hidden}));
      ps.tensors.emplace(
          p + ".w2",
          he_uniform<float>(rng, {cfg.adapter_hidden, D}, cfg.adapter_hidden));
      ps.tensors.emplace(p + ".b2", Array<float>::zeros({D}));
      ps.tensors.emplace(p + ".alpha",
                         Array<float>::full({1}, float(cfg.adapter_alpha0)));
    }

  for (const char* name : {"ifa", "tfa"}) {
    const std::string p = name;
    ps.tensors.emplace(p + ".w1", he_uniform<float>(rng, {2 * D, D}, 2 * D));
    ps.tensors.emplace(p + ".b1", Array<float>::zeros({D}));
    ps.tensors.emplace(p + ".w2", he_uniform<float>(rng, {D, D}, D));
    ps.tensors.emplace(p + ".b2", Array<float>::zeros({D}));
  }

  ps.tensors.emplace("logtau_c",
                     Array<float>::full({1}, float(std::log(cfg.tau0))));
  ps.tensors.emplace("logtau_i",
                     Array<float>::full({1}, float(std::log(cfg.tau0))));

  // text side: embedding table, positional scalars, head
  {
    Array<float> emb = Array<float>::zeros({vocab.size(), D});
    for (auto& v : emb.data) v = float(rng.uniform(-0.05, 0.05));
    ps.tensors.emplace("txt.embed", std::move(emb));
    ps.tensors.emplace("txt.pos", Array<float>::full({vocab.max_len}, 1.0f));
    ps.tensors.emplace("txt.head.w", he_uniform<float>(rng, {D, D}, D));
    ps.tensors.emplace("txt.head.b", Array<float>::zeros({D}));
  }

  // vision side: learnable band projection (zero-init: band-average at start),
  // three stride-2 conv blocks, linear head
  {
    ps.tensors.emplace("vis.proj.w",
                       Array<float>::zeros({3, cfg.bands, 1, 1}));
    int cin = 3;
    for (int i = 0; i < 3; ++i) {
      const int cout = cfg.stem_channels[i];
      ps.tensors.emplace(
          "vis.stem" + std::to_string(i) + ".w",
          he_uniform<float>(rng, {cout, cin, 3, 3}, cin * 9));
      ps.tensors.emplace("vis.stem" + std::to_string(i) + ".b",
                         Array<float>::zeros({cout}));
      cin = cout;
    }
    ps.tensors.emplace("vis.head.w", he_uniform<float>(rng, {cin, D}, cin));
    ps.tensors.emplace("vis.head.b", Array<float>::zeros({D}));
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Forward graph builders

// Per-image principal band components (top 3), computed on detached values;
// gradient flows through the projection as if the matrix were constant.
inline std::vector<double> pca_projection(const float* data, int bands,
                                          int64_t pixels) {
  std::vector<double> mean(bands, 0.0);
  for (int b = 0; b < bands; ++b) {
    const float* p = data + int64_t(b) * pixels;
    for (int64_t i = 0; i < pixels; ++i) mean[b] += p[i];
    mean[b] /= double(pixels);
  }
  std::vector<double> cov(size_t(bands) * bands, 0.0);
  for (int a = 0; a < bands; ++a)
    for (int b = a; b < bands; ++b) {
      const float* pa = data + int64_t(a) * pixels;
      const float* pb = data + int64_t(b) * pixels;
      double s = 0.0;
      for (int64_t i = 0; i < pixels; ++i)
        s += (double(pa[i]) - mean[a]) * (double(pb[i]) - mean[b]);
      cov[size_t(a) * bands + b] = cov[size_t(b) * bands + a] =
          s / double(pixels);
    }
  // Jacobi eigensolver; bands <= 8 so cost is negligible.
  std::vector<double> v(size_t(bands) * bands, 0.0);
  for (int i = 0; i < bands; ++i) v[size_t(i) * bands + i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < bands; ++p)
      for (int q = p + 1; q < bands; ++q) off += std::abs(cov[size_t(p) * bands + q]);
    if (off < 1e-14) break;
    for (int p = 0; p < bands; ++p)
      for (int q = p + 1; q < bands; ++q) {
        const double apq = cov[size_t(p) * bands + q];
        if (std::abs(apq) < 1e-18) continue;
        const double app = cov[size_t(p) * bands + p];
        const double aqq = cov[size_t(q) * bands + q];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < bands; ++k) {
          const double akp = cov[size_t(k) * bands + p];
          const double akq = cov[size_t(k) * bands + q];
          cov[size_t(k) * bands + p] = c * akp - s * akq;
          cov[size_t(k) * bands + q] = s * akp + c * akq;
        }
        for (int k = 0; k < bands; ++k) {
          const double apk = cov[size_t(p) * bands + k];
          const double aqk = cov[size_t(q) * bands + k];
          cov[size_t(p) * bands + k] = c * apk - s * aqk;
          cov[size_t(q) * bands + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < bands; ++k) {
          const double vkp = v[size_t(k) * bands + p];
          const double vkq = v[size_t(k) * bands + q];
          v[size_t(k) * bands + p] = c * vkp - s * vkq;
          v[size_t(k) * bands + q] = s * vkp + c * vkq;
        }
      }
  }
  // order by descending eigenvalue; fix sign so the largest component is
  // positive (determinism)
  std::vector<int> order(bands);
  for (int i = 0; i < bands; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return cov[size_t(a) * bands + a] > cov[size_t(b) * bands + b];
  });
  std::vector<double> proj(size_t(3) * bands);
  for (int c = 0; c < 3; ++c) {
    const int e = order[c % bands];
    int arg = 0;
    for (int k = 1; k < bands; ++k)
      if (std::abs(v[size_t(k) * bands + e]) >
          std::abs(v[size_t(arg) * bands + e]))
        arg = k;
    const double sign = v[size_t(arg) * bands + e] < 0.0 ? -1.0 : 1.0;
    for (int k = 0; k < bands; ++k)
      proj[size_t(c) * bands + k] = sign * v[size_t(k) * bands + e];
  }
  return proj;
}

template <class T>
class EncoderForward {
 public:
  using Id = typename Tape<T>::Id;

  EncoderForward(Tape<T>& tp, const MountedParams<T>& params,
                 const EncoderConfig& cfg)
      : tp_(tp), p_(params), cfg_(cfg) {}

  // [N,B,H,W] (B = bands or 1 for PAN) -> [N,3,H,W]
  Id project_input(Id x) {
    const Shape& s = tp_.val(x).shape;
    const int in_bands = s[1];
    if (in_bands == 1) {
      // PAN replicates to three channels in every mode
      Id ones = tp_.constant(Array<T>::full({3, 1, 1, 1}, T(1)));
      return tp_.conv2d(x, ones, 1, 0);
    }
    switch (cfg_.projection) {
      case ProjectionMode::Conv: {
        if (in_bands != cfg_.bands)
          throw ConfigError("project_input: band count mismatch");
        Id learned = tp_.conv2d(x, p_.at("vis.proj.w"), 1, 0);
        Id avg_k = tp_.constant(
            Array<T>::full({3, in_bands, 1, 1}, T(1.0 / in_bands)));
        return tp_.add(learned, tp_.conv2d(x, avg_k, 1, 0));
      }
      case ProjectionMode::RGB:
        return select_bands(x, {2, 1, 0});
      case ProjectionMode::GBNIR:
        return select_bands(x, {1, 0, 3});
      case ProjectionMode::PCA: {
        const int N = s[0], H = s[2], W = s[3];
        std::vector<Id> per_image;
        const Array<T>& xv = tp_.val(x);
        std::vector<float> plane(size_t(in_bands) * H * W);
        for (int i = 0; i < N; ++i) {
          const T* src = xv.data.data() + size_t(i) * in_bands * H * W;
          for (size_t j = 0; j < plane.size(); ++j) plane[j] = float(src[j]);
          const auto proj =
              pca_projection(plane.data(), in_bands, int64_t(H) * W);
          Array<T> k = Array<T>::zeros({3, in_bands, 1, 1});
          for (size_t j = 0; j < proj.size(); ++j) k.data[j] = T(proj[j]);
          per_image.push_back(tp_.conv2d(tp_.narrow(x, 0, i, 1),
                                         tp_.constant(std::move(k)), 1, 0));
        }
        return tp_.concat(per_image, 0);
      }
    }
    throw ConfigError("project_input: unknown mode");
  }

  // [N,B,H,W] -> unit rows [N,D]
  Id encode_image(Id x, Modality m) {
    Id h = project_input(x);
    for (int i = 0; i < 3; ++i) {
      const std::string stem = "vis.stem" + std::to_string(i);
      h = tp_.relu(tp_.bias_channel(tp_.conv2d(h, p_.at(stem + ".w"), 2, 1),
                                    p_.at(stem + ".b")));
    }
    Id f = tp_.mean_hw(h);
    Id e = tp_.bias_row(tp_.matmul(f, p_.at("vis.head.w")),
                        p_.at("vis.head.b"));
    e = adapter(e, std::string("ada.vis.") + modality_tag(m));
    return ops::l2_normalize_rows(tp_, e);
  }

  // token ids -> unit row [1,D]
  Id encode_text(const std::vector<int>& tokens, Modality m) {
    const int L = int(tokens.size());
    if (L > Vocab::instance().max_len)
      throw ConfigError("encode_text: prompt longer than positional table");
    Id embed = p_.at("txt.embed");
    Id pos = p_.at("txt.pos");
    Id acc = 0;
    for (int i = 0; i < L; ++i) {
      Id row = tp_.narrow(embed, 0, tokens[i], 1);      // [1,D]
      Id scaled = tp_.mul(row, tp_.narrow(pos, 0, i, 1));
      acc = i == 0 ? scaled : tp_.add(acc, scaled);
    }
    Id mean_emb = tp_.scale(acc, T(1.0 / L));
    Id e = tp_.bias_row(tp_.matmul(mean_emb, p_.at("txt.head.w")),
                        p_.at("txt.head.b"));
    e = adapter(e, std::string("ada.txt.") + modality_tag(m));
    return ops::l2_normalize_rows(tp_, e);
  }

  Id encode_text(const std::string& prompt, Modality m) {
    return encode_text(Vocab::instance().encode(prompt), m);
  }

  // Fusion adapters: concatenate -> bottleneck -> unit rows.
  Id ifa(Id f_ms, Id f_pan) { return fuse_pair(f_ms, f_pan, "ifa"); }
  Id tfa(Id t_ms, Id t_pan) { return fuse_pair(t_ms, t_pan, "tfa"); }

  // Bottleneck adapter with residual blend out = alpha*f(x) + (1-alpha)*x.
  Id adapter(Id x, const std::string& prefix) {
    Id h = tp_.relu(tp_.bias_row(tp_.matmul(x, p_.at(prefix + ".w1")),
                                 p_.at(prefix + ".b1")));
    Id y = tp_.bias_row(tp_.matmul(h, p_.at(prefix + ".w2")),
                        p_.at(prefix + ".b2"));
    Id alpha = p_.at(prefix + ".alpha");
    Id keep = tp_.sub(tp_.scalar(T(1)), alpha);
    return tp_.add(tp_.mul(y, alpha), tp_.mul(x, keep));
  }

 private:
  Id select_bands(Id x, std::vector<int> bands) {
    const int in_bands = tp_.val(x).shape[1];
    if (in_bands < 4)
      throw ConfigError("project_input: fixed band selection needs >= 4 bands");
    Array<T> k = Array<T>::zeros({3, in_bands, 1, 1});
    for (int c = 0; c < 3; ++c) k.data[size_t(c) * in_bands + bands[c]] = T(1);
    return tp_.conv2d(x, tp_.constant(std::move(k)), 1, 0);
  }

  Id fuse_pair(Id a, Id b, const std::string& prefix) {
    Id cat = tp_.concat({a, b}, 1);
    Id h = tp_.relu(tp_.bias_row(tp_.matmul(cat, p_.at(prefix + ".w1")),
                                 p_.at(prefix + ".b1")));
    Id y = tp_.bias_row(tp_.matmul(h, p_.at(prefix + ".w2")),
                        p_.at(prefix + ".b2"));
    return ops::l2_normalize_rows(tp_, y);
  }

  Tape<T>& tp_;
  const MountedParams<T>& p_;
  EncoderConfig cfg_;
};

// Stack rasters of identical geometry into one [N,B,H,W] array.
template <class T>
Array<T> stack_rasters(const std::vector<const Raster*>& rs) {
  if (rs.empty()) throw ConfigError("stack_rasters: empty batch");
  const Raster& first = *rs[0];
  Array<T> out =
      Array<T>::zeros({int(rs.size()), first.bands, first.height, first.width});
  const size_t per = first.data.size();
  for (size_t i = 0; i < rs.size(); ++i) {
    if (rs[i]->width != first.width || rs[i]->height != first.height ||
        rs[i]->bands != first.bands)
      throw ConfigError("stack_rasters: inconsistent geometry");
    for (size_t j = 0; j < per; ++j) out.data[i * per + j] = T(rs[i]->data[j]);
  }
  return out;
}

}  // namespace pansharp
