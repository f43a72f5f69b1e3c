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

#include "pansharp/encoder.hpp"
#include "pansharp/protocol.hpp"

namespace pansharp {

// Stage I: bind image types to their text prompts (inter-modal), keep scene
// features diverse (intra-modal), and teach the fusion adapters to land in
// the reference embedding space.

template <class T>
using NodeId = typename Tape<T>::Id;

// Mean over the three matched type pairs of a row-wise contrastive loss;
// per image row the positive is its own type's text embedding and the other
// two prompts are negatives.
template <class T>
NodeId<T> loss_inter(Tape<T>& tp, const std::array<NodeId<T>, 3>& f_img,
                     NodeId<T> t_all, NodeId<T> tau) {
  if (tp.val(t_all).shape != Shape{3, tp.val(f_img[0]).shape[1]})
    throw ConfigError("loss_inter: expects three text rows");
  NodeId<T> acc{};
  for (int ti = 0; ti < 3; ++ti) {
    const int n = tp.val(f_img[ti]).shape[0];
    if (n == 0) throw ConfigError("loss_inter: empty batch");
    NodeId<T> logits = tp.div(tp.matmul_nt(f_img[ti], t_all), tau);  // [N,3]
    std::vector<int64_t> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = int64_t(i) * 3 + ti;
    NodeId<T> term =
        tp.mean(tp.sub(tp.row_logsumexp(logits), tp.take(logits, pos)));
    acc = ti == 0 ? term : tp.add(acc, term);
  }
  return tp.scale(acc, T(1.0 / 3.0));
}

// Contrastive loss over all 3N image rows (type-major: MS, PAN, HRMS).
// Positives are the two same-scene cross-type rows; candidates are the
// positive plus every row from other scenes. Loss averages over all
// (anchor, positive) pairs.
template <class T>
NodeId<T> loss_intra(Tape<T>& tp, NodeId<T> f_all, int n_scenes,
                     NodeId<T> tau) {
  const Shape& s = tp.val(f_all).shape;
  if (s.size() != 2 || s[0] != 3 * n_scenes)
    throw ConfigError("loss_intra: expects [3N,D] type-major rows");
  if (n_scenes < 2)
    throw ConfigError("loss_intra: needs at least two scenes for negatives");
  const int rows = 3 * n_scenes;
  NodeId<T> logits = tp.div(tp.matmul_nt(f_all, f_all), tau);

  auto scene_of = [n_scenes](int i) { return i % n_scenes; };
  NodeId<T> acc{};
  for (int k = 1; k <= 2; ++k) {
    Array<T> mask = Array<T>::zeros({rows, rows});
    std::vector<int64_t> pos(rows);
    for (int i = 0; i < rows; ++i) {
      const int p = (i + k * n_scenes) % rows;
      pos[i] = int64_t(i) * rows + p;
      for (int j = 0; j < rows; ++j) {
        const bool allowed = j == p || scene_of(j) != scene_of(i);
        mask.data[size_t(i) * rows + j] = allowed ? T(0) : T(-1e9);
      }
    }
    NodeId<T> masked = tp.add(logits, tp.constant(std::move(mask)));
    NodeId<T> term =
        tp.sum(tp.sub(tp.row_logsumexp(masked), tp.take(logits, pos)));
    acc = k == 1 ? term : tp.add(acc, term);
  }
  return tp.scale(acc, T(1.0 / (2.0 * rows)));
}

// l1 alignment of the fused embeddings with their references; image term
// averaged over batch rows.
template <class T>
NodeId<T> loss_fusion(Tape<T>& tp, NodeId<T> ifa_out, NodeId<T> f_hrms,
                      NodeId<T> tfa_out, NodeId<T> t_hrms) {
  const int n = tp.val(ifa_out).shape[0];
  if (tp.val(f_hrms).shape != tp.val(ifa_out).shape)
    throw ConfigError("loss_fusion: fused/reference shape mismatch");
  NodeId<T> img = tp.scale(ops::l1(tp, ifa_out, f_hrms), T(1.0 / n));
  NodeId<T> txt = ops::l1(tp, tfa_out, t_hrms);
  return tp.add(txt, img);
}

// ---------------------------------------------------------------------------

struct AlignConfig {
  EncoderConfig encoder;
  HrmsVariant variant = HrmsVariant::Wald;
  int batch = 32;
  int iterations = 1000;
  double lr = 0.003;
  uint64_t seed = 17;
};

struct Stage1LogRow {
  int iter = 0;
  double inter = 0, intra = 0, fusion = 0, total = 0;
};

struct AlignResult {
  ParamStore<float> params;
  std::vector<Stage1LogRow> log;
  bool diverged = false;
  int completed = 0;
};

namespace detail_align {

// Deterministic batch of distinct scene indices (partial Fisher-Yates).
inline std::vector<int> pick_batch(Rng& rng, int n, int batch) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int j = 0; j < batch; ++j) {
    const int swap = j + int(rng.below(uint64_t(n - j)));
    std::swap(idx[j], idx[swap]);
  }
  idx.resize(batch);
  return idx;
}

}  // namespace detail_align

// One Stage-I forward pass over a batch of triplets; returns all loss nodes.
template <class T>
struct Stage1Graph {
  NodeId<T> inter, intra, fusion, total;
  std::array<NodeId<T>, 3> f_img;  // MS, PAN, HRMS rows
  NodeId<T> t_all;
};

template <class T>
Stage1Graph<T> build_stage1_graph(Tape<T>& tp, const MountedParams<T>& mp,
                                  const AlignConfig& cfg,
                                  const std::vector<const SceneTriplet*>& batch) {
  EncoderForward<T> enc(tp, mp, cfg.encoder);
  const PromptSet prompts = PromptSet::make(cfg.variant);

  std::vector<const Raster*> ms, pan, hrms;
  for (const SceneTriplet* t : batch) {
    if (!t->pseudo_hrms.has_value())
      throw DataError("stage1: triplet " + std::to_string(t->scene_id) +
                      " lacks the pseudo-HRMS reference");
    ms.push_back(&t->lrms);
    pan.push_back(&t->pan);
    hrms.push_back(&*t->pseudo_hrms);
  }

  Stage1Graph<T> g;
  g.f_img[0] = enc.encode_image(tp.constant(stack_rasters<T>(ms)), Modality::MS);
  g.f_img[1] =
      enc.encode_image(tp.constant(stack_rasters<T>(pan)), Modality::PAN);
  g.f_img[2] =
      enc.encode_image(tp.constant(stack_rasters<T>(hrms)), Modality::HRMS);

  NodeId<T> t_ms = enc.encode_text(prompts.ms, Modality::MS);
  NodeId<T> t_pan = enc.encode_text(prompts.pan, Modality::PAN);
  NodeId<T> t_hrms = enc.encode_text(prompts.hrms, Modality::HRMS);
  g.t_all = tp.concat({t_ms, t_pan, t_hrms}, 0);

  NodeId<T> tau_c = tp.exp(mp.at("logtau_c"));
  NodeId<T> tau_i = tp.exp(mp.at("logtau_i"));

  g.inter = loss_inter(tp, g.f_img, g.t_all, tau_c);
  g.intra = loss_intra(tp, tp.concat({g.f_img[0], g.f_img[1], g.f_img[2]}, 0),
                       int(batch.size()), tau_i);
  g.fusion = loss_fusion(tp, enc.ifa(g.f_img[0], g.f_img[1]), g.f_img[2],
                         enc.tfa(t_ms, t_pan), t_hrms);
  g.total = tp.add(tp.add(g.inter, g.intra), g.fusion);
  return g;
}

inline AlignResult train_stage1(const std::vector<SceneTriplet>& data,
                                const AlignConfig& cfg) {
  if (int(data.size()) < cfg.batch)
    throw ConfigError("stage1: dataset smaller than batch size");
  if (cfg.batch < 2)
    throw ConfigError("stage1: batch must be >= 2 for intra-modal negatives");

  AlignResult res;
  res.params = init_encoder_params(cfg.encoder, cfg.seed);
  AdamState<float> adam;
  Rng rng = Rng(cfg.seed).fork(0x51);

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto idx = detail_align::pick_batch(rng, int(data.size()), cfg.batch);
    std::vector<const SceneTriplet*> batch;
    for (int i : idx) batch.push_back(&data[i]);

    Tape<float> tp;
    MountedParams<float> mp = mount(tp, res.params, true);
    Stage1Graph<float> g = build_stage1_graph(tp, mp, cfg, batch);

    Stage1LogRow row;
    row.iter = it;
    row.inter = tp.scalar_val(g.inter);
    row.intra = tp.scalar_val(g.intra);
    row.fusion = tp.scalar_val(g.fusion);
    row.total = tp.scalar_val(g.total);
    if (!std::isfinite(row.total)) {
      res.diverged = true;
      res.completed = it;
      return res;
    }
    res.log.push_back(row);

    tp.backward(g.total);
    std::map<std::string, Array<float>> grads;
    for (const auto& [name, id] : mp.ids) grads.emplace(name, tp.grad(id));
    adam_step(res.params, grads, cfg.lr, 0.9, 0.999, 1e-8, adam);
  }
  res.completed = cfg.iterations;
  return res;
}

// ---------------------------------------------------------------------------
// Frozen-encoder evaluation helpers (used by training stage II and tests).

inline std::vector<std::vector<float>> embed_images(
    const ParamStore<float>& params, const EncoderConfig& cfg,
    const std::vector<const Raster*>& rasters, Modality m) {
  Tape<float> tp;
  MountedParams<float> mp = mount(tp, params, false);
  EncoderForward<float> enc(tp, mp, cfg);
  auto rows = enc.encode_image(tp.constant(stack_rasters<float>(rasters)), m);
  const Array<float>& v = tp.val(rows);
  const int n = v.shape[0], d = v.shape[1];
  std::vector<std::vector<float>> out(n, std::vector<float>(d));
  for (int i = 0; i < n; ++i)
    std::copy_n(v.data.data() + int64_t(i) * d, d, out[i].data());
  return out;
}

inline std::array<std::vector<float>, 3> text_embeddings(
    const ParamStore<float>& params, const EncoderConfig& cfg,
    HrmsVariant variant) {
  Tape<float> tp;
  MountedParams<float> mp = mount(tp, params, false);
  EncoderForward<float> enc(tp, mp, cfg);
  const PromptSet prompts = PromptSet::make(variant);
  std::array<std::vector<float>, 3> out;
  const std::array<std::pair<std::string, Modality>, 3> spec_list = {
      std::make_pair(prompts.ms, Modality::MS),
      std::make_pair(prompts.pan, Modality::PAN),
      std::make_pair(prompts.hrms, Modality::HRMS)};
  for (int i = 0; i < 3; ++i) {
    auto id = enc.encode_text(spec_list[i].first, spec_list[i].second);
    const Array<float>& v = tp.val(id);
    out[i].assign(v.data.begin(), v.data.end());
  }
  return out;
}

inline double dot_f(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
  return s;
}

// Nearest-prompt classification accuracy over {MS, PAN, HRMS} patches.
inline double binding_accuracy(const ParamStore<float>& params,
                               const EncoderConfig& cfg, HrmsVariant variant,
                               const std::vector<SceneTriplet>& held_out) {
  const auto txt = text_embeddings(params, cfg, variant);
  std::vector<const Raster*> ms, pan, hrms;
  for (const auto& t : held_out) {
    ms.push_back(&t.lrms);
    pan.push_back(&t.pan);
    hrms.push_back(&*t.pseudo_hrms);
  }
  int correct = 0, total = 0;
  const std::array<std::vector<std::vector<float>>, 3> img = {
      embed_images(params, cfg, ms, Modality::MS),
      embed_images(params, cfg, pan, Modality::PAN),
      embed_images(params, cfg, hrms, Modality::HRMS)};
  for (int type = 0; type < 3; ++type)
    for (const auto& row : img[type]) {
      int best = 0;
      double best_s = -2;
      for (int c = 0; c < 3; ++c) {
        const double s = dot_f(row, txt[c]);
        if (s > best_s) {
          best_s = s;
          best = c;
        }
      }
      correct += best == type ? 1 : 0;
      ++total;
    }
  return double(correct) / double(total);
}

// Pooled mean pairwise cosine among same-type embeddings of distinct scenes.
inline double same_type_mean_cosine(const ParamStore<float>& params,
                                    const EncoderConfig& cfg,
                                    const std::vector<SceneTriplet>& held_out) {
  std::vector<const Raster*> ms, pan, hrms;
  for (const auto& t : held_out) {
    ms.push_back(&t.lrms);
    pan.push_back(&t.pan);
    hrms.push_back(&*t.pseudo_hrms);
  }
  const std::array<std::vector<std::vector<float>>, 3> img = {
      embed_images(params, cfg, ms, Modality::MS),
      embed_images(params, cfg, pan, Modality::PAN),
      embed_images(params, cfg, hrms, Modality::HRMS)};
  double acc = 0;
  int64_t pairs = 0;
  for (const auto& rows : img)
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = i + 1; j < rows.size(); ++j) {
        acc += dot_f(rows[i], rows[j]);
        ++pairs;
      }
  return acc / double(pairs);
}

}  // namespace pansharp
