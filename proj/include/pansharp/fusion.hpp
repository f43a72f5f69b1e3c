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

#include "pansharp/alignment.hpp"
#include "pansharp/metrics.hpp"

namespace pansharp {

// Stage II: unsupervised training of the fusion backbone at full resolution,
// supervised only by reconstruction consistency, a differentiable QNR, a
// frozen pseudo-reference generator, and the directional semantic loss from
// the frozen adapted encoder.

// ---------------------------------------------------------------------------
// Backbone: three conv layers (9x9, 5x5, 5x5; widths 32, 16) over the
// concatenation of the expanded LRMS and PAN, plus a global residual from the
// expanded LRMS. phi is the learnable spectral degradation (B -> 1, 1x1).

inline ParamStore<float> init_backbone_params(int bands, uint64_t seed) {
  using detail_enc::he_uniform;
  ParamStore<float> ps;
  Rng rng(seed ^ 0xbbf00dull);
  const int cin = bands + 1;
  ps.tensors.emplace("bb.conv1.w",
                     he_uniform<float>(rng, {32, cin, 9, 9}, cin * 81));
  ps.tensors.emplace("bb.conv1.b", Array<float>::zeros({32}));
  ps.tensors.emplace("bb.conv2.w",
                     he_uniform<float>(rng, {16, 32, 5, 5}, 32 * 25));
  ps.tensors.emplace("bb.conv2.b", Array<float>::zeros({16}));
  // zero-init final layer: the network starts as the bicubic expansion
  ps.tensors.emplace("bb.conv3.w", Array<float>::zeros({bands, 16, 5, 5}));
  ps.tensors.emplace("bb.conv3.b", Array<float>::zeros({bands}));
  ps.tensors.emplace("bb.phi.w",
                     Array<float>::full({1, bands, 1, 1}, float(1.0 / bands)));
  return ps;
}

template <class T>
NodeId<T> backbone_forward(Tape<T>& tp, const MountedParams<T>& mp,
                           NodeId<T> lrms, NodeId<T> pan) {
  const Shape& sl = tp.val(lrms).shape;
  const Shape& sp = tp.val(pan).shape;
  if (sl.size() != 4 || sp.size() != 4 || sp[1] != 1)
    throw ConfigError("backbone: expects [N,B,h,w] LRMS and [N,1,H,W] PAN");
  if (sp[0] != sl[0] || sp[2] % sl[2] != 0 || sp[3] % sl[3] != 0 ||
      sp[2] / sl[2] != sp[3] / sl[3])
    throw ConfigError("backbone: PAN must be an integer multiple of LRMS");
  NodeId<T> up = tp.resize_bicubic(lrms, sp[2], sp[3]);
  NodeId<T> x = tp.concat({up, pan}, 1);
  NodeId<T> h = tp.relu(tp.bias_channel(tp.conv2d(x, mp.at("bb.conv1.w"), 1, 4),
                                        mp.at("bb.conv1.b")));
  h = tp.relu(tp.bias_channel(tp.conv2d(h, mp.at("bb.conv2.w"), 1, 2),
                              mp.at("bb.conv2.b")));
  NodeId<T> d = tp.bias_channel(tp.conv2d(h, mp.at("bb.conv3.w"), 1, 2),
                                mp.at("bb.conv3.b"));
  return tp.add(d, up);
}

// Inference: raw output clamped to [0,1].
inline Raster fuse_raster(const ParamStore<float>& backbone,
                          const Raster& lrms, const Raster& pan) {
  Tape<float> tp;
  MountedParams<float> mp = mount(tp, backbone, false);
  auto out = backbone_forward(
      tp, mp, tp.constant(lrms.to_array<float>()),
      tp.constant(pan.to_array<float>()));
  const Array<float>& v = tp.val(out);
  return Raster::from_values(pan.width, pan.height, lrms.bands, v.data);
}

// ---------------------------------------------------------------------------
// Loss terms

namespace detail_fuse {
// The structural term adapts its window to small planes (the default 11x11
// needs at least 11 pixels per side).
inline int ssim_window(const Shape& s) {
  int w = std::min(11, std::min(s[2], s[3]));
  return w % 2 == 0 ? w - 1 : w;
}
}  // namespace detail_fuse

// Spectral consistency: downsampled output against the LRMS input.
template <class T>
NodeId<T> loss_spec(Tape<T>& tp, NodeId<T> out, NodeId<T> lrms) {
  const Shape& sl = tp.val(lrms).shape;
  NodeId<T> down = tp.resize_bicubic(out, sl[2], sl[3]);
  NodeId<T> one = tp.scalar(T(1));
  const int win = detail_fuse::ssim_window(sl);
  return tp.add(ops::mse(tp, down, lrms),
                tp.sub(one, ops::ssim(tp, down, lrms, win)));
}

// Spatial consistency: spectrally degraded output against PAN.
template <class T>
NodeId<T> loss_spat(Tape<T>& tp, NodeId<T> out, NodeId<T> pan,
                    NodeId<T> phi_w) {
  NodeId<T> p = tp.conv2d(out, phi_w, 1, 0);
  NodeId<T> one = tp.scalar(T(1));
  const int win = detail_fuse::ssim_window(tp.val(pan).shape);
  return tp.add(ops::mse(tp, p, pan),
                tp.sub(one, ops::ssim(tp, p, pan, win)));
}

// Mean l1 against a frozen pseudo reference.
template <class T>
NodeId<T> loss_pseudo(Tape<T>& tp, NodeId<T> out, NodeId<T> ref) {
  if (tp.val(out).shape != tp.val(ref).shape)
    throw ConfigError("loss_pseudo: reference shape mismatch");
  return tp.mean(tp.abs_(tp.sub(out, ref)));
}

namespace detail_fuse {

constexpr double kQEps = 1e-8;   // matches the evaluation-path stabilizer
constexpr double kDegenerate = 1e-8;

// Per-scene block-mean Q index between two [N,1,H,W] planes, differentiable.
template <class T>
NodeId<T> diff_q_rows(Tape<T>& tp, NodeId<T> a, NodeId<T> b, int block) {
  const Shape& s = tp.val(a).shape;
  const int N = s[0], H = s[2], W = s[3];
  const int bs = std::min(block, std::min(H, W));
  const int by = H / bs, bx = W / bs;
  const T inv_n = T(1.0 / (double(bs) * bs));
  NodeId<T> ones = tp.constant(Array<T>::full({1, 1, bs, bs}, T(1)));
  auto block_mean = [&](NodeId<T> v) {
    return tp.scale(tp.conv2d(v, ones, bs, 0), inv_n);
  };
  NodeId<T> ma = block_mean(a);
  NodeId<T> mb = block_mean(b);
  NodeId<T> va = tp.sub(block_mean(tp.mul(a, a)), tp.mul(ma, ma));
  NodeId<T> vb = tp.sub(block_mean(tp.mul(b, b)), tp.mul(mb, mb));
  NodeId<T> cab = tp.sub(block_mean(tp.mul(a, b)), tp.mul(ma, mb));
  NodeId<T> num = tp.scale(tp.mul(tp.mul(cab, ma), mb), T(4));
  NodeId<T> den =
      tp.mul(tp.add_const(tp.add(va, vb), T(kQEps)),
             tp.add_const(tp.add(tp.mul(ma, ma), tp.mul(mb, mb)), T(kQEps)));
  NodeId<T> q = tp.div(num, den);  // [N,1,by,bx]
  NodeId<T> rows = tp.reshape(q, {N, by * bx});
  return tp.scale(tp.row_sum(rows), T(1.0 / (by * bx)));
}

}  // namespace detail_fuse

// Differentiable no-reference trade-off: mean over the batch of
// 1 - (1 - D_lambda)(1 - D_s). The reduced-scale Q values are constants
// (they do not depend on the output) and are computed with the evaluation
// path, keeping the two routes consistent.
template <class T>
NodeId<T> loss_qnr(Tape<T>& tp, NodeId<T> out, NodeId<T> pan,
                   const std::vector<const Raster*>& lrms,
                   const std::vector<const Raster*>& pan_lr, int block = 32) {
  const Shape& s = tp.val(out).shape;
  const int N = s[0], B = s[1];
  if (B < 2) throw ConfigError("loss_qnr: needs >= 2 bands");
  if (int(lrms.size()) != N || int(pan_lr.size()) != N)
    throw ConfigError("loss_qnr: constants do not match the batch");

  std::vector<NodeId<T>> bands(B);
  for (int c = 0; c < B; ++c) bands[c] = tp.narrow(out, 1, c, 1);

  NodeId<T> dl{};
  int pairs = 0;
  for (int l = 0; l < B; ++l)
    for (int r = l + 1; r < B; ++r, ++pairs) {
      NodeId<T> qf = detail_fuse::diff_q_rows(tp, bands[l], bands[r], block);
      Array<T> qm = Array<T>::zeros({N});
      for (int i = 0; i < N; ++i)
        qm.data[i] = T(uiqi(lrms[i]->plane(l), lrms[i]->plane(r),
                            lrms[i]->width, lrms[i]->height, block));
      NodeId<T> diff = tp.abs_(tp.sub(qf, tp.constant(std::move(qm))));
      dl = pairs == 0 ? diff : tp.add(dl, diff);
    }
  dl = tp.scale(dl, T(1.0 / pairs));  // unordered pairs average == ordered

  NodeId<T> ds{};
  for (int l = 0; l < B; ++l) {
    NodeId<T> qf = detail_fuse::diff_q_rows(tp, bands[l], pan, block);
    Array<T> qm = Array<T>::zeros({N});
    for (int i = 0; i < N; ++i)
      qm.data[i] = T(uiqi(lrms[i]->plane(l), pan_lr[i]->plane(0),
                          lrms[i]->width, lrms[i]->height, block));
    NodeId<T> diff = tp.abs_(tp.sub(qf, tp.constant(std::move(qm))));
    ds = l == 0 ? diff : tp.add(ds, diff);
  }
  ds = tp.scale(ds, T(1.0 / B));

  NodeId<T> one = tp.scalar(T(1));
  NodeId<T> qnr_rows = tp.mul(tp.sub(one, dl), tp.sub(one, ds));
  return tp.mean(tp.sub(one, qnr_rows));
}

// Directional semantic loss: align image-space displacements (toward the
// fused output) with the text-space displacements (toward the reference
// prompt). Samples with degenerate displacement vectors contribute zero and
// are counted.
template <class T>
struct SemanticLoss {
  NodeId<T> loss;
  int skipped = 0;
};

template <class T>
SemanticLoss<T> loss_semantic(Tape<T>& tp, NodeId<T> f_out,
                              const Array<T>& f_ms, const Array<T>& f_pan,
                              const std::vector<double>& dt_ms,
                              const std::vector<double>& dt_pan) {
  const Shape& s = tp.val(f_out).shape;
  const int N = s[0], D = s[1];
  if (f_ms.shape != s || f_pan.shape != s)
    throw ConfigError("loss_semantic: source embedding shape mismatch");
  double nt_ms = 0, nt_pan = 0;
  for (int d = 0; d < D; ++d) {
    nt_ms += dt_ms[d] * dt_ms[d];
    nt_pan += dt_pan[d] * dt_pan[d];
  }
  if (std::sqrt(nt_ms) < detail_fuse::kDegenerate ||
      std::sqrt(nt_pan) < detail_fuse::kDegenerate)
    throw ConfigError("loss_semantic: degenerate text displacement");

  NodeId<T> dv_ms = tp.sub(f_out, tp.constant(f_ms));
  NodeId<T> dv_pan = tp.sub(f_out, tp.constant(f_pan));

  // validity per sample: both image displacements non-degenerate
  std::vector<int> valid;
  const Array<T>& vms = tp.val(dv_ms);
  const Array<T>& vpan = tp.val(dv_pan);
  for (int i = 0; i < N; ++i) {
    double n1 = 0, n2 = 0;
    for (int d = 0; d < D; ++d) {
      n1 += double(vms.data[size_t(i) * D + d]) * vms.data[size_t(i) * D + d];
      n2 +=
          double(vpan.data[size_t(i) * D + d]) * vpan.data[size_t(i) * D + d];
    }
    if (std::sqrt(n1) >= detail_fuse::kDegenerate &&
        std::sqrt(n2) >= detail_fuse::kDegenerate)
      valid.push_back(i);
  }
  SemanticLoss<T> res;
  res.skipped = N - int(valid.size());
  if (valid.empty()) {
    res.loss = tp.scalar(T(0));
    return res;
  }

  auto take_rows = [&](NodeId<T> m) {
    std::vector<int64_t> idx;
    idx.reserve(valid.size() * size_t(D));
    for (int i : valid)
      for (int d = 0; d < D; ++d) idx.push_back(int64_t(i) * D + d);
    return tp.reshape(tp.take(m, std::move(idx)), {int(valid.size()), D});
  };
  auto tile_const = [&](const std::vector<double>& v) {
    Array<T> a = Array<T>::zeros({int(valid.size()), D});
    for (size_t i = 0; i < valid.size(); ++i)
      for (int d = 0; d < D; ++d) a.data[i * D + d] = T(v[d]);
    return tp.constant(std::move(a));
  };

  NodeId<T> cos_ms =
      ops::cosine_rows(tp, take_rows(dv_ms), tile_const(dt_ms));
  NodeId<T> cos_pan =
      ops::cosine_rows(tp, take_rows(dv_pan), tile_const(dt_pan));
  // sum over valid rows of 1 - (cos_ms + cos_pan)/2, averaged over the full
  // batch so skipped samples contribute zero
  NodeId<T> per_row = tp.sub(tp.scalar(T(1)),
                             tp.scale(tp.add(cos_ms, cos_pan), T(0.5)));
  res.loss = tp.scale(tp.sum(per_row), T(1.0 / N));
  return res;
}

// ---------------------------------------------------------------------------
// Reduced-resolution pretraining of the pseudo-reference generator: degrade
// the training pairs once more so the original LRMS becomes the target.

struct PretrainConfig {
  int bands = 4;
  int batch = 32;
  int iterations = 1000;
  double lr = 0.003;
  uint64_t seed = 17;
  SensorModel model = SensorModel::standard(4);
};

struct PretrainLogRow {
  int iter = 0;
  double loss = 0;
};

struct PretrainResult {
  ParamStore<float> params;
  std::vector<PretrainLogRow> log;
  bool diverged = false;
  int completed = 0;
};

inline PretrainResult pretrain_backbone_reduced(
    const std::vector<SceneTriplet>& data, const PretrainConfig& cfg) {
  if (int(data.size()) < cfg.batch)
    throw ConfigError("pretrain: dataset smaller than batch size");
  struct Pair {
    Raster lrms2, pan2;
    const Raster* target;
  };
  std::vector<Pair> pairs;
  for (const auto& t : data)
    pairs.push_back(
        {mtf_degrade(t.lrms, cfg.model), degrade_pan(t.pan, cfg.model),
         &t.lrms});

  PretrainResult res;
  res.params = init_backbone_params(cfg.bands, cfg.seed);
  AdamState<float> adam;
  Rng rng = Rng(cfg.seed).fork(0x52);

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto idx =
        detail_align::pick_batch(rng, int(pairs.size()), cfg.batch);
    std::vector<const Raster*> in_ms, in_pan, target;
    for (int i : idx) {
      in_ms.push_back(&pairs[i].lrms2);
      in_pan.push_back(&pairs[i].pan2);
      target.push_back(pairs[i].target);
    }
    Tape<float> tp;
    MountedParams<float> mp = mount(tp, res.params, true);
    auto out = backbone_forward(
        tp, mp, tp.constant(stack_rasters<float>(in_ms)),
        tp.constant(stack_rasters<float>(in_pan)));
    auto loss = loss_pseudo(tp, out, tp.constant(stack_rasters<float>(target)));
    const double lv = tp.scalar_val(loss);
    if (!std::isfinite(lv)) {
      res.diverged = true;
      res.completed = it;
      return res;
    }
    res.log.push_back({it, lv});
    tp.backward(loss);
    std::map<std::string, Array<float>> grads;
    for (const auto& [name, id] : mp.ids) grads.emplace(name, tp.grad(id));
    adam_step(res.params, grads, cfg.lr, 0.9, 0.999, 1e-8, adam);
  }
  res.completed = cfg.iterations;
  return res;
}

// ---------------------------------------------------------------------------
// Stage-II training

// The four switchable loss groups (reconstruction = spectral + spatial).
struct LossFlags {
  bool recon = true;
  bool qnr = true;
  bool pseudo = true;
  bool semantic = true;

  std::string label() const {
    std::string out;
    auto app = [&](bool on, const char* name) {
      if (!on) return;
      if (!out.empty()) out += '+';
      out += name;
    };
    app(recon, "rec");
    app(qnr, "qnr");
    app(pseudo, "pseudo");
    app(semantic, "sem");
    return out.empty() ? "none" : out;
  }
};

struct FusionConfig {
  EncoderConfig encoder;
  HrmsVariant variant = HrmsVariant::Wald;
  SensorModel model = SensorModel::standard(4);
  LossFlags flags;
  double semantic_weight = 1.0;
  int batch = 32;
  int iterations = 1000;
  double lr = 0.003;
  uint64_t seed = 17;
};

struct Stage2LogRow {
  int iter = 0;
  double spec = 0, spat = 0, qnr = 0, pseudo = 0, semantic = 0, total = 0;
};

struct FusionResult {
  ParamStore<float> params;
  std::vector<Stage2LogRow> log;
  bool diverged = false;
  int completed = 0;
  int skipped_semantic = 0;
};

inline FusionResult train_stage2(const std::vector<SceneTriplet>& data,
                                 const ParamStore<float>& encoder_params,
                                 const ParamStore<float>& pretrained,
                                 const FusionConfig& cfg) {
  if (int(data.size()) < cfg.batch)
    throw ConfigError("stage2: dataset smaller than batch size");
  if (!cfg.flags.recon && !cfg.flags.qnr && !cfg.flags.pseudo &&
      !cfg.flags.semantic)
    throw ConfigError("stage2: every loss group is disabled");

  const int n = int(data.size());

  // Constants that do not depend on the backbone are computed once.
  std::vector<Raster> refs;        // pseudo-supervision targets
  std::vector<Raster> pan_lr;      // degraded PAN for the QNR loss
  std::vector<std::vector<float>> f_ms, f_pan;
  std::vector<double> dt_ms, dt_pan;
  if (cfg.flags.pseudo) {
    refs.reserve(n);
    for (const auto& t : data)
      refs.push_back(fuse_raster(pretrained, t.lrms, t.pan));
  }
  if (cfg.flags.qnr) {
    pan_lr.reserve(n);
    for (const auto& t : data) pan_lr.push_back(degrade_pan(t.pan, cfg.model));
  }
  if (cfg.flags.semantic) {
    std::vector<const Raster*> ms_all, pan_all;
    for (const auto& t : data) {
      ms_all.push_back(&t.lrms);
      pan_all.push_back(&t.pan);
    }
    f_ms = embed_images(encoder_params, cfg.encoder, ms_all, Modality::MS);
    f_pan = embed_images(encoder_params, cfg.encoder, pan_all, Modality::PAN);
    const auto txt = text_embeddings(encoder_params, cfg.encoder, cfg.variant);
    const int D = int(txt[0].size());
    dt_ms.resize(D);
    dt_pan.resize(D);
    for (int d = 0; d < D; ++d) {
      dt_ms[d] = double(txt[2][d]) - txt[0][d];
      dt_pan[d] = double(txt[2][d]) - txt[1][d];
    }
  }

  FusionResult res;
  res.params = init_backbone_params(cfg.encoder.bands, cfg.seed);
  AdamState<float> adam;
  Rng rng = Rng(cfg.seed).fork(0x53);

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto idx = detail_align::pick_batch(rng, n, cfg.batch);
    std::vector<const Raster*> ms_b, pan_b, ref_b, pan_lr_b;
    for (int i : idx) {
      ms_b.push_back(&data[i].lrms);
      pan_b.push_back(&data[i].pan);
      if (cfg.flags.pseudo) ref_b.push_back(&refs[i]);
      if (cfg.flags.qnr) pan_lr_b.push_back(&pan_lr[i]);
    }

    Tape<float> tp;
    MountedParams<float> bb = mount(tp, res.params, true);
    auto lrms_node = tp.constant(stack_rasters<float>(ms_b));
    auto pan_node = tp.constant(stack_rasters<float>(pan_b));
    auto out = backbone_forward(tp, bb, lrms_node, pan_node);

    Stage2LogRow row;
    row.iter = it;
    NodeId<float> total = tp.scalar(0.0f);
    if (cfg.flags.recon) {
      auto sp = loss_spec(tp, out, lrms_node);
      auto st = loss_spat(tp, out, pan_node, bb.at("bb.phi.w"));
      row.spec = tp.scalar_val(sp);
      row.spat = tp.scalar_val(st);
      total = tp.add(total, tp.add(sp, st));
    }
    if (cfg.flags.qnr) {
      auto q = loss_qnr(tp, out, pan_node, ms_b, pan_lr_b);
      row.qnr = tp.scalar_val(q);
      total = tp.add(total, q);
    }
    if (cfg.flags.pseudo) {
      auto ps = loss_pseudo(tp, out, tp.constant(stack_rasters<float>(ref_b)));
      row.pseudo = tp.scalar_val(ps);
      total = tp.add(total, ps);
    }
    if (cfg.flags.semantic) {
      MountedParams<float> ep = mount(tp, encoder_params, false);
      EncoderForward<float> enc(tp, ep, cfg.encoder);
      auto f_out = enc.encode_image(out, Modality::HRMS);
      const int D = int(dt_ms.size());
      Array<float> fm = Array<float>::zeros({cfg.batch, D});
      Array<float> fp = Array<float>::zeros({cfg.batch, D});
      for (int i = 0; i < cfg.batch; ++i)
        for (int d = 0; d < D; ++d) {
          fm.data[size_t(i) * D + d] = f_ms[idx[i]][d];
          fp.data[size_t(i) * D + d] = f_pan[idx[i]][d];
        }
      auto sem = loss_semantic(tp, f_out, fm, fp, dt_ms, dt_pan);
      res.skipped_semantic += sem.skipped;
      row.semantic = tp.scalar_val(sem.loss);
      total = tp.add(total, tp.scale(sem.loss, float(cfg.semantic_weight)));
    }
    row.total = tp.scalar_val(total);
    if (!std::isfinite(row.total)) {
      res.diverged = true;
      res.completed = it;
      return res;
    }
    res.log.push_back(row);

    tp.backward(total);
    std::map<std::string, Array<float>> grads;
    for (const auto& [name, id] : bb.ids) grads.emplace(name, tp.grad(id));
    adam_step(res.params, grads, cfg.lr, 0.9, 0.999, 1e-8, adam);
  }
  res.completed = cfg.iterations;
  return res;
}

}  // namespace pansharp
