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
#include "pansharp/fusion.hpp"
#include "pansharp/gradcheck.hpp"

using namespace pansharp;

namespace {

using IdD = Tape<double>::Id;

std::vector<SceneTriplet> tiny_dataset(int n, int size, uint64_t seed0) {
  const SensorModel model = SensorModel::standard(4);
  std::vector<SceneTriplet> data;
  for (int s = 0; s < n; ++s) {
    Scene sc = synth_scene(seed0 + uint64_t(s), size, 4);
    sc.id = s;
    data.push_back(make_triplet(sc, model, true));
  }
  return data;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("backbone: shape, residual identity at init, determinism") {
  Rng rng(91);
  const ParamStore<float> bb = init_backbone_params(4, 7);
  Raster lrms = oracle::random_raster(rng, 8, 8, 4);
  Raster pan = oracle::random_raster(rng, 32, 32, 1);

  Tape<float> tp;
  MountedParams<float> mp = mount(tp, bb, false);
  auto out = backbone_forward(tp, mp, tp.constant(lrms.to_array<float>()),
                              tp.constant(pan.to_array<float>()));
  REQUIRE(tp.val(out).shape == Shape{1, 4, 32, 32});

  // zero-initialized final layer means the output is the bicubic expansion
  auto up = tp.resize_bicubic(tp.constant(lrms.to_array<float>()), 32, 32);
  const Array<float>& got = tp.val(out);
  const Array<float>& want = tp.val(up);
  CHECK(std::memcmp(got.data.data(), want.data.data(),
                    want.data.size() * 4) == 0);

  const Raster f1 = fuse_raster(bb, lrms, pan);
  const Raster f2 = fuse_raster(bb, lrms, pan);
  CHECK(std::memcmp(f1.data.data(), f2.data.data(), f1.data.size() * 4) == 0);

  Raster wrong_pan = oracle::random_raster(rng, 31, 32, 1);
  Tape<float> tp2;
  MountedParams<float> mp2 = mount(tp2, bb, false);
  CHECK_THROWS_AS(
      backbone_forward(tp2, mp2, tp2.constant(lrms.to_array<float>()),
                       tp2.constant(wrong_pan.to_array<float>())),
      ConfigError);
}

TEST_CASE("loss_spec: nonnegative, term-wise decomposition") {
  Rng rng(92);
  Raster out_r = oracle::random_raster(rng, 64, 64, 2);
  Raster lrms = oracle::random_raster(rng, 16, 16, 2);
  Tape<double> tp;
  auto out = tp.value(out_r.to_array<double>(), false);
  auto lr = tp.value(lrms.to_array<double>(), false);
  auto loss = loss_spec(tp, out, lr);
  CHECK(tp.scalar_val(loss) >= 0.0);
  auto down = tp.resize_bicubic(out, 16, 16);
  const double want = tp.scalar_val(ops::mse(tp, down, lr)) + 1.0 -
                      tp.scalar_val(ops::ssim(tp, down, lr));
  CHECK(tp.scalar_val(loss) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("loss_spat: uniform phi on band-mean output reaches zero") {
  Rng rng(93);
  Raster pan = oracle::random_raster(rng, 16, 16, 1);
  // every band equals PAN, so the 1/B-uniform phi reproduces PAN exactly
  std::vector<float> v;
  for (int b = 0; b < 4; ++b)
    v.insert(v.end(), pan.data.begin(), pan.data.end());
  Raster out_r = Raster::from_values(16, 16, 4, std::move(v));

  Tape<double> tp;
  auto phi = tp.value(Array<double>::full({1, 4, 1, 1}, 0.25), false);
  auto loss = loss_spat(tp, tp.value(out_r.to_array<double>(), false),
                        tp.value(pan.to_array<double>(), false), phi);
  CHECK(tp.scalar_val(loss) == doctest::Approx(0.0).epsilon(1e-9));

  Raster other = oracle::random_raster(rng, 16, 16, 4);
  Tape<double> tp2;
  auto phi2 = tp2.value(Array<double>::full({1, 4, 1, 1}, 0.25), false);
  auto l2 = loss_spat(tp2, tp2.value(other.to_array<double>(), false),
                      tp2.value(pan.to_array<double>(), false), phi2);
  CHECK(tp2.scalar_val(l2) >= 0.0);
}

TEST_CASE("loss_pseudo: identity, offset, elementwise oracle") {
  Rng rng(94);
  Raster a = oracle::random_raster(rng, 8, 8, 4);
  Tape<double> tp;
  auto av = tp.value(a.to_array<double>(), false);
  CHECK(tp.scalar_val(loss_pseudo(tp, av, av)) == 0.0);

  Array<double> b = a.to_array<double>();
  for (auto& x : b.data) x += 0.125;
  auto bv = tp.value(b, false);
  CHECK(tp.scalar_val(loss_pseudo(tp, av, bv)) ==
        doctest::Approx(0.125).epsilon(1e-9));

  Array<double> c = oracle::random_raster(rng, 8, 8, 4).to_array<double>();
  double want = 0;
  for (size_t i = 0; i < c.data.size(); ++i)
    want += std::abs(a.to_array<double>().data[i] - c.data[i]);
  want /= double(c.data.size());
  CHECK(tp.scalar_val(loss_pseudo(tp, av, tp.value(c, false))) ==
        doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("loss_qnr matches the evaluation path on identical inputs") {
  const SensorModel model = SensorModel::standard(4);
  std::vector<SceneTriplet> data = tiny_dataset(2, 32, 500);
  std::vector<Raster> fused, pan_lr;
  for (const auto& t : data) {
    fused.push_back(*t.pseudo_hrms);
    pan_lr.push_back(degrade_pan(t.pan, model));
  }

  Tape<double> tp;
  std::vector<const Raster*> fr = {&fused[0], &fused[1]};
  std::vector<const Raster*> lr = {&data[0].lrms, &data[1].lrms};
  std::vector<const Raster*> pl = {&pan_lr[0], &pan_lr[1]};
  auto out = tp.constant(stack_rasters<double>(fr));
  auto pan = tp.constant(stack_rasters<double>(
      {&data[0].pan, &data[1].pan}));
  auto loss = loss_qnr(tp, out, pan, lr, pl);

  double want = 0;
  for (int i = 0; i < 2; ++i) {
    const QnrResult q = qnr(fused[i], data[i].lrms, data[i].pan, model);
    want += 1.0 - q.qnr;
  }
  want /= 2.0;
  CHECK(tp.scalar_val(loss) == doctest::Approx(want).epsilon(1e-6));
  CHECK(tp.scalar_val(loss) >= 0.0);
  CHECK(tp.scalar_val(loss) <= 1.0);
}

TEST_CASE("loss_semantic: parallel, antiparallel, orthogonal, skip policy") {
  const int n = 2, d = 4;
  Array<double> f_ms = Array<double>::zeros({n, d});
  Array<double> f_pan = Array<double>::zeros({n, d});
  Array<double> f_out = Array<double>::zeros({n, d});
  for (int i = 0; i < n; ++i) {
    f_out.data[i * d + 0] = 1.0;  // displacement (1,0,..) - 0 = e0
  }
  std::vector<double> dt_e0 = {1, 0, 0, 0};
  std::vector<double> dt_e1 = {0, 1, 0, 0};
  std::vector<double> dt_neg = {-1, 0, 0, 0};

  auto eval = [&](const Array<double>& fo, const std::vector<double>& dms,
                  const std::vector<double>& dpan) {
    Tape<double> tp;
    auto out = tp.value(fo, false);
    auto sem = loss_semantic(tp, out, f_ms, f_pan, dms, dpan);
    return std::make_pair(tp.scalar_val(sem.loss), sem.skipped);
  };

  CHECK(eval(f_out, dt_e0, dt_e0).first == doctest::Approx(0.0));
  CHECK(eval(f_out, dt_neg, dt_neg).first == doctest::Approx(2.0));
  CHECK(eval(f_out, dt_e1, dt_e1).first == doctest::Approx(1.0));
  // one sample degenerate: contributes zero, is counted
  Array<double> partial = f_out;
  for (int k = 0; k < d; ++k) partial.data[0 * d + k] = 0.0;
  auto [loss, skipped] = eval(partial, dt_e0, dt_e0);
  CHECK(skipped == 1);
  CHECK(loss == doctest::Approx(0.0));
  // range on random data
  Rng rng(95);
  for (int trial = 0; trial < 20; ++trial) {
    Array<double> fo = oracle::random_array<double>(rng, {n, d}, -1, 1);
    std::vector<double> dm(d), dp(d);
    for (int k = 0; k < d; ++k) {
      dm[k] = rng.uniform(-1, 1);
      dp[k] = rng.uniform(-1, 1);
    }
    const double v = eval(fo, dm, dp).first;
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("composite stage-2 objective passes finite differences") {
  // every loss group wired through the backbone output, f64, tiny patch
  const SensorModel model = SensorModel::standard(4);
  Scene sc = synth_scene(777, 8, 4);
  SceneTriplet t = make_triplet(sc, model, true);
  const Raster pan_lr = degrade_pan(t.pan, model);
  Array<double> out0 = t.pseudo_hrms->to_array<double>();
  const Array<double> ref = exp_upsample(t.lrms).to_array<double>();
  Array<double> f_ms = Array<double>::zeros({1, 3});
  Array<double> f_pan = Array<double>::zeros({1, 3});
  f_ms.data = {1, 0, 0};
  f_pan.data = {0, 1, 0};
  const std::vector<double> dt_ms = {0.3, -0.2, 0.5};
  const std::vector<double> dt_pan = {-0.1, 0.4, 0.2};

  const double err = grad_check(
      [&](Tape<double>& tp, IdD x) {
        auto lrms = tp.value(t.lrms.to_array<double>(), false);
        auto pan = tp.value(t.pan.to_array<double>(), false);
        auto phi = tp.value(Array<double>::full({1, 4, 1, 1}, 0.25), true);
        auto spec = loss_spec(tp, x, lrms);
        auto spat = loss_spat(tp, x, pan, phi);
        auto q = loss_qnr(tp, x, pan, {&t.lrms}, {&pan_lr}, 8);
        auto ps = loss_pseudo(tp, x, tp.value(ref, false));
        // embedding stand-in: mean over pixels per band as a 3-vector
        auto pooled = tp.mean_hw(x);                    // [1,4]
        auto fo = tp.narrow(pooled, 1, 0, 3);           // [1,3]
        auto sem = loss_semantic(tp, fo, f_ms, f_pan, dt_ms, dt_pan);
        return tp.add(tp.add(tp.add(spec, spat), tp.add(q, ps)), sem.loss);
      },
      out0, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("pretrain: loss decreases, deterministic, beats plain expansion") {
  std::vector<SceneTriplet> data = tiny_dataset(8, 32, 600);
  PretrainConfig cfg;
  cfg.bands = 4;
  cfg.batch = 4;
  cfg.iterations = 150;
  cfg.seed = 3;
  cfg.model = SensorModel::standard(4);

  const PretrainResult r1 = pretrain_backbone_reduced(data, cfg);
  REQUIRE_FALSE(r1.diverged);
  CHECK(r1.log.back().loss < r1.log.front().loss);
  const PretrainResult r2 = pretrain_backbone_reduced(data, cfg);
  CHECK(checkpoint_bytes(r1.params) == checkpoint_bytes(r2.params));

  // held-out reduced-resolution check against the bicubic baseline
  std::vector<SceneTriplet> held = tiny_dataset(3, 32, 900);
  double model_err = 0, exp_err = 0;
  const SensorModel model = SensorModel::standard(4);
  for (const auto& t : held) {
    const Raster fused = fuse_raster(r1.params, t.lrms, t.pan);
    const Raster exp = exp_upsample(t.lrms);
    // reduced-resolution protocol: degrade and compare against the LRMS
    model_err += ergas(mtf_degrade(fused, model), t.lrms, 4);
    exp_err += ergas(mtf_degrade(exp, model), t.lrms, 4);
  }
  CHECK(model_err < exp_err);
}

TEST_CASE("train_stage2: smoke run, flags, determinism, freeze contract") {
  std::vector<SceneTriplet> data = tiny_dataset(6, 32, 700);
  EncoderConfig ecfg;
  ecfg.bands = 4;
  const ParamStore<float> encoder = init_encoder_params(ecfg, 50);
  const std::string encoder_before = checkpoint_bytes(encoder);

  PretrainConfig pcfg;
  pcfg.bands = 4;
  pcfg.batch = 3;
  pcfg.iterations = 60;
  pcfg.seed = 3;
  const PretrainResult pre = pretrain_backbone_reduced(data, pcfg);

  FusionConfig cfg;
  cfg.encoder = ecfg;
  cfg.batch = 3;
  cfg.iterations = 25;
  cfg.seed = 4;
  cfg.model = SensorModel::standard(4);

  const FusionResult r1 = train_stage2(data, encoder, pre.params, cfg);
  REQUIRE_FALSE(r1.diverged);
  REQUIRE(int(r1.log.size()) == cfg.iterations);
  CHECK(r1.log.back().total < r1.log.front().total);
  CHECK(checkpoint_bytes(encoder) == encoder_before);  // frozen supervisor

  const FusionResult r2 = train_stage2(data, encoder, pre.params, cfg);
  CHECK(checkpoint_bytes(r1.params) == checkpoint_bytes(r2.params));

  // ablation flags drop terms from the objective
  FusionConfig rec_only = cfg;
  rec_only.flags = LossFlags{true, false, false, false};
  rec_only.iterations = 5;
  const FusionResult r3 = train_stage2(data, encoder, pre.params, rec_only);
  for (const auto& row : r3.log) {
    CHECK(row.qnr == 0.0);
    CHECK(row.pseudo == 0.0);
    CHECK(row.semantic == 0.0);
  }
  CHECK(LossFlags{true, false, false, false}.label() == "rec");
  CHECK(LossFlags{}.label() == "rec+qnr+pseudo+sem");

  FusionConfig none = cfg;
  none.flags = LossFlags{false, false, false, false};
  CHECK_THROWS_AS(train_stage2(data, encoder, pre.params, none), ConfigError);
}

}  // TEST_SUITE
