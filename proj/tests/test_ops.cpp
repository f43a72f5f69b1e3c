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
#include "pansharp/gradcheck.hpp"
#include "pansharp/ops.hpp"
#include "pansharp/params.hpp"

using namespace pansharp;
using Id = Tape<double>::Id;

TEST_SUITE("ops") {

TEST_CASE("l2_normalize: 3-4-5 case, idempotence, zero rejection") {
  {
    Tape<double> tp;
    auto v = ops::l2_normalize(tp, tp.value(Array<double>({2}, {3, 4}), false));
    CHECK(tp.val(v).data[0] == doctest::Approx(0.6));
    CHECK(tp.val(v).data[1] == doctest::Approx(0.8));
  }
  {
    Tape<double> tp;
    auto v =
        ops::l2_normalize(tp, tp.value(Array<double>({2}, {0.6, 0.8}), false));
    CHECK(tp.val(v).data[0] == doctest::Approx(0.6).epsilon(1e-12));
  }
  {
    Rng rng(7);
    Tape<double> tp;
    auto v = ops::l2_normalize(
        tp, tp.value(oracle::random_array<double>(rng, {16}, -1, 1), false));
    double n = 0;
    for (double x : tp.val(v).data) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
  }
  {
    Tape<double> tp;
    auto z = tp.value(Array<double>::zeros({4}), false);
    CHECK_THROWS_AS(ops::l2_normalize(tp, z), ConfigError);
  }
}

TEST_CASE("cosine_sim: identical, orthogonal, antipodal, degenerate") {
  Tape<double> tp;
  auto a = tp.value(Array<double>({3}, {1, 2, 3}), false);
  auto b = tp.value(Array<double>({3}, {-2, 1, 0}), false);
  CHECK(tp.scalar_val(ops::cosine_sim(tp, a, a)) == doctest::Approx(1.0));
  CHECK(tp.scalar_val(ops::cosine_sim(tp, a, b)) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tp.scalar_val(ops::cosine_sim(tp, a, tp.neg(a))) ==
        doctest::Approx(-1.0));
  auto z = tp.value(Array<double>::zeros({3}), false);
  CHECK_THROWS_AS(ops::cosine_sim(tp, a, z), ConfigError);
}

TEST_CASE("info_nce: single class, uniform similarities, hand value") {
  {
    Tape<double> tp;
    auto s = tp.value(Array<double>({1, 1}, {0.37}), false);
    CHECK(tp.scalar_val(ops::info_nce(tp, s, 0.07)) == 0.0);  // exactly
  }
  for (int n : {2, 3, 5}) {
    Tape<double> tp;
    auto s = tp.value(Array<double>::full({n, n}, 0.25), false);
    CHECK(tp.scalar_val(ops::info_nce(tp, s, 0.07)) ==
          doctest::Approx(std::log(double(n))).epsilon(1e-12));
  }
  {
    // N=2, diag 1, off-diag 0: -log(e^{1/t} / (e^{1/t} + 1))
    Tape<double> tp;
    auto s = tp.value(Array<double>({2, 2}, {1, 0, 0, 1}), false);
    const double t = 0.07;
    const double want = -std::log(std::exp(1 / t) / (std::exp(1 / t) + 1));
    CHECK(tp.scalar_val(ops::info_nce(tp, s, t)) ==
          doctest::Approx(want).epsilon(1e-10));
  }
  {
    Tape<double> tp;
    auto s = tp.value(Array<double>::zeros({2, 2}), false);
    CHECK_THROWS_AS(ops::info_nce(tp, s, -1.0), ConfigError);
  }
  // nonnegative on random inputs, and gradients check out
  Rng rng(31);
  Array<double> sim = oracle::random_array<double>(rng, {4, 4}, -1, 1);
  {
    Tape<double> tp;
    CHECK(tp.scalar_val(ops::info_nce(tp, tp.value(sim, false), 0.07)) >=
          0.0);
  }
  CHECK(grad_check([](Tape<double>& t, Id v) {
          return ops::info_nce(t, v, 0.07);
        }, sim, 1e-5) <= 1e-4);
}

TEST_CASE("ssim: identity, range, structural mismatch, gradient") {
  Rng rng(32);
  Array<double> a = oracle::random_array<double>(rng, {1, 1, 16, 16});
  {
    Tape<double> tp;
    auto av = tp.value(a, false);
    CHECK(tp.scalar_val(ops::ssim(tp, av, av)) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    Tape<double> tp;
    Array<double> b = oracle::random_array<double>(rng, {1, 1, 16, 16});
    const double v = tp.scalar_val(
        ops::ssim(tp, tp.value(a, false), tp.value(b, false)));
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  {
    Tape<double> tp;
    Array<double> inv = a;
    for (auto& v : inv.data) v = 1.0 - v;
    const double v = tp.scalar_val(
        ops::ssim(tp, tp.value(a, false), tp.value(inv, false)));
    CHECK(v < 1.0);
  }
  {
    Tape<double> tp;
    auto small = tp.value(Array<double>::zeros({1, 1, 8, 8}), false);
    CHECK_THROWS_AS(ops::ssim(tp, small, small), ConfigError);
  }
  Array<double> b = oracle::random_array<double>(rng, {1, 1, 16, 16});
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          return ops::ssim(t, v, t.value(b, false));
        }, a, 1e-5) <= 1e-4);
}

TEST_CASE("adam: null update, first-step magnitude, determinism") {
  {
    ParamStore<float> ps;
    ps.tensors.emplace("w", Array<float>({3}, {1, 2, 3}));
    AdamState<float> st;
    std::map<std::string, Array<float>> grads;
    grads.emplace("w", Array<float>::zeros({3}));
    adam_step(ps, grads, 0.01, 0.9, 0.999, 1e-8, st);
    CHECK(ps.at("w").data == std::vector<float>{1, 2, 3});
  }
  {
    // bias-corrected first step moves by ~lr in the gradient sign direction
    ParamStore<float> ps;
    ps.tensors.emplace("w", Array<float>({2}, {0.5f, -0.25f}));
    AdamState<float> st;
    std::map<std::string, Array<float>> grads;
    grads.emplace("w", Array<float>({2}, {0.3f, -2.0f}));
    adam_step(ps, grads, 0.003, 0.9, 0.999, 1e-8, st);
    CHECK(ps.at("w").data[0] == doctest::Approx(0.5 - 0.003).epsilon(1e-4));
    CHECK(ps.at("w").data[1] == doctest::Approx(-0.25 + 0.003).epsilon(1e-4));
  }
  {
    auto run = [] {
      ParamStore<float> ps;
      ps.tensors.emplace("w", Array<float>({1}, {1.0f}));
      AdamState<float> st;
      for (int i = 0; i < 25; ++i) {
        std::map<std::string, Array<float>> grads;
        grads.emplace("w", Array<float>({1}, {float(0.1 * (i % 5) - 0.2)}));
        adam_step(ps, grads, 0.003, 0.9, 0.999, 1e-8, st);
      }
      return ps.at("w").data[0];
    };
    const float a = run(), b = run();
    CHECK(std::memcmp(&a, &b, 4) == 0);
  }
  {
    ParamStore<float> ps;
    ps.tensors.emplace("w", Array<float>({1}, {1.0f}));
    AdamState<float> st;
    std::map<std::string, Array<float>> grads;
    grads.emplace("w", Array<float>({1}, {1.0f}));
    CHECK_THROWS_AS(adam_step(ps, grads, -1.0, 0.9, 0.999, 1e-8, st),
                    ConfigError);
  }
}

TEST_CASE("checkpoint container round trips bit-exactly") {
  Rng rng(33);
  ParamStore<float> ps;
  ps.tensors.emplace("alpha", oracle::random_array<float>(rng, {3, 2}, -1, 1));
  ps.tensors.emplace("z.deep.name",
                     oracle::random_array<float>(rng, {4}, -1, 1));
  const std::string path = "/tmp/pansharp_test_ckpt.panw";
  save_checkpoint(ps, path);
  ParamStore<float> back = load_checkpoint(path);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.at("alpha").shape == ps.at("alpha").shape);
  CHECK(std::memcmp(back.at("alpha").data.data(), ps.at("alpha").data.data(),
                    ps.at("alpha").data.size() * 4) == 0);
  CHECK(back.at("z.deep.name").data == ps.at("z.deep.name").data);
  // corrupt magic
  {
    std::string bytes = checkpoint_bytes(ps);
    bytes[0] = 'X';
    std::ofstream f(path, std::ios::binary);
    f << bytes;
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
}

TEST_CASE("composite loss over conv2d and ssim matches finite differences") {
  Rng rng(34);
  Array<double> x = oracle::random_array<double>(rng, {1, 1, 12, 12});
  Array<double> k = oracle::random_array<double>(rng, {1, 1, 3, 3}, -0.5, 0.5);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto y = t.conv2d(v, t.value(k, false), 1, 1);
          auto ref = t.constant(Array<double>::full({1, 1, 12, 12}, 0.4));
          return t.add(ops::mse(t, y, ref),
                       t.sub(t.scalar(1.0), ops::ssim(t, y, ref, 11, 1.5)));
        }, x, 1e-5) <= 1e-4);
}

}  // TEST_SUITE
