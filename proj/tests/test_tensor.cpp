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
#include "pansharp/tensor.hpp"

using namespace pansharp;
using Id = Tape<double>::Id;

namespace {

// Random values bounded away from the relu/abs kink and from zero divisors.
Array<double> signed_margin(Rng& rng, Shape shape) {
  Array<double> a = Array<double>::zeros(std::move(shape));
  for (auto& v : a.data) {
    const double mag = rng.uniform(0.2, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return a;
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("backward of a linear functional is all ones") {
  Tape<double> tp;
  auto x = tp.value(Array<double>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
  tp.backward(tp.sum(x));
  for (double g : tp.grad(x).data) CHECK(g == 1.0);
}

TEST_CASE("backward of the squared norm is 2x") {
  Tape<double> tp;
  Array<double> xv({4}, {0.5, -1.5, 2.0, 3.0});
  auto x = tp.value(xv, true);
  tp.backward(tp.sum(tp.mul(x, x)));
  for (int i = 0; i < 4; ++i)
    CHECK(tp.grad(x).data[i] == doctest::Approx(2 * xv.data[i]));
}

TEST_CASE("backward demands a scalar loss and a fresh tape") {
  Tape<double> tp;
  auto x = tp.value(Array<double>({2}, {1, 2}), true);
  CHECK_THROWS_AS(tp.backward(x), ConfigError);
  auto s = tp.sum(x);
  tp.backward(s);
  CHECK_THROWS_AS(tp.backward(s), ConfigError);
}

TEST_CASE("elementwise primitives pass finite-difference checks") {
  Rng rng(11);
  auto both = [&](const GradFn& f, const Array<double>& x) {
    CHECK(grad_check(f, x) <= kTol);
  };
  Array<double> x = signed_margin(rng, {3, 4});
  Array<double> pos = oracle::random_array<double>(rng, {3, 4}, 0.3, 2.0);

  both([](Tape<double>& t, Id v) { return t.sum(t.mul(v, v)); }, x);
  both([](Tape<double>& t, Id v) {
    return t.sum(t.div(t.scale(v, 2.0), t.add_const(t.mul(v, v), 1.0)));
  }, x);
  both([](Tape<double>& t, Id v) { return t.sum(t.exp(t.scale(v, 0.5))); }, x);
  both([](Tape<double>& t, Id v) { return t.sum(t.log(v)); }, pos);
  both([](Tape<double>& t, Id v) { return t.sum(t.sqrt_(v)); }, pos);
  both([](Tape<double>& t, Id v) { return t.sum(t.abs_(v)); }, x);
  both([](Tape<double>& t, Id v) { return t.sum(t.relu(v)); }, x);
  both([](Tape<double>& t, Id v) { return t.mean(t.mul(v, v)); }, x);
  both([](Tape<double>& t, Id v) {
    return t.sum(t.mul(t.row_sum(v), t.row_sum(v)));
  }, x);
}

TEST_CASE("scalar broadcast binary ops differentiate on both sides") {
  Rng rng(12);
  Array<double> x = signed_margin(rng, {5});
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto s = t.sum(v);                       // scalar node
          return t.sum(t.mul(t.abs_(v), s));       // broadcast multiply
        }, x) <= kTol);
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto s = t.add_const(t.sum(t.mul(v, v)), 1.0);
          return t.sum(t.div(v, s));               // broadcast divide
        }, x) <= kTol);
}

TEST_CASE("matmul matches the oracle and its gradients check out") {
  Rng rng(13);
  Array<double> a = oracle::random_array<double>(rng, {3, 4}, -1, 1);
  Array<double> b = oracle::random_array<double>(rng, {4, 5}, -1, 1);
  {
    Tape<double> tp;
    auto c = tp.matmul(tp.value(a, false), tp.value(b, false));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += a.data[i * 4 + k] * b.data[k * 5 + j];
        CHECK(tp.val(c).data[i * 5 + j] == doctest::Approx(s).epsilon(1e-12));
      }
  }
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto bb = t.value(b, false);
          auto c = t.matmul(v, bb);
          return t.sum(t.mul(c, c));
        }, a) <= kTol);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto aa = t.value(a, false);
          auto c = t.matmul(aa, v);
          return t.sum(t.mul(c, c));
        }, b) <= kTol);
  // matmul_nt: c = a * b^T
  Array<double> bt = oracle::random_array<double>(rng, {5, 4}, -1, 1);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto c = t.matmul_nt(v, t.value(bt, false));
          return t.sum(t.mul(c, c));
        }, a) <= kTol);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto c = t.matmul_nt(t.value(a, false), v);
          return t.sum(t.mul(c, c));
        }, bt) <= kTol);
}

TEST_CASE("conv2d: identity kernel, constant-image sum, oracle equality") {
  Rng rng(14);
  // 1x1 identity kernel reproduces the input
  {
    Tape<double> tp;
    Array<double> x = oracle::random_array<double>(rng, {1, 1, 3, 3});
    auto y = tp.conv2d(tp.value(x, false),
                       tp.value(Array<double>({1, 1, 1, 1}, {1.0}), false), 1,
                       0);
    CHECK(tp.val(y).data == x.data);
  }
  // 3x3 all-ones kernel on a constant image gives 9c in the interior
  {
    Tape<double> tp;
    auto y = tp.conv2d(tp.value(Array<double>::full({1, 1, 5, 5}, 0.3), false),
                       tp.value(Array<double>::full({1, 1, 3, 3}, 1.0), false),
                       1, 0);
    for (double v : tp.val(y).data) CHECK(v == doctest::Approx(9 * 0.3));
  }
  // random case matches the nested-loop oracle exactly in f64
  for (int trial = 0; trial < 10; ++trial) {
    const int B = 1 + int(rng.below(2));
    const int C = 1 + int(rng.below(4));
    const int F = 1 + int(rng.below(3));
    const int H = 4 + int(rng.below(5));
    const int kh = 1 + int(rng.below(3));
    const int stride = 1 + int(rng.below(2));
    const int pad = int(rng.below(2));
    Array<double> x = oracle::random_array<double>(rng, {B, C, H, H}, -1, 1);
    Array<double> k =
        oracle::random_array<double>(rng, {F, C, kh, kh}, -1, 1);
    Tape<double> tp;
    auto y =
        tp.conv2d(tp.value(x, false), tp.value(k, false), stride, pad);
    Array<double> want = oracle::conv2d(x, k, stride, pad);
    REQUIRE(tp.val(y).shape == want.shape);
    CHECK(std::memcmp(tp.val(y).data.data(), want.data.data(),
                      want.data.size() * sizeof(double)) == 0);
  }
  // channel mismatch is a dimension error
  {
    Tape<double> tp;
    auto x = tp.value(Array<double>::zeros({1, 2, 4, 4}), false);
    auto k = tp.value(Array<double>::zeros({1, 3, 3, 3}), false);
    CHECK_THROWS_AS(tp.conv2d(x, k, 1, 0), ConfigError);
  }
}

TEST_CASE("conv2d gradients w.r.t. input and kernel") {
  Rng rng(15);
  Array<double> x = oracle::random_array<double>(rng, {2, 2, 5, 5}, -1, 1);
  Array<double> k = oracle::random_array<double>(rng, {3, 2, 3, 3}, -1, 1);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto y = t.conv2d(v, t.value(k, false), 1, 1);
          return t.sum(t.mul(y, y));
        }, x) <= kTol);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto y = t.conv2d(t.value(x, false), v, 2, 1);
          return t.sum(t.mul(y, y));
        }, k) <= kTol);
}

TEST_CASE("shape plumbing: reshape, concat, narrow, take, bias") {
  Rng rng(16);
  Array<double> x = oracle::random_array<double>(rng, {2, 6}, -1, 1);
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto r = t.reshape(v, {3, 4});
          auto parts = t.concat({r, r}, 0);        // [6,4]
          auto cut = t.narrow(parts, 0, 1, 4);     // [4,4]
          auto g = t.take(cut, {0, 5, 10, 15});
          return t.sum(t.mul(g, g));
        }, x) <= kTol);
  const Array<double> bias6 = oracle::random_array<double>(rng, {6}, -1, 1);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto y = t.bias_row(v, t.value(bias6, false));
          return t.sum(t.mul(y, y));
        }, x) <= kTol);
  Array<double> img = oracle::random_array<double>(rng, {2, 3, 4, 4}, -1, 1);
  const Array<double> bias3 = oracle::random_array<double>(rng, {3}, -1, 1);
  CHECK(grad_check([&](Tape<double>& t, Id v) {
          auto y = t.bias_channel(v, t.value(bias3, false));
          return t.sum(t.mul(t.mean_hw(y), t.mean_hw(y)));
        }, img) <= kTol);
}

TEST_CASE("row_logsumexp matches a direct evaluation and differentiates") {
  Rng rng(17);
  Array<double> x = oracle::random_array<double>(rng, {3, 5}, -3, 3);
  Tape<double> tp;
  auto l = tp.row_logsumexp(tp.value(x, false));
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += std::exp(x.data[i * 5 + j]);
    CHECK(tp.val(l).data[i] == doctest::Approx(std::log(s)).epsilon(1e-12));
  }
  CHECK(grad_check([](Tape<double>& t, Id v) {
          return t.sum(t.row_logsumexp(v));
        }, x) <= kTol);
}

TEST_CASE("resize_bicubic: constants, ramps, lossy round trip, gradients") {
  Rng rng(18);
  // constant image stays constant at any size
  {
    Tape<double> tp;
    auto y = tp.resize_bicubic(
        tp.value(Array<double>::full({1, 1, 8, 8}, 0.42), false), 3, 5);
    for (double v : tp.val(y).data) CHECK(v == doctest::Approx(0.42));
  }
  // a horizontal linear ramp halves into a linear ramp (interior columns)
  {
    Array<double> ramp = Array<double>::zeros({1, 1, 4, 16});
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 16; ++x) ramp.data[y * 16 + x] = double(x);
    Tape<double> tp;
    auto out = tp.resize_bicubic(tp.value(ramp, false), 4, 8);
    const auto& v = tp.val(out).data;
    // away from borders consecutive samples differ by the scale factor
    for (int x = 2; x < 5; ++x)
      CHECK(v[x + 1] - v[x] == doctest::Approx(2.0).epsilon(1e-9));
  }
  // down-then-up by 4 is lossy on random data
  {
    Array<double> x = oracle::random_array<double>(rng, {1, 1, 4, 4});
    Tape<double> tp;
    auto down = tp.resize_bicubic(tp.value(x, false), 1, 1);
    auto up = tp.resize_bicubic(down, 4, 4);
    double diff = 0;
    for (size_t i = 0; i < x.data.size(); ++i)
      diff = std::max(diff, std::abs(tp.val(up).data[i] - x.data[i]));
    CHECK(diff > 1e-6);
  }
  {
    Tape<double> tp;
    auto x = tp.value(Array<double>::zeros({1, 1, 4, 4}), false);
    CHECK_THROWS_AS(tp.resize_bicubic(x, 0, 4), ConfigError);
  }
  Array<double> x = oracle::random_array<double>(rng, {1, 2, 8, 8}, -1, 1);
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto y = t.resize_bicubic(v, 2, 2);
          return t.sum(t.mul(y, y));
        }, x) <= kTol);
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto y = t.resize_bicubic(v, 16, 16);
          return t.mean(t.mul(y, y));
        }, x) <= kTol);
}

TEST_CASE("gaussian_blur: normalization, impulse response, dense oracle") {
  Rng rng(19);
  {
    Tape<double> tp;
    auto y = tp.gaussian_blur(
        tp.value(Array<double>::full({1, 1, 6, 6}, 0.7), false), 1.0, 5);
    for (double v : tp.val(y).data) CHECK(v == doctest::Approx(0.7));
  }
  {
    // the centered impulse reproduces the separable 2-D kernel
    Array<double> x = Array<double>::zeros({1, 1, 9, 9});
    x.data[4 * 9 + 4] = 1.0;
    Tape<double> tp;
    auto y = tp.gaussian_blur(tp.value(x, false), 1.0, 5);
    Array<double> want = oracle::gaussian_blur(x, 1.0, 5);
    for (size_t i = 0; i < want.data.size(); ++i)
      CHECK(tp.val(y).data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
  {
    Array<double> x = oracle::random_array<double>(rng, {1, 1, 8, 8});
    Tape<double> tp;
    auto y = tp.gaussian_blur(tp.value(x, false), 1.0, 7);
    Array<double> want = oracle::gaussian_blur(x, 1.0, 7);
    for (size_t i = 0; i < want.data.size(); ++i)
      CHECK(std::abs(tp.val(y).data[i] - want.data[i]) < 1e-12);
  }
  {
    Tape<double> tp;
    auto x = tp.value(Array<double>::zeros({1, 1, 4, 4}), false);
    CHECK_THROWS_AS(tp.gaussian_blur(x, -1.0, 5), ConfigError);
  }
  Array<double> x = oracle::random_array<double>(rng, {1, 1, 6, 6}, -1, 1);
  CHECK(grad_check([](Tape<double>& t, Id v) {
          auto y = t.gaussian_blur(v, 0.8, 5);
          return t.sum(t.mul(y, y));
        }, x) <= kTol);
}

TEST_CASE("tape replay is bit-deterministic") {
  Rng rng(20);
  Array<float> x = oracle::random_array<float>(rng, {2, 3, 8, 8}, -1, 1);
  Array<float> k = oracle::random_array<float>(rng, {4, 3, 3, 3}, -1, 1);
  auto run = [&]() {
    Tape<float> tp;
    auto xv = tp.value(x, true);
    auto kv = tp.value(k, true);
    auto y = tp.relu(tp.conv2d(xv, kv, 1, 1));
    tp.backward(tp.mean(tp.mul(y, y)));
    return std::make_pair(tp.grad(xv).data, tp.grad(kv).data);
  };
  auto [gx1, gk1] = run();
  auto [gx2, gk2] = run();
  CHECK(std::memcmp(gx1.data(), gx2.data(), gx1.size() * 4) == 0);
  CHECK(std::memcmp(gk1.data(), gk2.data(), gk1.size() * 4) == 0);
}

TEST_CASE("grad_check on the exact linear case returns ~0") {
  Array<double> x({3}, {0.3, -0.7, 1.1});
  const double err =
      grad_check([](Tape<double>& t, Id v) { return t.sum(v); }, x);
  CHECK(err <= 1e-9);
}

}  // TEST_SUITE
