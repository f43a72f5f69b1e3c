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

#include <functional>

#include "pansharp/tensor.hpp"

namespace pansharp {

// Verification harness: compares reverse-mode gradients against central
// finite differences in f64. Returns the max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// The builder receives a fresh tape and the input node and must return a
// scalar loss node.
using GradFn =
    std::function<Tape<double>::Id(Tape<double>&, Tape<double>::Id)>;

inline double grad_check(const GradFn& f, const Array<double>& x,
                         double eps = 1e-5) {
  // analytic
  Array<double> analytic;
  {
    Tape<double> tp;
    auto xid = tp.value(x, true);
    auto loss = f(tp, xid);
    tp.backward(loss);
    analytic = tp.grad(xid);
  }
  auto eval = [&](const Array<double>& xv) {
    Tape<double> tp;
    auto xid = tp.value(xv, false);
    auto loss = f(tp, xid);
    return tp.scalar_val(loss);
  };
  double worst = 0.0;
  Array<double> xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double save = xp.data[i];
    xp.data[i] = save + eps;
    const double fp = eval(xp);
    xp.data[i] = save - eps;
    const double fm = eval(xp);
    xp.data[i] = save;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double denom =
        std::max(std::max(std::abs(a), std::abs(numeric)), 1e-8);
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace pansharp
