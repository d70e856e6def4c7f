// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference oracle for the autodiff tape. Test-only.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "taskaug/autodiff.hpp"

namespace taskaug::testing {

using BuildFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

/// Scalar objective sum(weights * out), evaluated in double.
inline double weighted_output(const BuildFn& build, const std::vector<Tensor>& inputs,
                              const Tensor& weights) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  const Tensor& out = build(g, vars).value();
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(weights[i]) * out[i];
  return acc;
}

struct GradCheck {
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
  double max_abs_err = 0.0;
  double max_ref = 0.0;

  bool ok(double rel = 1e-3, double abs_floor = 1e-6) const {
    return max_abs_err <= rel * max_ref || max_abs_err <= abs_floor;
  }
};

/// Compares backward() against central differences of sum(weights * out).
inline GradCheck check_gradients(const BuildFn& build, std::vector<Tensor> inputs,
                                 std::mt19937_64& rng, double h = 1e-3) {
  GradCheck res;
  Tensor weights;
  {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (Tensor& t : inputs) vars.push_back(g.param(t));
    ad::Var out = build(g, vars);
    weights = random_tensor(out.shape(), rng, 0.5, 1.5);
    ad::inject_external_gradient(g, out, weights);
    for (ad::Var v : vars) res.analytic.push_back(g.grad(v));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor num(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const float orig = inputs[k][i];
      const float xp = orig + static_cast<float>(h);
      const float xm = orig - static_cast<float>(h);
      inputs[k][i] = xp;
      const double fp = weighted_output(build, inputs, weights);
      inputs[k][i] = xm;
      const double fm = weighted_output(build, inputs, weights);
      inputs[k][i] = orig;
      num[i] = static_cast<float>((fp - fm) / (static_cast<double>(xp) - xm));
      res.max_abs_err = std::max(res.max_abs_err,
                                 std::abs(static_cast<double>(num[i]) - res.analytic[k][i]));
      res.max_ref = std::max(res.max_ref, std::abs(static_cast<double>(num[i])));
    }
    res.numeric.push_back(std::move(num));
  }
  return res;
}

}  // namespace taskaug::testing
