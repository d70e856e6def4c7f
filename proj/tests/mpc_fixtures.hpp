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

#pragma once

#include <random>
#include <vector>

#include "taskaug/mpc.hpp"
#include "taskaug/scene.hpp"

namespace taskaug::testing {

/// Train scenario whose oracle plan exists, with Gaussian noise on the plan.
inline mpc::MpcProblem random_toy_problem(std::mt19937_64& rng, double noise = 2.0,
                                          const mpc::MpcConfig& cfg = {},
                                          scene::Scenario* scenario_out = nullptr) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    const scene::Scenario s = scene::sample_scenario(scene::Distribution::Train, rng);
    scene::OraclePlan plan;
    try {
      plan = scene::oracle_plan(s, 5, cfg.horizon);
    } catch (const std::exception&) {
      continue;
    }
    std::vector<mpc::State> w = plan.future;
    for (std::size_t t = 1; t < w.size(); ++t) {
      w[t](0) += noise * n01(rng);
      w[t](1) += noise * n01(rng);
      w[t](2) += 0.1 * noise * n01(rng);
      w[t](3) += 0.02 * noise * n01(rng);
    }
    if (scenario_out) *scenario_out = s;
    return mpc::build_toy_problem(s, w, cfg);
  }
}

}  // namespace taskaug::testing
