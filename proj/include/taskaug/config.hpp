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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "taskaug/evalbench.hpp"

// One flat run configuration in TOML-style `key = value` text. Sections
// prefix their keys: `[mpc]` then `q_diag = [1, 1, 0.1, 0.1]` sets mpc.q_diag.
//
//   mode = "analytic"            # or "vae"
//   seed = 0
//   out_dir = "out"
//   image_size = 100             # analytic renders
//   n_obs = 4
//   past_len = 5
//   horizon = 20
//   dt = 1.0
//   [data]       n_train n_test n_ood n_extra
//   [mpc]        dynamics ("unicycle" | "double_integrator") q_diag r_diag accel_max
//                steer_rate_max v_min v_max margin activation_radius
//   [adversary]  kappa steps step_size clip_norm init_std per_record relabel ("none" | "oracle")
//   [task]       epochs lr batch_size patience val_fraction
//   [vae]        image_size latent_dim epochs lr batch_size

namespace taskaug {

struct RunConfig {
  evalbench::BenchmarkConfig bench;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  /// Copies shared settings (horizon, dt, image sizes, perception) into the
  /// per-module configs, then checks sizes, kappa and K.
  void finalize();
};

/// Throws DataError naming the line on syntax errors and listing every unknown key.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& c);

}  // namespace taskaug
