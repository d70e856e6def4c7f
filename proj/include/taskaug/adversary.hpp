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
#include <functional>
#include <string>
#include <vector>

#include "taskaug/dataset.hpp"
#include "taskaug/mpc.hpp"
#include "taskaug/taskmodel.hpp"
#include "taskaug/vae.hpp"

// Per-record linear adversary on the latent scene vector. Each record gets its
// own matrix theta, initialised near the identity and pushed by a few ascent
// steps on  L = J(theta nu) - kappa |nu - theta nu|^2  through the renderer, the
// frozen task model and the MPC. The costliest candidate seen is kept.

namespace taskaug::adversary {

/// nu_bar = theta nu; theta [n,n], nu [n].
ad::Var perturb(ad::Var nu, ad::Var theta);
/// |nu - nu_bar|^2.
ad::Var consistency_loss(ad::Var nu, ad::Var nu_bar);

struct AdversaryConfig {
  double kappa = 30.0;
  int steps = 10;  // K
  double step_size = 1e-2;
  double clip_norm = 10.0;
  double init_std = 0.01;
  int per_record = 1;
  /// Re-plan labels on the perturbed scene instead of reusing the original.
  bool relabel_oracle = false;
  /// Synthesis fails when more than this fraction of records error.
  double max_error_fraction = 0.01;
};

/// Everything downstream of the latent: renderer, task model, MPC. Not owning.
struct Pipeline {
  RendererMode mode = RendererMode::Analytic;
  scene::RenderConfig render;
  const ParamStore* vae = nullptr;
  vae::VaeConfig vae_cfg;
  const ParamStore* task = nullptr;
  taskmodel::TaskModelConfig task_cfg;
  mpc::MpcConfig mpc;
  scene::PlannerConfig planner;
};

/// Image for a latent on the graph: analytic render or VAE decode, shaped [1,1,S,S].
ad::Var render(const Pipeline& pl, ad::Var nu, const nn::VarMap& vae_vars);

/// Scene whose obstacles shape the MPC constraints for `r` (obstacle-free in VAE mode).
scene::Scenario constraint_scene(const Pipeline& pl, const DataRecord& r);

struct CostEval {
  double cost = 0;
  std::vector<scene::State> waypoints;  // F + 1
  mpc::MpcSolution solution;
};

/// Predicts from `image` and solves the MPC against `scene`; throws NumericError
/// if the problem stays infeasible after fallback.
CostEval task_cost(const Pipeline& pl, const Tensor& image, std::span<const scene::State> past,
                   const scene::Scenario& scene);

struct StepEval {
  double cost = 0;   // J(nu_bar)
  double loss = 0;   // J - kappa I
  Tensor grad;       // dL/dtheta
  std::vector<float> nu_bar;
  Tensor image;
};

/// Evaluates L at `theta` for record `r`, with gradient.
StepEval adversarial_loss(const Pipeline& pl, const DataRecord& r, const Tensor& theta, double kappa);

using Objective = std::function<StepEval(const Tensor& theta)>;

struct AscentResult {
  Tensor final_theta;
  Tensor best_theta;
  std::vector<float> nu_bar;  // best candidate; the original latent when none beat it
  Tensor image;               // empty when the original was kept
  double cost_original = 0;
  double cost_best = 0;
  int steps_taken = 0;
  int best_step = 0;  // 0 = original kept
  std::vector<double> cost_trace;
};

/// K clipped gradient-ascent steps from theta0; a candidate replaces the incumbent
/// when its cost is at least the incumbent's, starting from `cost_original`.
AscentResult ascend(const Objective& f, Tensor theta0, std::span<const float> nu, double cost_original,
                    const AdversaryConfig& cfg);

/// theta0 = I + N(0, init_std^2).
Tensor initial_theta(int n, double init_std, std::mt19937_64& rng);

struct AdvRecord {
  std::size_t source = 0;
  int draw = 0;
  DataRecord record;  // perturbed image and latent, label per config
  double cost_original = 0;
  double cost_adversarial = 0;
  int steps_taken = 0;
  int best_step = 0;
};

struct RecordError {
  std::size_t source = 0;
  std::string message;
};

struct SynthResult {
  std::vector<AdvRecord> records;
  std::vector<RecordError> errors;
};

/// Checksum of every frozen input of synthesis: task model, VAE, MPC settings.
std::uint64_t frozen_checksum(const Pipeline& pl);

SynthResult synth_adversarial_dataset(std::span<const DataRecord> data, const Pipeline& pl,
                                      const AdversaryConfig& cfg, std::uint64_t seed);

}  // namespace taskaug::adversary
