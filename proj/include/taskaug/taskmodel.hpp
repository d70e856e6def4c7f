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
#include <span>
#include <vector>

#include "taskaug/dataset.hpp"
#include "taskaug/nn.hpp"
#include "taskaug/params.hpp"
#include "taskaug/vae.hpp"

// Perception + planning network mapping (image, past states) to future waypoints.
//
//   perception  image -> z (embed_dim)
//                 Compact:    conv5x5/s5 -> conv3x3/s2 -> FC
//                 VaeEncoder: the VAE encoder's mu head ("enc.*")
//   planner     [z, w_P] -> 80 -> 60 -> 40 -> F*4, ReLU between
//
// The head predicts scaled offsets of w_1..w_F from the constant-velocity
// extrapolation of the last past state; w_0 is that state's successor.

namespace taskaug::taskmodel {

using State = scene::State;

enum class Perception { Compact, VaeEncoder };

struct TaskModelConfig {
  Perception perception = Perception::Compact;
  int image_size = 100;
  int embed_dim = 20;
  int past_len = 5;
  int horizon = 20;
  double dt = 1.0;
  int hidden[3] = {80, 60, 40};
  int compact_channels = 8;
  vae::VaeConfig vae;
};

ParamStore init_task_model(const TaskModelConfig& cfg, std::uint64_t seed);
/// VaeEncoder perception starts from the "enc.*" tensors of `vae_params`.
ParamStore init_task_model(const TaskModelConfig& cfg, std::uint64_t seed, const ParamStore& vae_params);
void check_params(const ParamStore& params, const TaskModelConfig& cfg);

/// Constant-velocity successor of the last past state.
State current_state(std::span<const State> past, double dt);

/// images [B,1,S,S] -> [B, embed_dim].
ad::Var embed(const nn::VarMap& p, ad::Var images, const TaskModelConfig& cfg);

/// Absolute states w_1..w_F as [B, F*4]; `past` is [B, P*4] of raw states.
ad::Var forward(const nn::VarMap& p, ad::Var images, const Tensor& past, const TaskModelConfig& cfg);

/// Full prediction w_0..w_F for one example.
std::vector<State> predict_waypoints(const ParamStore& params, const Tensor& image,
                                     std::span<const State> past, const TaskModelConfig& cfg);

/// Mean over all entries of the squared difference.
double waypoint_mse(std::span<const State> pred, std::span<const State> label);

/// Training objective over a batch of records: mean squared waypoint error over
/// all (F+1)*4 entries, w_0 included.
ad::Var batch_loss(const nn::VarMap& p, ad::Graph& g, std::span<const DataRecord* const> batch,
                   const TaskModelConfig& cfg);

struct TrainTaskOptions {
  int max_epochs = 2000;
  double lr = 1e-3;
  int batch_size = 32;
  int patience = 50;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainTaskResult {
  ParamStore params;  // best validation epoch
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val = 0;
  /// Indices of the held-out records; empty when the whole set was used.
  std::vector<std::size_t> val_indices;
};

/// Adam with early stopping on a held-out split. With fewer than ten records the
/// whole set is used for both fitting and stopping.
TrainTaskResult train(std::span<const DataRecord> data, const TaskModelConfig& cfg,
                      const TrainTaskOptions& opts, ParamStore init);

/// Mean of the training objective over `data` without updating anything.
double dataset_loss(const ParamStore& params, std::span<const DataRecord> data, const TaskModelConfig& cfg);

}  // namespace taskaug::taskmodel
