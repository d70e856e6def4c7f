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
#include <iosfwd>
#include <vector>

#include "taskaug/scene.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

enum class RendererMode : std::uint8_t { Analytic = 0, Vae = 1 };

/// One training or test example: image, latent, past run-up, future label.
struct DataRecord {
  Tensor image;  // [1,1,H,W], values k/255
  std::vector<float> latent;
  std::vector<scene::State> past;    // P states
  std::vector<scene::State> future;  // F + 1 states
  scene::Scenario scenario;          // ground truth; analytic mode only
  bool adversarial = false;
  bool relabeled = false;
};

struct Dataset {
  RendererMode mode = RendererMode::Analytic;
  int width = 0, height = 0;
  int past_len = 0, horizon = 0;
  int latent_dim = 0;
  std::vector<DataRecord> records;

  /// Throws ShapeError when a record disagrees with the header fields.
  void validate() const;
};

/// Record for an analytic scene: rendered image, latent, oracle run-up and label.
/// States are rounded to float so the record survives a file round trip unchanged.
DataRecord make_analytic_record(const scene::Scenario& s, int past_len, int horizon,
                                const scene::PlannerConfig& planner = {}, const scene::RenderConfig& render = {});

/// Rounds to the nearest multiple of 1/255 in [0,1], the stored precision of images.
Tensor quantize_image(const Tensor& image);

inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace taskaug
