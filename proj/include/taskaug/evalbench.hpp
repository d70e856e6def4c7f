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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskaug/adversary.hpp"
#include "taskaug/dataset.hpp"
#include "taskaug/taskmodel.hpp"
#include "taskaug/vae.hpp"

// Training-set schemes, task-agnostic augmentation, metrics, the paired
// Wilcoxon test and the end-to-end benchmark.

namespace taskaug::evalbench {

enum class Scheme : std::uint8_t { Original = 0, DataAdded = 1, DataAugment = 2, TaskDriven = 3 };
inline constexpr std::array<Scheme, 4> kSchemes{Scheme::Original, Scheme::DataAdded, Scheme::DataAugment,
                                                Scheme::TaskDriven};
std::string_view scheme_name(Scheme s);

/// Test splits: original test scenes, out-of-distribution scenes, adversarial test scenes.
enum class Split : std::uint8_t { Orig = 0, Ood = 1, Adv = 2 };
inline constexpr std::array<Split, 3> kSplits{Split::Orig, Split::Ood, Split::Adv};
std::string_view split_name(Split s);

// ---- augmentation ----

struct AugmentParams {
  bool contrast = false;
  double contrast_scale = 1.0;  // about the image mean
  bool brightness = false;
  double brightness_offset = 0.0;
  bool blur = false;
  int blur_kernel = 3;
};

/// Each transform on with probability 0.5; c ~ U[0.7,1.3], b ~ U[-0.15,0.15], k in {3,5}.
AugmentParams draw_augment_params(std::mt19937_64& rng);
/// Contrast, then brightness, then blur, then clamp to [0,1].
Tensor apply_augment(const Tensor& image, const AugmentParams& a);
Tensor augment_image(const Tensor& image, std::mt19937_64& rng);
/// k x k mean filter over the last two dims, edges replicated.
Tensor box_blur(const Tensor& image, int kernel);

// ---- statistics ----

struct WilcoxonResult {
  int n_eff = 0;  // nonzero differences
  double w_plus = 0, w_minus = 0;
  bool exact = false;
  double p = 1.0;  // two-sided
};

/// Paired two-sided signed-rank test on x - y. Exact for up to 20 nonzero
/// differences, normal approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

// ---- evaluation ----

inline constexpr int kCollisionUndefined = -1;

struct RecordEval {
  std::size_t id = 0;
  bool ok = false;
  double cost = 0;
  double mse = 0;
  int collision = kCollisionUndefined;  // 0/1 in analytic mode
  std::string error;
};

struct SplitEval {
  std::vector<RecordEval> records;
  int evaluated = 0;
  int failures = 0;
  double mean_cost = 0;
  double mean_mse = 0;
  int collisions = kCollisionUndefined;  // undefined in VAE mode
};

/// Predicts, solves the MPC against each record's scenario and scores it.
/// `pl.task` is replaced by `params`. MPC failures are counted and excluded.
SplitEval evaluate_model(const ParamStore& params, std::span<const DataRecord> split,
                         const adversary::Pipeline& pl);

/// Aggregates over the successful records of `records`.
void aggregate(SplitEval& e, RendererMode mode);

// ---- benchmark ----

struct BenchmarkConfig {
  RendererMode mode = RendererMode::Analytic;
  scene::SceneConfig scene;
  scene::PlannerConfig planner;
  int image_size = 100;  // analytic renders; VAE mode uses vae.image_size
  taskmodel::TaskModelConfig task;
  taskmodel::TrainTaskOptions train;
  mpc::MpcConfig mpc;
  adversary::AdversaryConfig adversary;
  vae::VaeConfig vae;
  vae::TrainVaeOptions vae_train;
  int n_train = 1000;
  int n_test = 300;
  int n_ood = 300;
  /// Size of the added, augmented and adversarial training sets.
  int n_extra = 1000;
  /// Artifacts are written here when non-empty.
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;

  /// Throws ShapeError on inconsistent settings.
  void validate() const;
};

/// Sub-stream of each generated split; the same seed and stream give the same records.
enum class DataStream : std::uint64_t { Train = 0, Test = 1, Ood = 2, Added = 3 };

/// Analytic-geometry records of one split at `render_size`; sizes below cfg.image_size are
/// rendered at cfg.image_size and area-averaged down. Blocked scenes are redrawn.
std::vector<DataRecord> generate_split(const BenchmarkConfig& cfg, DataStream stream, int count,
                                       std::uint64_t seed, int render_size);

/// Augmented copies of records[i mod n] for i < count, quantised to the stored precision.
std::vector<DataRecord> augment_records(std::span<const DataRecord> records, int count, std::uint64_t seed);

/// The shared initialisation every scheme trains from, and the training options.
ParamStore initial_task_params(const BenchmarkConfig& cfg, std::uint64_t seed, const ParamStore* vae_params);
taskmodel::TrainTaskOptions train_options(const BenchmarkConfig& cfg, std::uint64_t seed);

struct SchemeReport {
  Scheme scheme = Scheme::Original;
  std::array<SplitEval, 3> splits;
  /// "<other scheme>/<split>/<cost|mse>" -> paired Wilcoxon p against that scheme.
  std::map<std::string, double> wilcoxon_p;
  std::size_t train_records = 0;
  int best_epoch = -1;
  double best_val = 0;
};

struct AdversaryStats {
  std::size_t records = 0;
  std::size_t errors = 0;
  double mean_cost_original = 0;
  double mean_cost_adversarial = 0;
  std::size_t kept_original = 0;
};

struct BenchmarkData {
  std::vector<DataRecord> train, test, ood, added, augmented, adv_train, adv_test;
};

struct BenchmarkResult {
  std::vector<SchemeReport> reports;  // in kSchemes order
  AdversaryStats adv_train, adv_test;
  BenchmarkData data;
};

/// Generates the splits, trains all four schemes from one initialisation,
/// evaluates each on every test split. Errors name the failing stage.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed);

const SchemeReport& report_for(const BenchmarkResult& r, Scheme s);

/// CSV writers; byte-identical for identical inputs.
std::string summary_csv(const BenchmarkResult& r);
std::string report_csv(const SchemeReport& r);
std::string latents_csv(const BenchmarkData& d);
/// Human-readable table of collisions, means and p-values against Original.
std::string summary_table(const BenchmarkResult& r);

}  // namespace taskaug::evalbench
