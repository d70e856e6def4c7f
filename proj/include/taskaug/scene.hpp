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

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "taskaug/autodiff.hpp"
#include "taskaug/geometry.hpp"

namespace taskaug::scene {

/// Robot state {lx m, ly m, v m/s, theta rad}.
using State = Eigen::Vector4d;

enum class Distribution : std::uint8_t { Train = 0, OoD = 1 };

struct Scenario {
  Vec2 start{0.0, 0.0};
  Vec2 goal{100.0, 100.0};
  std::vector<Obstacle> obstacles;
  Distribution distribution = Distribution::Train;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct SceneConfig {
  int n_obs = 4;
  Vec2 goal{100.0, 100.0};
  double center_lo = 15.0, center_hi = 85.0;
  double train_axis_lo = 5.0, train_axis_hi = 12.0;
  double ood_axis_lo = 10.0, ood_axis_hi = 18.0;
  /// OoD centres lie within this perpendicular distance of the start-goal segment.
  double ood_lateral = 15.0;
  double clearance = 3.0;
  int max_rejections = 1000;
};

/// Draws one scenario. All coordinates are float-representable so the
/// analytic latent round trip is exact.
Scenario sample_scenario(Distribution dist, std::mt19937_64& rng, const SceneConfig& cfg = {});

/// Analytic latent layout: [goal_x, goal_y, (cx, cy, rx, ry) x n_obs].
using Latent = std::vector<float>;

inline constexpr float kMinRadius = 0.5f;

Latent latent_of(const Scenario& s);
/// Inverse of latent_of; radii are clamped at kMinRadius.
Scenario scenario_of(std::span<const float> nu, Distribution dist = Distribution::Train);
/// Number of obstacles encoded by an analytic latent; throws for other layouts.
int analytic_obstacle_count(std::size_t latent_len);

struct RenderConfig {
  int size = 100;
  double world = 100.0;
  double sharpness = 8.0;
  double goal_intensity = 0.5;
  double goal_sigma = 2.0;
};

/// World coordinate of a pixel centre. Column 0 is x = 0; row 0 is y = world.
Vec2 pixel_to_world(int row, int col, const RenderConfig& cfg);

/// Differentiable soft-ellipse renderer; output [1,1,size,size] in [0,1].
ad::Var render_analytic(ad::Var nu, const RenderConfig& cfg = {});
/// Convenience: renders without keeping a tape.
Tensor render_analytic(std::span<const float> nu, const RenderConfig& cfg = {});

struct PlannerConfig {
  int lateral_samples = 21;
  double lateral_extent = 30.0;
  double obstacle_penalty = 1e6;
  double inflation = 2.0;
  /// Collision sampling step along lattice edges.
  double edge_step = 0.5;
  double dt = 1.0;
};

struct OraclePlan {
  std::vector<State> past;    // P states, oldest first
  std::vector<State> future;  // F + 1 states, future[0] is the current state
  std::vector<double> offsets;  // lateral offset per station 1..F
  double cost = 0;
};

/// Lattice dynamic program over lateral offsets from the start-goal segment.
/// Throws NumericError when every lattice path collides.
OraclePlan oracle_plan(const Scenario& s, int past_len, int horizon, const PlannerConfig& cfg = {});

/// The lattice objective evaluated on an explicit offset sequence (stations 1..F).
double lattice_cost(const Scenario& s, std::span<const double> offsets, const PlannerConfig& cfg = {});

/// 1 if the piecewise-linear position trace touches any obstacle, else 0.
int check_collisions(std::span<const State> trajectory, const Scenario& s, double step = 0.5);
/// Number of trajectory samples (states) that lie inside some obstacle.
int colliding_steps(std::span<const State> trajectory, const Scenario& s);

/// Binary PGM (P5, maxval 255) of a [.., size, size] image in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& image);

}  // namespace taskaug::scene
