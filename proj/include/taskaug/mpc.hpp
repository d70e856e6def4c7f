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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "taskaug/scene.hpp"

// Tracking MPC
//
//   min  sum_{t=0..F} (w_t - x_t)' Q (w_t - x_t) + sum_{t=0..F-1} u_t' R u_t
//   s.t. x_0 = zeta_0,  x_{t+1} = A x_t + B u_t + c,
//        u_min <= u_t <= u_max,  x_min <= x_t <= x_max  (t >= 1),
//        a' [lx, ly]_t >= b  for every halfspace of step t.
//
// The waypoints enter the objective only, so the optimal cost J*(w) has the
// exact gradient 2 Q (w_t - x*_t).

namespace taskaug::mpc {

using State = Eigen::Vector4d;
using Control = Eigen::Vector2d;

struct Halfspace {
  Vec2 normal;  // unit
  double offset = 0;
};

using HalfspaceSchedule = std::vector<std::vector<Halfspace>>;

struct MpcProblem {
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  /// Affine drift of the linearisation (zero for the double integrator).
  State drift = State::Zero();
  Eigen::Matrix4d Q = Eigen::Matrix4d::Identity();
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
  int horizon = 1;
  State initial_state = State::Zero();
  std::vector<State> waypoints;  // horizon + 1
  Control u_min = Control::Constant(-1.0), u_max = Control::Constant(1.0);
  State x_min = State::Constant(-std::numeric_limits<double>::infinity());
  State x_max = State::Constant(std::numeric_limits<double>::infinity());
  HalfspaceSchedule halfspaces;  // empty or horizon + 1 lists

  /// Throws ShapeError / NumericError when an invariant is violated.
  void validate() const;
  /// Objective evaluated at an explicit trajectory.
  double objective(std::span<const State> states, std::span<const Control> controls) const;
};

enum class SolveStatus { Solved, MaxIter, Infeasible };
const char* status_name(SolveStatus s);

struct MpcSolution {
  std::vector<State> states;
  std::vector<Control> controls;
  double cost = 0;
  double primal_residual = 0;
  double dual_residual = 0;
  int iterations = 0;
  SolveStatus status = SolveStatus::MaxIter;
  /// Set when the constrained problem was infeasible and the relaxed one was solved.
  bool fallback = false;
};

struct SolverOptions {
  double rho = 1.0;
  double alpha = 1.6;
  double sigma = 1e-6;
  double tol = 1e-6;
  int max_iter = 20000;
  /// Rows with l == u use rho * eq_rho_scale.
  double eq_rho_scale = 1e3;
  int check_every = 10;
  bool polish = true;
  double infeasibility_tol = 1e-5;
};

/// ADMM (operator splitting) on the stacked variables [x_0..x_F, u_0..u_{F-1}],
/// followed by active-set polishing.
MpcSolution solve_qp(const MpcProblem& problem, const SolverOptions& opts = {});

enum class Dynamics { UnicycleLinearized, DoubleIntegrator };

struct MpcConfig {
  Dynamics dynamics = Dynamics::UnicycleLinearized;
  int horizon = 20;
  double dt = 1.0;
  Eigen::Vector4d q_diag{1.0, 1.0, 0.1, 0.1};
  Eigen::Vector2d r_diag{0.1, 0.1};
  double accel_max = 2.0;
  double steer_rate_max = 0.5;
  double v_min = 0.0, v_max = 15.0;
  double activation_radius = 25.0;
  double margin = 2.0;
  double infeasible_penalty = 1e4;
  SolverOptions solver;
};

/// Halfspaces tangent to the margin-inflated obstacles at the boundary points
/// nearest the reference points start + (t/F)(goal - start), t = 0..F.
HalfspaceSchedule build_obstacle_halfspaces(const scene::Scenario& s, int horizon, double margin,
                                            double activation_radius);

/// Builds the toy tracking problem; waypoints[0] is the initial state.
/// Double-integrator mode maps waypoints {lx, ly, v, theta} to {x, y, vx, vy}.
MpcProblem build_toy_problem(const scene::Scenario& s, std::span<const State> waypoints,
                             const MpcConfig& cfg);

/// Envelope gradient dJ*/dw_t = 2 Q (w_t - x*_t); requires a Solved solution.
std::vector<State> grad_cost_wrt_waypoints(const MpcProblem& p, const MpcSolution& sol);

/// Central differences of J* over every waypoint coordinate.
std::vector<State> fd_grad_cost(const MpcProblem& p, double h, const SolverOptions& opts = {});

/// Chain rule from problem-space waypoint gradients back to {lx, ly, v, theta}.
std::vector<State> waypoint_gradient_to_states(std::span<const State> problem_grad,
                                               std::span<const State> waypoints, Dynamics mode);

/// Solves; if infeasible, re-solves without halfspaces and adds the penalty.
MpcSolution solve_with_fallback(const MpcProblem& p, const MpcConfig& cfg);

/// Worst violation of dynamics equalities, bounds and halfspaces.
struct Violations {
  double dynamics = 0;
  double bounds = 0;
  double halfspaces = 0;
};
Violations constraint_violations(const MpcProblem& p, const MpcSolution& sol);

}  // namespace taskaug::mpc
