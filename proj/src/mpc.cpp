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

#include "taskaug/mpc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <iostream>

#include "taskaug/error.hpp"

namespace taskaug::mpc {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stacked QP  min 1/2 x'Px + q'x + c0  s.t.  l <= Ax <= u.
struct StackedQp {
  int nx = 0;  // number of variables
  int F = 0;
  SpMat P;
  VectorXd q;
  SpMat A;
  VectorXd l, u;
  std::vector<bool> is_eq;

  int xi(int t) const { return 4 * t; }
  int ui(int t) const { return 4 * (F + 1) + 2 * t; }
};

StackedQp stack(const MpcProblem& p) {
  StackedQp qp;
  const int F = p.horizon;
  qp.F = F;
  qp.nx = 4 * (F + 1) + 2 * F;
  std::vector<Triplet> pt;
  qp.q = VectorXd::Zero(qp.nx);
  for (int t = 0; t <= F; ++t) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (p.Q(i, j) != 0) pt.emplace_back(qp.xi(t) + i, qp.xi(t) + j, 2.0 * p.Q(i, j));
    qp.q.segment<4>(qp.xi(t)) = -2.0 * p.Q * p.waypoints[static_cast<std::size_t>(t)];
  }
  for (int t = 0; t < F; ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (p.R(i, j) != 0) pt.emplace_back(qp.ui(t) + i, qp.ui(t) + j, 2.0 * p.R(i, j));
  qp.P.resize(qp.nx, qp.nx);
  qp.P.setFromTriplets(pt.begin(), pt.end());

  std::vector<Triplet> at;
  std::vector<double> l, u;
  int row = 0;
  auto add_row = [&](double lo, double hi) {
    l.push_back(lo);
    u.push_back(hi);
    qp.is_eq.push_back(lo == hi);
    return row++;
  };
  for (int i = 0; i < 4; ++i) {
    const int r = add_row(p.initial_state(i), p.initial_state(i));
    at.emplace_back(r, qp.xi(0) + i, 1.0);
  }
  for (int t = 0; t < F; ++t) {
    for (int i = 0; i < 4; ++i) {
      const int r = add_row(p.drift(i), p.drift(i));
      at.emplace_back(r, qp.xi(t + 1) + i, 1.0);
      for (int j = 0; j < 4; ++j)
        if (p.A(i, j) != 0) at.emplace_back(r, qp.xi(t) + j, -p.A(i, j));
      for (int j = 0; j < 2; ++j)
        if (p.B(i, j) != 0) at.emplace_back(r, qp.ui(t) + j, -p.B(i, j));
    }
  }
  for (int t = 1; t <= F; ++t) {
    for (int i = 0; i < 4; ++i) {
      if (std::isinf(p.x_min(i)) && std::isinf(p.x_max(i))) continue;
      const int r = add_row(p.x_min(i), p.x_max(i));
      at.emplace_back(r, qp.xi(t) + i, 1.0);
    }
  }
  for (int t = 0; t < F; ++t) {
    for (int i = 0; i < 2; ++i) {
      const int r = add_row(p.u_min(i), p.u_max(i));
      at.emplace_back(r, qp.ui(t) + i, 1.0);
    }
  }
  for (std::size_t t = 0; t < p.halfspaces.size(); ++t) {
    for (const Halfspace& h : p.halfspaces[t]) {
      const int r = add_row(h.offset, kInf);
      at.emplace_back(r, qp.xi(static_cast<int>(t)) + 0, h.normal.x());
      at.emplace_back(r, qp.xi(static_cast<int>(t)) + 1, h.normal.y());
    }
  }
  qp.A.resize(row, qp.nx);
  qp.A.setFromTriplets(at.begin(), at.end());
  qp.l = Eigen::Map<VectorXd>(l.data(), row);
  qp.u = Eigen::Map<VectorXd>(u.data(), row);
  return qp;
}

void unpack(const StackedQp& qp, const VectorXd& x, MpcSolution& sol) {
  sol.states.resize(static_cast<std::size_t>(qp.F + 1));
  sol.controls.resize(static_cast<std::size_t>(qp.F));
  for (int t = 0; t <= qp.F; ++t) sol.states[static_cast<std::size_t>(t)] = x.segment<4>(qp.xi(t));
  for (int t = 0; t < qp.F; ++t) sol.controls[static_cast<std::size_t>(t)] = x.segment<2>(qp.ui(t));
}

VectorXd project(const VectorXd& v, const VectorXd& l, const VectorXd& u) {
  return v.cwiseMax(l).cwiseMin(u);
}

struct Residuals {
  double primal = kInf;
  double dual = kInf;
};

Residuals residuals(const StackedQp& qp, const VectorXd& x, const VectorXd& z, const VectorXd& y) {
  return {(qp.A * x - z).lpNorm<Eigen::Infinity>(),
          (qp.P * x + qp.q + qp.A.transpose() * y).lpNorm<Eigen::Infinity>()};
}

struct Polished {
  bool ok = false;
  VectorXd x, y;
  Residuals res;
};

// Solves the equality-constrained QP on the guessed active set and checks the
// KKT conditions of the full problem.
Polished polish(const StackedQp& qp, const VectorXd& z, const VectorXd& y, double tol) {
  const int m = static_cast<int>(qp.l.size());
  std::vector<int> active;
  std::vector<double> target;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  for (int i = 0; i < m; ++i) {
    if (qp.is_eq[static_cast<std::size_t>(i)]) {
      active.push_back(i);
      target.push_back(qp.l(i));
      side.push_back(0);
    } else if (z(i) - qp.l(i) < -y(i)) {
      active.push_back(i);
      target.push_back(qp.l(i));
      side.push_back(-1);
    } else if (qp.u(i) - z(i) < y(i)) {
      active.push_back(i);
      target.push_back(qp.u(i));
      side.push_back(1);
    }
  }
  const int na = static_cast<int>(active.size());
  const int n = qp.nx;
  const double delta = 1e-7;
  SpMat Aa(na, n);
  {
    SpMat At = qp.A.transpose();  // column i of At is row i of A
    std::vector<Triplet> tr;
    for (int k = 0; k < na; ++k)
      for (SpMat::InnerIterator it(At, active[static_cast<std::size_t>(k)]); it; ++it)
        tr.emplace_back(k, static_cast<int>(it.row()), it.value());
    Aa.setFromTriplets(tr.begin(), tr.end());
  }
  std::vector<Triplet> kt;
  for (int c = 0; c < qp.P.outerSize(); ++c)
    for (SpMat::InnerIterator it(qp.P, c); it; ++it)
      kt.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int c = 0; c < Aa.outerSize(); ++c)
    for (SpMat::InnerIterator it(Aa, c); it; ++it) {
      kt.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      kt.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
    }
  SpMat K0(n + na, n + na);
  K0.setFromTriplets(kt.begin(), kt.end());
  for (int i = 0; i < n; ++i) kt.emplace_back(i, i, delta);
  for (int i = 0; i < na; ++i) kt.emplace_back(n + i, n + i, -delta);
  SpMat Kd(n + na, n + na);
  Kd.setFromTriplets(kt.begin(), kt.end());
  Eigen::SimplicialLDLT<SpMat> ldlt(Kd);
  Polished out;
  if (ldlt.info() != Eigen::Success) return out;
  VectorXd rhs(n + na);
  rhs.head(n) = -qp.q;
  for (int k = 0; k < na; ++k) rhs(n + k) = target[static_cast<std::size_t>(k)];
  VectorXd sol = ldlt.solve(rhs);
  for (int it = 0; it < 8; ++it) {
    const VectorXd r = rhs - K0 * sol;
    if (r.lpNorm<Eigen::Infinity>() < 1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
    sol += ldlt.solve(r);
  }
  out.x = sol.head(n);
  out.y = VectorXd::Zero(m);
  double sign_violation = 0;
  for (int k = 0; k < na; ++k) {
    const double yk = sol(n + k);
    out.y(active[static_cast<std::size_t>(k)]) = yk;
    const int sd = side[static_cast<std::size_t>(k)];
    if (sd < 0) sign_violation = std::max(sign_violation, yk);
    if (sd > 0) sign_violation = std::max(sign_violation, -yk);
  }
  const VectorXd ax = qp.A * out.x;
  out.res.primal = (ax - project(ax, qp.l, qp.u)).lpNorm<Eigen::Infinity>();
  out.res.dual = std::max((qp.P * out.x + qp.q + qp.A.transpose() * out.y).lpNorm<Eigen::Infinity>(),
                          sign_violation);
  out.ok = out.res.primal <= tol && out.res.dual <= tol;
  return out;
}

bool primal_infeasible(const StackedQp& qp, const VectorXd& dy, double eps) {
  const double norm = dy.lpNorm<Eigen::Infinity>();
  if (norm < 1e-12) return false;
  if ((qp.A.transpose() * dy).lpNorm<Eigen::Infinity>() > eps * norm) return false;
  double support = 0;
  for (int i = 0; i < dy.size(); ++i) {
    if (dy(i) > 0) {
      if (std::isinf(qp.u(i))) {
        if (dy(i) > eps * norm) return false;
      } else {
        support += qp.u(i) * dy(i);
      }
    } else if (dy(i) < 0) {
      if (std::isinf(qp.l(i))) {
        if (-dy(i) > eps * norm) return false;
      } else {
        support += qp.l(i) * dy(i);
      }
    }
  }
  return support < -eps * norm;
}

}  // namespace

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Solved: return "Solved";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

void MpcProblem::validate() const {
  if (horizon < 1) throw ShapeError("mpc: horizon must be positive");
  if (static_cast<int>(waypoints.size()) != horizon + 1) {
    throw ShapeError("mpc: expected " + std::to_string(horizon + 1) + " waypoints, got " +
                     std::to_string(waypoints.size()));
  }
  if (!halfspaces.empty() && static_cast<int>(halfspaces.size()) != horizon + 1) {
    throw ShapeError("mpc: halfspace schedule must have horizon + 1 entries");
  }
  if (!Q.isApprox(Q.transpose(), 1e-12) || !R.isApprox(R.transpose(), 1e-12)) {
    throw NumericError("mpc: Q and R must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> qe(Q);
  if (qe.eigenvalues().minCoeff() < -1e-12) throw NumericError("mpc: Q is not positive semidefinite");
  if (Eigen::LLT<Eigen::Matrix2d>(R).info() != Eigen::Success) {
    throw NumericError("mpc: R is not positive definite");
  }
  if (!((u_min.array() < u_max.array()).all()) || !((x_min.array() < x_max.array()).all())) {
    throw NumericError("mpc: lower bounds must be strictly below upper bounds");
  }
  for (const auto& list : halfspaces)
    for (const Halfspace& h : list)
      if (std::abs(h.normal.norm() - 1.0) > 1e-9) throw NumericError("mpc: halfspace normal not unit");
  for (const State& w : waypoints)
    if (!w.allFinite()) throw NumericError("mpc: non-finite waypoint");
  if (!initial_state.allFinite() || !A.allFinite() || !B.allFinite() || !drift.allFinite()) {
    throw NumericError("mpc: non-finite dynamics or initial state");
  }
}

double MpcProblem::objective(std::span<const State> states, std::span<const Control> controls) const {
  double j = 0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const State d = waypoints[t] - states[t];
    j += d.dot(Q * d);
  }
  for (const Control& u : controls) j += u.dot(R * u);
  return j;
}

MpcSolution solve_qp(const MpcProblem& problem, const SolverOptions& opts) {
  problem.validate();
  const StackedQp qp = stack(problem);
  const int n = qp.nx;
  const int m = static_cast<int>(qp.l.size());

  VectorXd rho(m);
  for (int i = 0; i < m; ++i) rho(i) = qp.is_eq[static_cast<std::size_t>(i)] ? opts.rho * opts.eq_rho_scale : opts.rho;

  SpMat K = qp.P;
  {
    SpMat I(n, n);
    I.setIdentity();
    K += opts.sigma * I;
    K += SpMat(qp.A.transpose() * rho.asDiagonal() * qp.A);
  }
  Eigen::SimplicialLDLT<SpMat> ldlt(K);
  if (ldlt.info() != Eigen::Success) throw NumericError("mpc: KKT factorisation failed");

  VectorXd x = VectorXd::Zero(n);
  VectorXd z = VectorXd::Zero(m);
  VectorXd y = VectorXd::Zero(m);
  VectorXd y_prev = y;
  MpcSolution sol;
  Residuals last{};
  std::vector<int> last_polish_signature;
  const double polish_gate = 1e-2;

  auto finish = [&](const VectorXd& xs, Residuals r, SolveStatus st, int iters) {
    unpack(qp, xs, sol);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
    sol.status = st;
    sol.iterations = iters;
    sol.cost = problem.objective(sol.states, sol.controls);
    return sol;
  };

  for (int k = 1; k <= opts.max_iter; ++k) {
    y_prev = y;
    const VectorXd rhs = opts.sigma * x - qp.q + qp.A.transpose() * (rho.cwiseProduct(z) - y);
    const VectorXd xt = ldlt.solve(rhs);
    const VectorXd zt = qp.A * xt;
    x = opts.alpha * xt + (1.0 - opts.alpha) * x;
    const VectorXd zr = opts.alpha * zt + (1.0 - opts.alpha) * z;
    const VectorXd zn = project(zr + y.cwiseQuotient(rho), qp.l, qp.u);
    y += rho.cwiseProduct(zr - zn);
    z = zn;

    if (k % opts.check_every != 0 && k != opts.max_iter) continue;
    last = residuals(qp, x, z, y);
    if (last.primal <= opts.tol && last.dual <= opts.tol) return finish(x, last, SolveStatus::Solved, k);
    if (primal_infeasible(qp, y - y_prev, opts.infeasibility_tol)) {
      return finish(x, last, SolveStatus::Infeasible, k);
    }
    if (opts.polish && last.primal <= polish_gate * (1.0 + z.lpNorm<Eigen::Infinity>()) &&
        last.dual <= polish_gate * (1.0 + qp.q.lpNorm<Eigen::Infinity>())) {
      std::vector<int> sig;
      for (int i = 0; i < m; ++i) {
        if (qp.is_eq[static_cast<std::size_t>(i)]) continue;
        if (z(i) - qp.l(i) < -y(i)) sig.push_back(-i - 1);
        else if (qp.u(i) - z(i) < y(i)) sig.push_back(i + 1);
      }
      if (sig != last_polish_signature) {
        last_polish_signature = sig;
        Polished pol = polish(qp, z, y, opts.tol);
        if (pol.ok) return finish(pol.x, pol.res, SolveStatus::Solved, k);
      }
    }
  }
  return finish(x, last, SolveStatus::MaxIter, opts.max_iter);
}

HalfspaceSchedule build_obstacle_halfspaces(const scene::Scenario& s, int horizon, double margin,
                                            double activation_radius) {
  if (margin < 0) throw ShapeError("halfspaces: margin must be non-negative");
  if (horizon < 1) throw ShapeError("halfspaces: horizon must be positive");
  HalfspaceSchedule out(static_cast<std::size_t>(horizon + 1));
  for (int t = 0; t <= horizon; ++t) {
    const Vec2 r = s.start + (static_cast<double>(t) / horizon) * (s.goal - s.start);
    for (const Obstacle& ob : s.obstacles) {
      const Obstacle inf = ob.inflated(margin);
      if (inf.level(r) < 0) continue;  // reference point inside: no tangent plane
      const ClosestPoint cp = closest_boundary_point(inf, r);
      if (cp.distance > activation_radius) continue;
      Vec2 normal = r - cp.point;
      if (normal.norm() < 1e-12) {
        normal = {(cp.point.x() - inf.cx) / (inf.rx * inf.rx), (cp.point.y() - inf.cy) / (inf.ry * inf.ry)};
      }
      normal.normalize();
      out[static_cast<std::size_t>(t)].push_back({normal, normal.dot(cp.point)});
    }
  }
  return out;
}

MpcProblem build_toy_problem(const scene::Scenario& s, std::span<const State> waypoints,
                             const MpcConfig& cfg) {
  const int F = cfg.horizon;
  if (static_cast<int>(waypoints.size()) != F + 1) {
    throw ShapeError("build_toy_problem: expected " + std::to_string(F + 1) + " waypoints, got " +
                     std::to_string(waypoints.size()));
  }
  const Vec2 seg = s.goal - s.start;
  if (seg.norm() < 1e-9) throw ShapeError("build_toy_problem: start equals goal");
  if (!s.start.allFinite() || !s.goal.allFinite()) throw NumericError("build_toy_problem: non-finite scenario");
  for (const State& w : waypoints)
    if (!w.allFinite()) throw NumericError("build_toy_problem: non-finite waypoint");

  MpcProblem p;
  p.horizon = F;
  p.Q = cfg.q_diag.asDiagonal();
  p.R = cfg.r_diag.asDiagonal();
  const double dt = cfg.dt;
  if (cfg.dynamics == Dynamics::UnicycleLinearized) {
    const double th0 = std::atan2(seg.y(), seg.x());
    const double v0 = seg.norm() / (F * dt);
    const double c = std::cos(th0), sn = std::sin(th0);
    p.A.setIdentity();
    p.A(0, 2) = dt * c;
    p.A(0, 3) = -dt * v0 * sn;
    p.A(1, 2) = dt * sn;
    p.A(1, 3) = dt * v0 * c;
    p.B.setZero();
    p.B(2, 0) = dt;
    p.B(3, 1) = dt;
    p.drift = State(dt * v0 * sn * th0, -dt * v0 * c * th0, 0.0, 0.0);
    p.u_min = Control(-cfg.accel_max, -cfg.steer_rate_max);
    p.u_max = Control(cfg.accel_max, cfg.steer_rate_max);
    p.x_min = State(-kInf, -kInf, cfg.v_min, -kInf);
    p.x_max = State(kInf, kInf, cfg.v_max, kInf);
    p.waypoints.assign(waypoints.begin(), waypoints.end());
  } else {
    p.A.setIdentity();
    p.A(0, 2) = dt;
    p.A(1, 3) = dt;
    p.B.setZero();
    p.B(0, 0) = 0.5 * dt * dt;
    p.B(1, 1) = 0.5 * dt * dt;
    p.B(2, 0) = dt;
    p.B(3, 1) = dt;
    p.drift.setZero();
    p.u_min = Control::Constant(-cfg.accel_max);
    p.u_max = Control::Constant(cfg.accel_max);
    p.x_min = State(-kInf, -kInf, -cfg.v_max, -cfg.v_max);
    p.x_max = State(kInf, kInf, cfg.v_max, cfg.v_max);
    for (const State& w : waypoints)
      p.waypoints.emplace_back(w(0), w(1), w(2) * std::cos(w(3)), w(2) * std::sin(w(3)));
  }
  p.initial_state = p.waypoints.front();
  p.halfspaces = build_obstacle_halfspaces(s, F, cfg.margin, cfg.activation_radius);
  return p;
}

std::vector<State> grad_cost_wrt_waypoints(const MpcProblem& p, const MpcSolution& sol) {
  if (sol.status != SolveStatus::Solved) {
    throw NumericError(std::string("grad_cost_wrt_waypoints: solution status is ") +
                       status_name(sol.status));
  }
  std::vector<State> g(p.waypoints.size());
  for (std::size_t t = 0; t < g.size(); ++t) g[t] = 2.0 * p.Q * (p.waypoints[t] - sol.states[t]);
  return g;
}

std::vector<State> fd_grad_cost(const MpcProblem& p, double h, const SolverOptions& opts) {
  if (!(h > 0)) throw ShapeError("fd_grad_cost: h must be positive");
  std::vector<State> g(p.waypoints.size(), State::Zero());
  MpcProblem q = p;
  for (std::size_t t = 0; t < p.waypoints.size(); ++t) {
    for (int i = 0; i < 4; ++i) {
      double j[2];
      for (int s = 0; s < 2; ++s) {
        q.waypoints[t](i) = p.waypoints[t](i) + (s == 0 ? h : -h);
        const MpcSolution sol = solve_qp(q, opts);
        if (sol.status != SolveStatus::Solved) {
          throw NumericError("fd_grad_cost: perturbed solve failed (" +
                             std::string(status_name(sol.status)) + ") at waypoint " +
                             std::to_string(t) + " coordinate " + std::to_string(i));
        }
        j[s] = sol.cost;
      }
      q.waypoints[t](i) = p.waypoints[t](i);
      g[t](i) = (j[0] - j[1]) / (2.0 * h);
    }
  }
  return g;
}

std::vector<State> waypoint_gradient_to_states(std::span<const State> problem_grad,
                                               std::span<const State> waypoints, Dynamics mode) {
  std::vector<State> out(problem_grad.begin(), problem_grad.end());
  if (mode == Dynamics::UnicycleLinearized) return out;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const State& gd = problem_grad[t];
    const double v = waypoints[t](2), th = waypoints[t](3);
    out[t](2) = gd(2) * std::cos(th) + gd(3) * std::sin(th);
    out[t](3) = -gd(2) * v * std::sin(th) + gd(3) * v * std::cos(th);
  }
  return out;
}

MpcSolution solve_with_fallback(const MpcProblem& p, const MpcConfig& cfg) {
  MpcSolution sol = solve_qp(p, cfg.solver);
  if (sol.status != SolveStatus::Infeasible) return sol;
  MpcProblem relaxed = p;
  relaxed.halfspaces.clear();
  sol = solve_qp(relaxed, cfg.solver);
  sol.fallback = true;
  sol.cost += cfg.infeasible_penalty;
  return sol;
}

Violations constraint_violations(const MpcProblem& p, const MpcSolution& sol) {
  Violations v;
  for (int i = 0; i < 4; ++i) v.dynamics = std::max(v.dynamics, std::abs(sol.states[0](i) - p.initial_state(i)));
  for (int t = 0; t < p.horizon; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const State r = sol.states[ts + 1] - (p.A * sol.states[ts] + p.B * sol.controls[ts] + p.drift);
    v.dynamics = std::max(v.dynamics, r.lpNorm<Eigen::Infinity>());
  }
  for (int t = 1; t <= p.horizon; ++t) {
    const State& x = sol.states[static_cast<std::size_t>(t)];
    for (int i = 0; i < 4; ++i)
      v.bounds = std::max({v.bounds, p.x_min(i) - x(i), x(i) - p.x_max(i)});
  }
  for (const Control& u : sol.controls)
    for (int i = 0; i < 2; ++i) v.bounds = std::max({v.bounds, p.u_min(i) - u(i), u(i) - p.u_max(i)});
  for (std::size_t t = 0; t < p.halfspaces.size(); ++t)
    for (const Halfspace& h : p.halfspaces[t])
      v.halfspaces = std::max(v.halfspaces, h.offset - h.normal.dot(sol.states[t].head<2>()));
  return v;
}

}  // namespace taskaug::mpc
