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

#include "taskaug/adversary.hpp"

#include <cmath>
#include <cstring>

#include "taskaug/error.hpp"
#include "taskaug/rng.hpp"

namespace taskaug::adversary {

namespace {

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h_ = (h_ ^ b[i]) * 0x100000001B3ull;
  }
  template <class T>
  void add(const T& v) {
    bytes(&v, sizeof(T));
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

const ParamStore& task_params(const Pipeline& pl) {
  if (!pl.task) throw DataError("adversary: pipeline has no task model");
  return *pl.task;
}

Tensor past_tensor(std::span<const scene::State> past) {
  Tensor t({1, static_cast<int>(past.size()) * 4});
  for (std::size_t i = 0; i < past.size(); ++i)
    for (int k = 0; k < 4; ++k) t[i * 4 + static_cast<std::size_t>(k)] = static_cast<float>(past[i][k]);
  return t;
}

}  // namespace

ad::Var perturb(ad::Var nu, ad::Var theta) {
  const Shape& ns = nu.shape();
  const Shape& ts = theta.shape();
  if (ns.size() != 1 || ts.size() != 2 || ts[0] != ts[1] || ts[1] != ns[0]) {
    throw ShapeError("perturb: theta " + shape_str(ts) + " does not act on latent " + shape_str(ns));
  }
  const int n = ns[0];
  return ad::reshape(ad::matmul(theta, ad::reshape(nu, {n, 1})), {n});
}

ad::Var consistency_loss(ad::Var nu, ad::Var nu_bar) {
  if (nu.shape() != nu_bar.shape()) {
    throw ShapeError("consistency_loss: " + shape_str(nu.shape()) + " vs " + shape_str(nu_bar.shape()));
  }
  return ad::l2sq(ad::sub(nu, nu_bar));
}

ad::Var render(const Pipeline& pl, ad::Var nu, const nn::VarMap& vae_vars) {
  if (pl.mode == RendererMode::Analytic) return scene::render_analytic(nu, pl.render);
  const int n = nu.shape().at(0);
  return vae::decode(vae_vars, ad::reshape(nu, {1, n}), pl.vae_cfg);
}

scene::Scenario constraint_scene(const Pipeline& pl, const DataRecord& r) {
  scene::Scenario s = r.scenario;
  if (pl.mode == RendererMode::Vae) s.obstacles.clear();
  return s;
}

CostEval task_cost(const Pipeline& pl, const Tensor& image, std::span<const scene::State> past,
                   const scene::Scenario& scene) {
  CostEval out;
  out.waypoints = taskmodel::predict_waypoints(task_params(pl), image, past, pl.task_cfg);
  const mpc::MpcProblem prob = mpc::build_toy_problem(scene, out.waypoints, pl.mpc);
  out.solution = mpc::solve_with_fallback(prob, pl.mpc);
  if (out.solution.status != mpc::SolveStatus::Solved) {
    throw NumericError(std::string("MPC ") + mpc::status_name(out.solution.status));
  }
  out.cost = out.solution.cost;
  return out;
}

StepEval adversarial_loss(const Pipeline& pl, const DataRecord& r, const Tensor& theta, double kappa) {
  const ParamStore& task = task_params(pl);
  if (pl.mode == RendererMode::Vae && !pl.vae) throw DataError("adversary: VAE mode needs decoder parameters");
  const int n = static_cast<int>(r.latent.size());
  const int F = pl.task_cfg.horizon;

  ad::Graph g;
  ad::Var th = g.param(theta);
  ad::Var nu = g.constant(Tensor({n}, r.latent));
  ad::Var nu_bar = perturb(nu, th);
  ad::Var cons = consistency_loss(nu, nu_bar);
  const nn::VarMap vae_vars = pl.vae ? pl.vae->bind(g, false) : nn::VarMap{};
  ad::Var image = render(pl, nu_bar, vae_vars);
  const nn::VarMap task_vars = task.bind(g, false);
  ad::Var pred = taskmodel::forward(task_vars, image, past_tensor(r.past), pl.task_cfg);

  std::vector<scene::State> w{taskmodel::current_state(r.past, pl.task_cfg.dt)};
  const Tensor& pv = pred.value();
  for (int t = 0; t < F; ++t) {
    scene::State s;
    for (int k = 0; k < 4; ++k) s[k] = pv[static_cast<std::size_t>(t * 4 + k)];
    w.push_back(s);
  }
  const mpc::MpcProblem prob = mpc::build_toy_problem(constraint_scene(pl, r), w, pl.mpc);
  const mpc::MpcSolution sol = mpc::solve_with_fallback(prob, pl.mpc);
  if (sol.status != mpc::SolveStatus::Solved) {
    throw NumericError(std::string("MPC ") + mpc::status_name(sol.status));
  }
  const std::vector<scene::State> gw = mpc::waypoint_gradient_to_states(
      mpc::grad_cost_wrt_waypoints(prob, sol), w, pl.mpc.dynamics);

  Tensor gpred({1, F * 4});
  for (int t = 0; t < F; ++t)
    for (int k = 0; k < 4; ++k)
      gpred[static_cast<std::size_t>(t * 4 + k)] = static_cast<float>(gw[static_cast<std::size_t>(t + 1)][k]);
  const ad::Cotangent seeds[2] = {{pred, std::move(gpred)},
                                  {cons, Tensor::scalar(static_cast<float>(-kappa))}};
  g.backward(std::span<const ad::Cotangent>(seeds, 2));

  StepEval out;
  out.cost = sol.cost;
  out.loss = sol.cost - kappa * cons.value().item();
  out.grad = g.grad(th);
  const Tensor& nb = nu_bar.value();
  out.nu_bar.assign(nb.data().begin(), nb.data().end());
  out.image = image.value();
  return out;
}

Tensor initial_theta(int n, double init_std, std::mt19937_64& rng) {
  Tensor t({n, n});
  std::normal_distribution<double> noise(0.0, init_std);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(i * n + j)] = static_cast<float>((i == j ? 1.0 : 0.0) + noise(rng));
  return t;
}

AscentResult ascend(const Objective& f, Tensor theta0, std::span<const float> nu, double cost_original,
                    const AdversaryConfig& cfg) {
  if (cfg.steps < 1) throw ShapeError("adversary: K must be at least 1");
  AscentResult res;
  res.cost_original = cost_original;
  res.cost_best = cost_original;
  res.nu_bar.assign(nu.begin(), nu.end());
  const int n = static_cast<int>(nu.size());
  res.best_theta = Tensor({n, n});
  for (int i = 0; i < n; ++i) res.best_theta[static_cast<std::size_t>(i * n + i)] = 1.0f;

  Tensor theta = std::move(theta0);
  StepEval ev = f(theta);
  for (int k = 1; k <= cfg.steps; ++k) {
    if (!ev.grad.all_finite()) throw NumericError("adversary: non-finite gradient at step " + std::to_string(k));
    double norm = 0;
    for (float v : ev.grad.data()) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    const double scale = cfg.step_size * (norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += static_cast<float>(scale * ev.grad[i]);
    ev = f(theta);
    res.cost_trace.push_back(ev.cost);
    res.steps_taken = k;
    if (ev.cost >= res.cost_best) {
      res.cost_best = ev.cost;
      res.best_step = k;
      res.best_theta = theta;
      res.nu_bar = ev.nu_bar;
      res.image = ev.image;
    }
  }
  res.final_theta = std::move(theta);
  return res;
}

std::uint64_t frozen_checksum(const Pipeline& pl) {
  Fnv h;
  h.add(task_params(pl).checksum());
  if (pl.vae) h.add(vae::decoder_checksum(*pl.vae));
  const mpc::MpcConfig& m = pl.mpc;
  h.add(static_cast<int>(m.dynamics));
  h.add(m.horizon);
  for (double v : {m.dt, m.q_diag[0], m.q_diag[1], m.q_diag[2], m.q_diag[3], m.r_diag[0], m.r_diag[1], m.accel_max,
                   m.steer_rate_max, m.v_min, m.v_max, m.activation_radius, m.margin, m.infeasible_penalty,
                   m.solver.rho, m.solver.alpha, m.solver.sigma, m.solver.tol, m.solver.eq_rho_scale,
                   m.solver.infeasibility_tol})
    h.add(v);
  h.add(m.solver.max_iter);
  h.add(m.solver.check_every);
  h.add(m.solver.polish);
  return h.value();
}

SynthResult synth_adversarial_dataset(std::span<const DataRecord> data, const Pipeline& pl,
                                      const AdversaryConfig& cfg, std::uint64_t seed) {
  if (cfg.steps < 1) throw ShapeError("adversary: K must be at least 1");
  if (cfg.kappa < 0) throw ShapeError("adversary: kappa must be non-negative");
  if (cfg.per_record < 1) throw ShapeError("adversary: per_record must be at least 1");
  const std::uint64_t frozen = frozen_checksum(pl);

  SynthResult out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const DataRecord& r = data[i];
    for (int j = 0; j < cfg.per_record; ++j) {
      try {
        std::mt19937_64 rng = stream_rng(seed, 0x4144'5600 + static_cast<std::uint64_t>(j), i);
        const int n = static_cast<int>(r.latent.size());
        Tensor eye({n, n});
        for (int k = 0; k < n; ++k) eye[static_cast<std::size_t>(k * n + k)] = 1.0f;
        const double j0 = adversarial_loss(pl, r, eye, cfg.kappa).cost;
        const Objective f = [&](const Tensor& theta) { return adversarial_loss(pl, r, theta, cfg.kappa); };
        const AscentResult a = ascend(f, initial_theta(n, cfg.init_std, rng), r.latent, j0, cfg);

        AdvRecord adv;
        adv.source = i;
        adv.draw = j;
        adv.cost_original = a.cost_original;
        adv.cost_adversarial = a.cost_best;
        adv.steps_taken = a.steps_taken;
        adv.best_step = a.best_step;
        DataRecord& d = adv.record;
        d.image = a.best_step > 0 ? quantize_image(a.image) : r.image;
        d.latent = a.nu_bar;
        d.past = r.past;
        d.future = r.future;
        d.scenario = r.scenario;
        if (pl.mode == RendererMode::Analytic) d.scenario.obstacles = scene::scenario_of(a.nu_bar).obstacles;
        d.adversarial = true;
        if (cfg.relabel_oracle && pl.mode == RendererMode::Analytic) {
          try {
            const scene::OraclePlan plan =
                scene::oracle_plan(d.scenario, pl.task_cfg.past_len, pl.task_cfg.horizon, pl.planner);
            d.future.clear();
            for (scene::State s : plan.future) {
              for (int k = 0; k < 4; ++k) s[k] = static_cast<float>(s[k]);
              d.future.push_back(s);
            }
            d.relabeled = true;
          } catch (const NumericError&) {
            // Blocked perturbed scene: keep the original label.
          }
        }
        out.records.push_back(std::move(adv));
      } catch (const std::exception& e) {
        out.errors.push_back({i, "record " + std::to_string(i) + ": " + e.what()});
      }
    }
  }
  if (frozen_checksum(pl) != frozen) throw NumericError("adversary: frozen parameters changed during synthesis");
  const double attempts = static_cast<double>(data.size()) * cfg.per_record;
  if (!out.errors.empty() && static_cast<double>(out.errors.size()) > cfg.max_error_fraction * attempts) {
    throw NumericError("adversary: " + std::to_string(out.errors.size()) + " of " +
                       std::to_string(static_cast<long long>(attempts)) + " records failed; first: " +
                       out.errors.front().message);
  }
  return out;
}

}  // namespace taskaug::adversary
