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


#include "taskaug/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "taskaug/adversary.hpp"
#include "taskaug/error.hpp"
#include "taskaug/evalbench.hpp"
#include "taskaug/mpc.hpp"
#include "taskaug/rng.hpp"
#include "taskaug/scene.hpp"

namespace taskaug::selftest {

bool Report::pass() const { return failures() == 0; }

int Report::failures() const {
  return static_cast<int>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.pass; }));
}

namespace {

using BuildFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

Tensor uniform(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

double weighted(const BuildFn& f, const std::vector<Tensor>& in, const Tensor& w) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  for (const Tensor& t : in) vars.push_back(g.constant(t));
  const Tensor& out = f(vars).value();
  double acc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(w[i]) * out[i];
  return acc;
}

// Max |analytic - central difference| and max |central difference| of sum(w * f).
std::pair<double, double> op_gradient_error(const BuildFn& f, std::vector<Tensor> in, std::mt19937_64& rng,
                                            double h = 1e-3) {
  std::vector<Tensor> analytic;
  Tensor w;
  {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (const Tensor& t : in) vars.push_back(g.param(t));
    ad::Var out = f(vars);
    w = uniform(out.shape(), rng, 0.5, 1.5);
    ad::inject_external_gradient(g, out, w);
    for (ad::Var v : vars) analytic.push_back(g.grad(v));
  }
  double err = 0, ref = 0;
  for (std::size_t k = 0; k < in.size(); ++k)
    for (std::size_t i = 0; i < in[k].size(); ++i) {
      const float x = in[k][i];
      const float xp = x + static_cast<float>(h), xm = x - static_cast<float>(h);
      in[k][i] = xp;
      const double fp = weighted(f, in, w);
      in[k][i] = xm;
      const double fm = weighted(f, in, w);
      in[k][i] = x;
      const double fd = (fp - fm) / (static_cast<double>(xp) - xm);
      err = std::max(err, std::abs(fd - analytic[k][i]));
      ref = std::max(ref, std::abs(fd));
    }
  return {err, ref};
}

class Runner {
 public:
  Runner(Report& r, const std::function<void(const Check&)>& progress) : report_(r), progress_(progress) {}

  void add(Check c) {
    if (progress_) progress_(c);
    report_.checks.push_back(std::move(c));
  }

  // Relative check err <= rel * ref, with an absolute floor.
  void relative(const std::string& suite, const std::string& name, double err, double ref, double rel,
                double floor = 1e-6) {
    Check c;
    c.suite = suite;
    c.name = name;
    c.error = ref > 0 ? err / ref : err;
    c.tolerance = rel;
    c.pass = std::isfinite(err) && (err <= rel * ref || err <= floor);
    add(std::move(c));
  }

  template <class F>
  void guarded(const std::string& suite, const std::string& name, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      Check c;
      c.suite = suite;
      c.name = name;
      c.detail = e.what();
      add(std::move(c));
    }
  }

 private:
  Report& report_;
  const std::function<void(const Check&)>& progress_;
};

void tape_suite(Runner& run, std::mt19937_64& rng) {
  auto away = [&](Shape s) {
    Tensor t = uniform(std::move(s), rng);
    for (float& v : t.data()) v = v >= 0 ? v + 0.05f : v - 0.05f;
    return t;
  };
  struct Case {
    const char* name;
    BuildFn fn;
    std::function<std::vector<Tensor>()> inputs;
  };
  const std::vector<Case> cases = {
      {"matmul", [](auto& v) { return ad::matmul(v[0], v[1]); },
       [&] { return std::vector{uniform({3, 4}, rng), uniform({4, 2}, rng)}; }},
      {"add", [](auto& v) { return ad::add(v[0], v[1]); },
       [&] { return std::vector{uniform({3, 4}, rng), uniform({4}, rng)}; }},
      {"sub", [](auto& v) { return ad::sub(v[0], v[1]); },
       [&] { return std::vector{uniform({5}, rng), uniform({5}, rng)}; }},
      {"mul", [](auto& v) { return ad::mul(v[0], v[1]); },
       [&] { return std::vector{uniform({5}, rng), uniform({5}, rng)}; }},
      {"relu", [](auto& v) { return ad::relu(v[0]); }, [&] { return std::vector{away({6})}; }},
      {"sigmoid", [](auto& v) { return ad::sigmoid(v[0]); }, [&] { return std::vector{uniform({6}, rng, -3, 3)}; }},
      {"tanh", [](auto& v) { return ad::tanh(v[0]); }, [&] { return std::vector{uniform({6}, rng, -2, 2)}; }},
      {"exp", [](auto& v) { return ad::exp(v[0]); }, [&] { return std::vector{uniform({6}, rng)}; }},
      {"affine", [](auto& v) { return ad::affine(v[0], -2.5f, 0.3f); }, [&] { return std::vector{uniform({6}, rng)}; }},
      {"conv2d", [](auto& v) { return ad::conv2d(v[0], v[1], v[2], {.stride = 2, .pad = 1}); },
       [&] { return std::vector{uniform({2, 2, 6, 5}, rng), uniform({3, 2, 3, 3}, rng), uniform({3}, rng)}; }},
      {"conv_transpose2d", [](auto& v) { return ad::conv_transpose2d(v[0], v[1], v[2], 2, 2); },
       [&] { return std::vector{uniform({1, 2, 3, 4}, rng), uniform({2, 3, 6, 6}, rng), uniform({3}, rng)}; }},
      {"upsample2x", [](auto& v) { return ad::upsample2x(v[0]); }, [&] { return std::vector{uniform({1, 2, 3, 2}, rng)}; }},
      {"reshape", [](auto& v) { return ad::reshape(v[0], {6, 2}); }, [&] { return std::vector{uniform({3, 4}, rng)}; }},
      {"slice", [](auto& v) { return ad::slice(v[0], 1, 1, 3); }, [&] { return std::vector{uniform({3, 4, 2}, rng)}; }},
      {"sum", [](auto& v) { return ad::sum(v[0]); }, [&] { return std::vector{uniform({3, 4}, rng)}; }},
      {"mse", [](auto& v) { return ad::mse(v[0], v[1]); },
       [&] { return std::vector{uniform({7}, rng), uniform({7}, rng)}; }},
      {"l2sq", [](auto& v) { return ad::l2sq(v[0]); }, [&] { return std::vector{uniform({7}, rng)}; }},
  };
  for (const Case& c : cases) {
    run.guarded("tape", c.name, [&] {
      double worst = 0, err_at = 0, ref_at = 0;
      for (int trial = 0; trial < 5; ++trial) {
        const auto [err, ref] = op_gradient_error(c.fn, c.inputs(), rng);
        const double r = err <= 1e-6 ? 0.0 : err / std::max(ref, 1e-300);
        if (r >= worst) {
          worst = r;
          err_at = err;
          ref_at = ref;
        }
      }
      run.relative("tape", c.name, err_at, ref_at, 1e-3);
    });
  }
}

void render_suite(Runner& run, std::mt19937_64& rng) {
  int checked = 0, attempts = 0;
  while (checked < 10 && attempts++ < 200) {
    const scene::Scenario s = scene::sample_scenario(scene::Distribution::Train, rng);
    const scene::Latent nu = scene::latent_of(s);
    const Obstacle& o = s.obstacles[static_cast<std::size_t>(checked) % s.obstacles.size()];
    const double ang = 0.61 * checked;
    const int col = std::clamp(static_cast<int>(std::lround((o.cx + o.rx * std::cos(ang)) * 0.99)), 0, 99);
    const int row = std::clamp(static_cast<int>(std::lround((100.0 - o.cy - o.ry * std::sin(ang)) * 0.99)), 0, 99);
    const std::size_t px = static_cast<std::size_t>(row * 100 + col);
    const float base = scene::render_analytic(nu)[px];
    if (base < 0.05f || base > 0.95f) continue;
    run.guarded("render", "pixel " + std::to_string(checked), [&] {
      ad::Graph g;
      ad::Var v = g.param(Tensor({static_cast<int>(nu.size())}, nu));
      ad::Var img = scene::render_analytic(v);
      g.backward(ad::sum(ad::slice(ad::reshape(img, {10000}), 0, static_cast<int>(px), static_cast<int>(px) + 1)));
      const Tensor& grad = g.grad(v);
      double err = 0, ref = 0;
      for (std::size_t i = 0; i < nu.size(); ++i) {
        const double h = 1e-2;
        scene::Latent p = nu, m = nu;
        p[i] += static_cast<float>(h);
        m[i] -= static_cast<float>(h);
        const double fd = (static_cast<double>(scene::render_analytic(p)[px]) - scene::render_analytic(m)[px]) /
                          (static_cast<double>(p[i]) - m[i]);
        err = std::max(err, std::abs(fd - grad[i]));
        ref = std::max(ref, std::abs(fd));
      }
      run.relative("render", "pixel " + std::to_string(checked), err, ref, 1e-3);
    });
    ++checked;
  }
}

void adversary_suite(Runner& run, std::uint64_t seed) {
  run.guarded("adversary", "end-to-end dL/dtheta", [&] {
    taskmodel::TaskModelConfig tc;
    tc.image_size = 32;
    tc.past_len = 3;
    tc.horizon = 10;
    const ParamStore task = taskmodel::init_task_model(tc, seed + 1);
    adversary::Pipeline pl;
    pl.task = &task;
    pl.task_cfg = tc;
    pl.render.size = 32;
    pl.mpc.horizon = 10;
    pl.mpc.solver.tol = 1e-9;
    scene::SceneConfig sc;
    sc.n_obs = 2;
    std::mt19937_64 rng = stream_rng(seed, 0x5354, 1);
    DataRecord r;
    for (;;) {
      try {
        r = make_analytic_record(scene::sample_scenario(scene::Distribution::Train, rng, sc), 3, 10, {}, pl.render);
        break;
      } catch (const NumericError&) {
      }
    }
    const int n = static_cast<int>(r.latent.size());
    const Tensor theta = adversary::initial_theta(n, 0.01, rng);
    const double kappa = 30;
    const adversary::StepEval ev = adversary::adversarial_loss(pl, r, theta, kappa);
    const double h = 1e-3;
    double err = 0, ref = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      Tensor tp = theta, tm = theta;
      tp[i] += static_cast<float>(h);
      tm[i] -= static_cast<float>(h);
      const double fd = (adversary::adversarial_loss(pl, r, tp, kappa).loss -
                         adversary::adversarial_loss(pl, r, tm, kappa).loss) /
                        (static_cast<double>(tp[i]) - tm[i]);
      err = std::max(err, std::abs(fd - ev.grad[i]));
      ref = std::max(ref, std::abs(fd));
    }
    run.relative("adversary", "end-to-end dL/dtheta", err, ref, 1e-2, 0.0);
  });
}

void qp_suite(Runner& run, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  mpc::MpcConfig cfg;
  mpc::SolverOptions tight = cfg.solver;
  tight.tol = 1e-9;
  int solved = 0, attempts = 0;
  while (solved < 10 && attempts++ < 100) {
    const scene::Scenario s = scene::sample_scenario(scene::Distribution::Train, rng);
    scene::OraclePlan plan;
    try {
      plan = scene::oracle_plan(s, 5, cfg.horizon);
    } catch (const NumericError&) {
      continue;
    }
    std::vector<scene::State> w = plan.future;
    for (std::size_t t = 1; t < w.size(); ++t) {
      w[t](0) += 2 * n01(rng);
      w[t](1) += 2 * n01(rng);
      w[t](2) += 0.2 * n01(rng);
      w[t](3) += 0.04 * n01(rng);
    }
    const mpc::MpcProblem p = mpc::build_toy_problem(s, w, cfg);
    const mpc::MpcSolution sol = mpc::solve_qp(p, cfg.solver);
    if (sol.status == mpc::SolveStatus::Infeasible) continue;
    const std::string name = "problem " + std::to_string(solved);
    Check c;
    c.suite = "qp";
    c.name = name + " KKT";
    const mpc::Violations v = mpc::constraint_violations(p, sol);
    c.error = std::max({sol.primal_residual, sol.dual_residual, v.dynamics, v.bounds, v.halfspaces});
    c.tolerance = 1e-6;
    c.pass = sol.status == mpc::SolveStatus::Solved && c.error <= c.tolerance;
    c.detail = mpc::status_name(sol.status);
    run.add(c);
    run.guarded("qp", name + " envelope", [&] {
      const mpc::MpcSolution st = mpc::solve_qp(p, tight);
      if (st.status != mpc::SolveStatus::Solved) throw NumericError("tight solve failed");
      const auto env = mpc::grad_cost_wrt_waypoints(p, st);
      const auto fd = mpc::fd_grad_cost(p, 1e-4, tight);
      double err = 0, ref = 0;
      for (std::size_t t = 0; t < env.size(); ++t) {
        err = std::max(err, (env[t] - fd[t]).lpNorm<Eigen::Infinity>());
        ref = std::max(ref, fd[t].lpNorm<Eigen::Infinity>());
      }
      run.relative("qp", name + " envelope", err, ref + 1e-8, 1e-3, 0.0);
    });
    ++solved;
  }
}

void oracle_suite(Runner& run, std::mt19937_64& rng) {
  int planned = 0, collisions = 0, roundtrip = 0, endpoints = 0, attempts = 0;
  while (planned < 20 && attempts++ < 200) {
    const scene::Distribution d = attempts % 2 ? scene::Distribution::Train : scene::Distribution::OoD;
    const scene::Scenario s = scene::sample_scenario(d, rng);
    const scene::Scenario back = scene::scenario_of(scene::latent_of(s), d);
    if (!(back == s)) ++roundtrip;
    scene::OraclePlan plan;
    try {
      plan = scene::oracle_plan(s, 5, 20);
    } catch (const NumericError&) {
      continue;
    }
    collisions += scene::check_collisions(plan.future, s);
    const scene::State& last = plan.future.back();
    if (std::hypot(last[0] - s.goal.x(), last[1] - s.goal.y()) > 1e-9) ++endpoints;
    ++planned;
  }
  auto count_check = [&](const std::string& name, int bad) {
    Check c;
    c.suite = "oracle";
    c.name = name;
    c.error = bad;
    c.pass = bad == 0 && planned == 20;
    c.detail = std::to_string(planned) + " planned";
    run.add(c);
  };
  count_check("labels collision-free", collisions);
  count_check("labels end at the goal", endpoints);
  count_check("latent round trip", roundtrip);
}

void stats_suite(Runner& run, std::mt19937_64& rng) {
  run.guarded("stats", "wilcoxon", [&] {
    const std::vector<double> x{1, 2, 3, 4, 5, 6}, z(6, 0.0);
    Check c;
    c.suite = "stats";
    c.name = "wilcoxon n=6 exact";
    c.error = std::abs(evalbench::wilcoxon_signed_rank(x, z).p - 0.03125);
    c.pass = c.error == 0 && evalbench::wilcoxon_signed_rank(z, x).p == 0.03125 &&
             evalbench::wilcoxon_signed_rank(x, x).p == 1.0;
    run.add(c);
    // Exact branch against brute-force enumeration.
    std::uniform_int_distribution<int> diff(-4, 4);
    int mismatches = 0;
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> a(8), b(8, 0.0);
      for (double& v : a) v = diff(rng);
      std::vector<double> d;
      for (double v : a)
        if (v != 0) d.push_back(v);
      const int n = static_cast<int>(d.size());
      double p_enum = 1.0;
      if (n > 0) {
        std::vector<double> rank(d.size());
        for (int i = 0; i < n; ++i) {
          int below = 0, equal = 0;
          for (int j = 0; j < n; ++j) {
            below += std::abs(d[j]) < std::abs(d[i]);
            equal += std::abs(d[j]) == std::abs(d[i]);
          }
          rank[i] = below + (equal + 1) / 2.0;
        }
        double wp = 0, wm = 0;
        for (int i = 0; i < n; ++i) (d[i] > 0 ? wp : wm) += rank[i];
        long hits = 0;
        for (long m = 0; m < (1L << n); ++m) {
          double p = 0, q = 0;
          for (int i = 0; i < n; ++i) ((m >> i) & 1 ? p : q) += rank[i];
          hits += std::min(p, q) <= std::min(wp, wm);
        }
        p_enum = static_cast<double>(hits) / std::ldexp(1.0, n);
      }
      mismatches += evalbench::wilcoxon_signed_rank(a, b).p != p_enum;
    }
    Check e;
    e.suite = "stats";
    e.name = "wilcoxon exact vs enumeration";
    e.error = mismatches;
    e.pass = mismatches == 0;
    run.add(e);
  });
}

}  // namespace

Report run(std::uint64_t seed, const std::function<void(const Check&)>& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  Runner r(report, progress);
  std::mt19937_64 rng = stream_rng(seed, 0x5354);
  tape_suite(r, rng);
  render_suite(r, rng);
  adversary_suite(r, seed);
  qp_suite(r, rng);
  oracle_suite(r, rng);
  stats_suite(r, rng);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace taskaug::selftest
