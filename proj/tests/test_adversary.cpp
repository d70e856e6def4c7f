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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "taskaug/adversary.hpp"
#include "taskaug/error.hpp"
#include "taskaug/rng.hpp"

using namespace taskaug;
using adversary::AdversaryConfig;
using adversary::Pipeline;

namespace {

// Small pipeline: 2 obstacles, 32 px, P = 3, F = 10.
struct Mini {
  taskmodel::TaskModelConfig task_cfg;
  ParamStore task;
  Pipeline pl;
  std::vector<DataRecord> data;

  Mini(int n_records, std::uint64_t seed, int n_obs = 2) {
    task_cfg.image_size = 32;
    task_cfg.past_len = 3;
    task_cfg.horizon = 10;
    task = taskmodel::init_task_model(task_cfg, seed);
    pl.task = &task;
    pl.task_cfg = task_cfg;
    pl.render.size = 32;
    pl.mpc.horizon = 10;
    scene::SceneConfig sc;
    sc.n_obs = n_obs;
    std::mt19937_64 rng = stream_rng(seed, 11);
    while (static_cast<int>(data.size()) < n_records) {
      const scene::Scenario s = scene::sample_scenario(scene::Distribution::Train, rng, sc);
      try {
        data.push_back(make_analytic_record(s, task_cfg.past_len, task_cfg.horizon, {}, pl.render));
      } catch (const NumericError&) {
      }
    }
  }
};

Tensor identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i * n + i)] = 1.0f;
  return t;
}

double mean_distance(const adversary::SynthResult& res, const std::vector<DataRecord>& data) {
  double acc = 0;
  for (const adversary::AdvRecord& a : res.records) {
    const std::vector<float>& nu = data[a.source].latent;
    double d = 0;
    for (std::size_t k = 0; k < nu.size(); ++k) d += std::pow(static_cast<double>(nu[k]) - a.record.latent[k], 2);
    acc += std::sqrt(d);
  }
  return acc / static_cast<double>(res.records.size());
}

}  // namespace

TEST_CASE("perturb is a matrix-vector product") {
  ad::Graph g;
  ad::Var nu = g.constant(Tensor({3}, {0.3f, -7.25f, 41.5f}));
  const Tensor out = adversary::perturb(nu, g.constant(identity(3))).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == nu.value()[i]);

  Tensor two = identity(2);
  two[0] = two[3] = 2.0f;
  const Tensor scaled = adversary::perturb(g.constant(Tensor({2}, {1.0f, 2.0f})), g.constant(two)).value();
  CHECK(scaled[0] == 2.0f);
  CHECK(scaled[1] == 4.0f);

  CHECK_THROWS_AS(adversary::perturb(g.constant(Tensor({3})), g.constant(identity(2))), ShapeError);
  CHECK_THROWS_AS(adversary::perturb(g.constant(Tensor({2})), g.constant(Tensor({2, 3}))), ShapeError);
}

TEST_CASE("perturb gradient matches finite differences") {
  std::mt19937_64 rng(21);
  const Tensor nu = testing::random_tensor({4}, rng, -2, 2);
  const Tensor theta = testing::random_tensor({4, 4}, rng);
  const auto res = testing::check_gradients(
      [](ad::Graph&, const std::vector<ad::Var>& v) { return adversary::perturb(v[0], v[1]); }, {nu, theta}, rng);
  CHECK(res.ok());
  // d nu_bar_i / d theta_jk = delta_ij nu_k, so with output weights w the gradient is w_j nu_k.
  ad::Graph g;
  ad::Var th = g.param(theta);
  ad::Var out = adversary::perturb(g.constant(nu), th);
  const Tensor w({4}, {1.0f, -2.0f, 0.5f, 3.0f});
  ad::inject_external_gradient(g, out, w);
  const Tensor gt = g.grad(th);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) CHECK(gt[static_cast<std::size_t>(j * 4 + k)] == doctest::Approx(w[j] * nu[k]));
}

TEST_CASE("consistency loss") {
  ad::Graph g;
  ad::Var a = g.constant(Tensor({2}, {1.5f, -2.0f}));
  CHECK(adversary::consistency_loss(a, a).value().item() == 0.0f);
  ad::Var zero = g.constant(Tensor({2}));
  ad::Var nb = g.param(Tensor({2}, {3.0f, 4.0f}));
  ad::Var loss = adversary::consistency_loss(zero, nb);
  CHECK(loss.value().item() == 25.0f);
  g.backward(loss);
  const Tensor gr = g.grad(nb);
  CHECK(gr[0] == doctest::Approx(6.0));  // -2 (nu - nu_bar)
  CHECK(gr[1] == doctest::Approx(8.0));
  CHECK_THROWS_AS(adversary::consistency_loss(zero, g.constant(Tensor({3}))), ShapeError);

  std::mt19937_64 rng(22);
  const auto res = testing::check_gradients(
      [](ad::Graph&, const std::vector<ad::Var>& v) { return adversary::consistency_loss(v[0], v[1]); },
      {testing::random_tensor({5}, rng), testing::random_tensor({5}, rng)}, rng);
  CHECK(res.ok());
}

TEST_CASE("identity adversary loss equals the task cost of the original scene") {
  Mini m(3, 30);
  for (const DataRecord& r : m.data) {
    const adversary::StepEval ev = adversary::adversarial_loss(m.pl, r, identity(static_cast<int>(r.latent.size())), 30);
    CHECK(ev.loss == ev.cost);
    const Tensor img = scene::render_analytic(r.latent, m.pl.render);
    const adversary::CostEval ref = adversary::task_cost(m.pl, img, r.past, r.scenario);
    CHECK(ev.cost == doctest::Approx(ref.cost).epsilon(1e-6));
    CHECK(ev.nu_bar == r.latent);
    CHECK(ev.grad.all_finite());
  }
}

TEST_CASE("end-to-end adversary gradient matches finite differences") {
  Mini m(1, 31);
  m.pl.mpc.solver.tol = 1e-9;
  const DataRecord& r = m.data[0];
  const int n = static_cast<int>(r.latent.size());
  REQUIRE(n == 10);
  std::mt19937_64 rng(32);
  const Tensor theta = adversary::initial_theta(n, 0.01, rng);
  const double kappa = 30;
  const adversary::StepEval ev = adversary::adversarial_loss(m.pl, r, theta, kappa);

  const double h = 1e-3;
  double err = 0, ref = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    Tensor tp = theta, tm = theta;
    tp[i] += static_cast<float>(h);
    tm[i] -= static_cast<float>(h);
    const double lp = adversary::adversarial_loss(m.pl, r, tp, kappa).loss;
    const double lm = adversary::adversarial_loss(m.pl, r, tm, kappa).loss;
    const double fd = (lp - lm) / (static_cast<double>(tp[i]) - tm[i]);
    err = std::max(err, std::abs(fd - ev.grad[i]));
    ref = std::max(ref, std::abs(fd));
  }
  MESSAGE("max err " << err << " max |fd| " << ref);
  CHECK(ref > 0);
  CHECK(err <= 1e-2 * ref);
}

TEST_CASE("scalar toy: one ascent step on theta^2 nu^2") {
  const double nu = 1.0;
  const adversary::Objective f = [&](const Tensor& th) {
    const double t = th[0];
    adversary::StepEval ev;
    ev.cost = t * t * nu * nu;
    ev.loss = ev.cost;
    ev.grad = Tensor({1, 1}, {static_cast<float>(2 * t * nu * nu)});
    ev.nu_bar = {static_cast<float>(t * nu)};
    ev.image = Tensor({1});
    return ev;
  };
  AdversaryConfig cfg;
  cfg.kappa = 0;
  cfg.steps = 1;
  cfg.step_size = 0.05;
  const std::vector<float> nv{1.0f};
  const adversary::AscentResult a = adversary::ascend(f, Tensor({1, 1}, {1.0f}), nv, 1.0, cfg);
  CHECK(a.final_theta[0] == doctest::Approx(1.1));
  CHECK(a.steps_taken == 1);
  CHECK(a.best_step == 1);
  CHECK(a.cost_best == doctest::Approx(1.21));
  CHECK(a.nu_bar[0] == doctest::Approx(1.1));

  // Gradient 2*theta*nu^2 = 200 at nu = 10 exceeds the clip norm 10.
  const adversary::Objective g = [&](const Tensor& th) {
    adversary::StepEval ev = f(th);
    ev.grad[0] = static_cast<float>(2 * th[0] * 100.0);
    return ev;
  };
  const adversary::AscentResult b = adversary::ascend(g, Tensor({1, 1}, {1.0f}), nv, 1.0, cfg);
  CHECK(b.final_theta[0] == doctest::Approx(1.0 + 0.05 * 10));

  // Costs below the incumbent never replace it.
  const adversary::AscentResult c = adversary::ascend(f, Tensor({1, 1}, {1.0f}), nv, 5.0, cfg);
  CHECK(c.best_step == 0);
  CHECK(c.cost_best == 5.0);
  CHECK(c.nu_bar == nv);
  CHECK(c.image.size() == 0);

  cfg.steps = 0;
  CHECK_THROWS_AS(adversary::ascend(f, Tensor({1, 1}, {1.0f}), nv, 1.0, cfg), ShapeError);
}

TEST_CASE("single ascent step keeps the adversarial cost at least the original") {
  Mini m(5, 33);
  AdversaryConfig cfg;
  cfg.steps = 1;
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 7);
  REQUIRE(res.records.size() == m.data.size());
  for (const adversary::AdvRecord& a : res.records) {
    CHECK(a.cost_adversarial >= a.cost_original);
    CHECK(a.steps_taken == 1);
    CHECK((a.best_step == 0 || a.best_step == 1));
  }
}

TEST_CASE("synthesis contract: costs, labels, geometry and frozen weights") {
  Mini m(12, 34);
  const std::uint64_t task_sum = m.task.checksum();
  const std::uint64_t frozen = adversary::frozen_checksum(m.pl);
  AdversaryConfig cfg;
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 8);
  CHECK(res.errors.empty());
  REQUIRE(res.records.size() == m.data.size());
  CHECK(m.task.checksum() == task_sum);
  CHECK(adversary::frozen_checksum(m.pl) == frozen);
  double jo = 0, ja = 0;
  int moved = 0;
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const adversary::AdvRecord& a = res.records[i];
    const DataRecord& src = m.data[i];
    CHECK(a.source == i);
    CHECK(a.cost_adversarial >= a.cost_original);
    CHECK(a.steps_taken == cfg.steps);
    CHECK(a.record.adversarial);
    CHECK_FALSE(a.record.relabeled);
    CHECK(a.record.past == src.past);
    CHECK(a.record.future == src.future);
    CHECK(a.record.scenario.start == src.scenario.start);
    CHECK(a.record.scenario.goal == src.scenario.goal);
    CHECK(a.record.scenario.obstacles == scene::scenario_of(a.record.latent).obstacles);
    CHECK(a.record.image.shape() == src.image.shape());
    for (float v : a.record.image.data()) CHECK(std::round(v * 255.0f) == doctest::Approx(v * 255.0f).epsilon(1e-5));
    if (a.best_step == 0) {
      CHECK(a.record.latent == src.latent);
      CHECK(a.cost_adversarial == a.cost_original);
    } else {
      ++moved;
    }
    jo += a.cost_original;
    ja += a.cost_adversarial;
  }
  MESSAGE("J ratio " << ja / jo << ", moved " << moved);
  CHECK(ja >= jo);
}

TEST_CASE("larger kappa keeps perturbations closer on average") {
  Mini m(100, 35);
  AdversaryConfig cfg;
  std::vector<double> dist;
  for (double kappa : {0.0, 30.0, 300.0}) {
    cfg.kappa = kappa;
    dist.push_back(mean_distance(adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 9), m.data));
  }
  MESSAGE("mean |nu - nu_bar|: " << dist[0] << " " << dist[1] << " " << dist[2]);
  CHECK(dist[1] <= dist[0]);
  CHECK(dist[2] <= dist[1]);
}

TEST_CASE("synthesis is deterministic per record") {
  Mini m(6, 36);
  AdversaryConfig cfg;
  cfg.steps = 3;
  cfg.per_record = 2;
  const adversary::SynthResult a = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 10);
  const adversary::SynthResult b = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 10);
  const std::vector<DataRecord> prefix(m.data.begin(), m.data.begin() + 3);
  const adversary::SynthResult c = adversary::synth_adversarial_dataset(prefix, m.pl, cfg, 10);
  REQUIRE(a.records.size() == 12);
  REQUIRE(c.records.size() == 6);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].record.latent == b.records[i].record.latent);
    CHECK(a.records[i].cost_adversarial == b.records[i].cost_adversarial);
    CHECK(a.records[i].source == i / 2);
    CHECK(a.records[i].draw == static_cast<int>(i % 2));
  }
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    CHECK(c.records[i].record.latent == a.records[i].record.latent);
    CHECK(c.records[i].cost_adversarial == a.records[i].cost_adversarial);
    CHECK(std::ranges::equal(c.records[i].record.image.data(), a.records[i].record.image.data()));
  }
  // Two draws of one record use different initialisations.
  CHECK(a.records[0].record.latent != a.records[1].record.latent);
  const adversary::SynthResult d = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 11);
  CHECK(d.records[0].record.latent != a.records[0].record.latent);
}

TEST_CASE("per-record errors are collected up to the allowed fraction") {
  Mini m(2, 37);
  m.data[1].latent.pop_back();
  AdversaryConfig cfg;
  cfg.steps = 1;
  try {
    adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 1);
    FAIL("expected failure");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
  cfg.max_error_fraction = 0.5;
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 1);
  CHECK(res.records.size() == 1);
  REQUIRE(res.errors.size() == 1);
  CHECK(res.errors[0].source == 1);

  cfg.steps = 0;
  CHECK_THROWS_AS(adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 1), ShapeError);
  cfg.steps = 1;
  cfg.kappa = -1;
  CHECK_THROWS_AS(adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 1), ShapeError);
  Pipeline empty;
  CHECK_THROWS_AS(adversary::adversarial_loss(empty, m.data[0], identity(10), 30), DataError);
}

TEST_CASE("relabel mode re-plans on the perturbed scene") {
  Mini m(4, 38);
  AdversaryConfig cfg;
  cfg.steps = 3;
  cfg.relabel_oracle = true;
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(m.data, m.pl, cfg, 12);
  REQUIRE(res.records.size() == 4);
  for (const adversary::AdvRecord& a : res.records) {
    if (!a.record.relabeled) continue;
    const scene::OraclePlan plan = scene::oracle_plan(a.record.scenario, 3, 10);
    REQUIRE(plan.future.size() == a.record.future.size());
    for (std::size_t t = 0; t < plan.future.size(); ++t)
      for (int k = 0; k < 4; ++k) CHECK(a.record.future[t][k] == doctest::Approx(plan.future[t][k]).epsilon(1e-6));
  }
}

TEST_CASE("VAE mode attacks through the decoder without obstacle constraints") {
  vae::VaeConfig vcfg;
  vcfg.image_size = 16;
  vcfg.latent_dim = 6;
  const ParamStore vparams = vae::init_vae(vcfg, 40);
  taskmodel::TaskModelConfig tcfg;
  tcfg.perception = taskmodel::Perception::VaeEncoder;
  tcfg.image_size = 16;
  tcfg.embed_dim = 6;
  tcfg.past_len = 3;
  tcfg.horizon = 10;
  tcfg.vae = vcfg;
  const ParamStore task = taskmodel::init_task_model(tcfg, 41, vparams);
  Pipeline pl;
  pl.mode = RendererMode::Vae;
  pl.vae = &vparams;
  pl.vae_cfg = vcfg;
  pl.task = &task;
  pl.task_cfg = tcfg;
  pl.mpc.horizon = 10;

  Mini src(1, 42);
  DataRecord r = src.data[0];
  r.latent = {0.5f, -0.3f, 1.2f, 0.0f, -0.8f, 0.25f};
  r.image = quantize_image(vae::decode_latent(vparams, r.latent, vcfg));
  CHECK(adversary::constraint_scene(pl, r).obstacles.empty());

  const adversary::StepEval ev = adversary::adversarial_loss(pl, r, identity(6), 30);
  CHECK(ev.loss == ev.cost);
  CHECK(ev.image.shape() == Shape{1, 1, 16, 16});
  CHECK(ev.grad.all_finite());
  const std::uint64_t dec = vae::decoder_checksum(vparams);
  AdversaryConfig cfg;
  cfg.steps = 2;
  const std::vector<DataRecord> one{r};
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(one, pl, cfg, 3);
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].cost_adversarial >= res.records[0].cost_original);
  CHECK(res.records[0].record.scenario.obstacles == r.scenario.obstacles);
  CHECK(vae::decoder_checksum(vparams) == dec);
}
