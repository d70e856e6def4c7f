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
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "taskaug/error.hpp"
#include "taskaug/evalbench.hpp"
#include "taskaug/rng.hpp"
#include "wilcoxon_reference.hpp"

using namespace taskaug;
using namespace taskaug::evalbench;

namespace {

using testing::enumerate_p;

Tensor random_image(int s, std::mt19937_64& rng) {
  Tensor t({1, 1, s, s});
  std::uniform_real_distribution<double> u(0, 1);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

taskmodel::TaskModelConfig small_task() {
  taskmodel::TaskModelConfig c;
  c.image_size = 32;
  c.past_len = 3;
  c.horizon = 10;
  return c;
}

adversary::Pipeline small_pipeline(const taskmodel::TaskModelConfig& tc) {
  adversary::Pipeline pl;
  pl.render.size = tc.image_size;
  pl.task_cfg = tc;
  pl.mpc.horizon = tc.horizon;
  return pl;
}

std::vector<DataRecord> small_records(int n, std::uint64_t seed) {
  std::mt19937_64 rng = stream_rng(seed, 5);
  scene::SceneConfig sc;
  sc.n_obs = 3;
  scene::RenderConfig rc;
  rc.size = 32;
  std::vector<DataRecord> out;
  while (static_cast<int>(out.size()) < n) {
    try {
      out.push_back(make_analytic_record(scene::sample_scenario(scene::Distribution::Train, rng, sc), 3, 10, {}, rc));
    } catch (const NumericError&) {
    }
  }
  return out;
}

BenchmarkConfig tiny_config() {
  BenchmarkConfig c;
  c.scene.n_obs = 2;
  c.image_size = 32;
  c.task = small_task();
  c.mpc.horizon = 10;
  c.train.max_epochs = 20;
  c.train.patience = 5;
  c.adversary.steps = 2;
  c.n_train = 12;
  c.n_test = 6;
  c.n_ood = 6;
  c.n_extra = 12;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.push_back("");
  return f;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("taskaug_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("identity augmentation leaves the image unchanged") {
  std::mt19937_64 rng(1);
  const Tensor img = random_image(12, rng);
  AugmentParams a;
  a.contrast = true;
  a.contrast_scale = 1.0;
  a.brightness = true;
  a.brightness_offset = 0.0;
  const Tensor out = apply_augment(img, a);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-6));
  CHECK(apply_augment(img, AugmentParams{}).data().size() == img.size());
  const Tensor same = apply_augment(img, AugmentParams{});
  CHECK(std::ranges::equal(same.data(), img.data()));
}

TEST_CASE("contrast and brightness by hand") {
  const Tensor img({1, 1, 1, 2}, {0.2f, 0.4f});
  AugmentParams a;
  a.contrast = true;
  a.contrast_scale = 2.0;
  Tensor out = apply_augment(img, a);
  CHECK(out[0] == doctest::Approx(0.1));
  CHECK(out[1] == doctest::Approx(0.5));
  a.brightness = true;
  a.brightness_offset = 0.6;
  out = apply_augment(img, a);
  CHECK(out[0] == doctest::Approx(0.7));
  CHECK(out[1] == 1.0f);  // clamped
}

TEST_CASE("box blur") {
  Tensor flat({1, 1, 6, 6});
  for (float& v : flat.data()) v = 0.37f;
  for (int k : {3, 5}) {
    const Tensor b = box_blur(flat, k);
    for (float v : b.data()) CHECK(v == doctest::Approx(0.37));
  }

  Tensor impulse({1, 1, 7, 7});
  impulse[3 * 7 + 3] = 1.0f;
  const Tensor b3 = box_blur(impulse, 3);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      const bool inside = std::abs(y - 3) <= 1 && std::abs(x - 3) <= 1;
      CHECK(b3[static_cast<std::size_t>(y * 7 + x)] == doctest::Approx(inside ? 1.0 / 9 : 0.0));
    }
  const Tensor b5 = box_blur(impulse, 5);
  CHECK(b5[3 * 7 + 3] == doctest::Approx(1.0 / 25));
  CHECK(b5[1 * 7 + 1] == doctest::Approx(1.0 / 25));
  CHECK(b5[0] == 0.0f);
  CHECK_THROWS_AS(box_blur(impulse, 4), ShapeError);
  CHECK_THROWS_AS(box_blur(Tensor({5}), 3), ShapeError);
}

TEST_CASE("augmentation stays in range and keeps the shape") {
  std::mt19937_64 rng(2);
  int contrast = 0, bright = 0, blur = 0, k5 = 0;
  const int draws = 2000;
  for (int i = 0; i < draws; ++i) {
    const AugmentParams a = draw_augment_params(rng);
    CHECK(a.contrast_scale >= 0.7);
    CHECK(a.contrast_scale <= 1.3);
    CHECK(std::abs(a.brightness_offset) <= 0.15);
    CHECK((a.blur_kernel == 3 || a.blur_kernel == 5));
    contrast += a.contrast;
    bright += a.brightness;
    blur += a.blur;
    k5 += a.blur_kernel == 5;
  }
  for (int c : {contrast, bright, blur, k5}) CHECK(std::abs(c / static_cast<double>(draws) - 0.5) < 0.05);

  for (int i = 0; i < 200; ++i) {
    const Tensor img = random_image(10 + i % 7, rng);
    const Tensor out = augment_image(img, rng);
    CHECK(out.shape() == img.shape());
    for (float v : out.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  std::mt19937_64 r1(3), r2(3);
  const Tensor img = random_image(8, rng);
  CHECK(std::ranges::equal(augment_image(img, r1).data(), augment_image(img, r2).data()));
}

TEST_CASE("wilcoxon examples") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> z(6, 0.0);
  const WilcoxonResult r = wilcoxon_signed_rank(x, z);
  CHECK(r.exact);
  CHECK(r.n_eff == 6);
  CHECK(r.w_plus == 21);
  CHECK(r.w_minus == 0);
  CHECK(r.p == 0.03125);
  CHECK(enumerate_p(x, z) == 0.03125);
  CHECK(wilcoxon_signed_rank(z, x).p == r.p);

  const WilcoxonResult same = wilcoxon_signed_rank(x, x);
  CHECK(same.p == 1.0);
  CHECK(same.n_eff == 0);

  CHECK_THROWS_AS(wilcoxon_signed_rank(x, std::vector<double>(5, 0.0)), ShapeError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>(4, 1.0), std::vector<double>(4, 0.0)), ShapeError);
}

TEST_CASE("wilcoxon exact branch equals sign-pattern enumeration") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len(5, 12), diff(-5, 5);
  int checked = 0;
  while (checked < 100) {
    const int n = len(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[i] = diff(rng);
      x[i] = y[i] + diff(rng);
    }
    const WilcoxonResult r = wilcoxon_signed_rank(x, y);
    if (r.n_eff > 10) continue;
    CHECK(r.exact);
    CHECK(r.p == enumerate_p(x, y));
    CHECK(wilcoxon_signed_rank(y, x).p == r.p);
    ++checked;
  }
  // Larger exact cases up to the branch limit.
  for (int n : {15, 20}) {
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) x[i] = (i % 3 == 0 ? -1 : 1) * (1 + diff(rng) * diff(rng));
    const WilcoxonResult r = wilcoxon_signed_rank(x, y);
    if (r.n_eff <= 20) CHECK(r.p == enumerate_p(x, y));
  }
}

TEST_CASE("wilcoxon normal approximation tracks the exact distribution") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.3, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 21;
    std::vector<double> x(n), y(n, 0.0);
    for (double& v : x) v = noise(rng);
    const WilcoxonResult approx = wilcoxon_signed_rank(x, y);
    CHECK_FALSE(approx.exact);
    CHECK(approx.p == doctest::Approx(enumerate_p(x, y)).epsilon(0.05));
  }
  // d = 1..25, all positive: W = 0, mean 162.5, variance 1381.25.
  std::vector<double> x(25), y(25, 0.0);
  for (int i = 0; i < 25; ++i) x[i] = i + 1;
  const double z = (162.5 - 0.5) / std::sqrt(1381.25);
  CHECK(wilcoxon_signed_rank(x, y).p == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-12));
  // Ties shrink the variance: 30 differences of equal magnitude.
  std::vector<double> t(30, 1.0), u(30, 0.0);
  t[0] = t[1] = -1.0;
  const double var = 30.0 * 31 * 61 / 24 - (27000.0 - 30) / 48;
  const double zt = (std::abs(31.0 - 232.5) - 0.5) / std::sqrt(var);
  CHECK(wilcoxon_signed_rank(t, u).p == doctest::Approx(std::erfc(zt / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("a perfect prediction on an empty scene costs nothing") {
  const taskmodel::TaskModelConfig tc = small_task();
  ParamStore p = taskmodel::init_task_model(tc, 1);
  for (const std::string& name : p.names())
    for (float& v : p.at(name).data()) v = 0.0f;
  scene::Scenario s;
  scene::RenderConfig rc;
  rc.size = 32;
  const DataRecord r = make_analytic_record(s, tc.past_len, tc.horizon, {}, rc);
  const std::vector<DataRecord> split{r};
  const SplitEval e = evaluate_model(p, split, small_pipeline(tc));
  REQUIRE(e.evaluated == 1);
  CHECK(e.failures == 0);
  CHECK(e.collisions == 0);
  CHECK(std::abs(e.records[0].cost) < 1e-6);
  CHECK(e.records[0].mse < 1e-8);
}

TEST_CASE("evaluation aggregates match the per-record CSV") {
  const taskmodel::TaskModelConfig tc = small_task();
  const ParamStore p = taskmodel::init_task_model(tc, 2);
  const std::vector<DataRecord> data = small_records(15, 6);
  adversary::Pipeline pl = small_pipeline(tc);
  SchemeReport rep;
  for (int k = 0; k < 3; ++k) rep.splits[k] = evaluate_model(p, data, pl);
  rep.splits[2].records[4].ok = false;  // one failure on the adv split
  aggregate(rep.splits[2], RendererMode::Analytic);
  CHECK(rep.splits[2].failures == 1);

  std::stringstream csv(report_csv(rep));
  std::string line;
  std::getline(csv, line);
  CHECK(line.front() == '#');
  std::getline(csv, line);
  CHECK(line == "split,id,status,cost,mse,collision");
  double cost[3] = {}, mse[3] = {};
  int n[3] = {}, coll[3] = {}, rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    const auto f = split_line(line);
    REQUIRE(f.size() == 6);
    const int k = f[0] == "orig" ? 0 : f[0] == "ood" ? 1 : 2;
    if (f[2] != "ok") continue;
    cost[k] += std::stod(f[3]);
    mse[k] += std::stod(f[4]);
    coll[k] += std::stoi(f[5]);
    ++n[k];
  }
  CHECK(rows == 45);
  for (int k = 0; k < 3; ++k) {
    const SplitEval& e = rep.splits[k];
    CHECK(e.evaluated == n[k]);
    CHECK(e.collisions == coll[k]);
    CHECK(std::abs(e.mean_cost - cost[k] / n[k]) <= 1e-7 * std::max(1.0, std::abs(e.mean_cost)));
    CHECK(std::abs(e.mean_mse - mse[k] / n[k]) <= 1e-7 * std::max(1.0, std::abs(e.mean_mse)));
    CHECK(e.mean_cost >= 0);
    CHECK(e.collisions <= static_cast<int>(e.records.size()));
  }
  CHECK(n[2] == 14);

  pl.mode = RendererMode::Vae;
  SplitEval v = rep.splits[0];
  aggregate(v, RendererMode::Vae);
  CHECK(v.collisions == kCollisionUndefined);
  CHECK_THROWS_AS(evaluate_model(p, std::vector<DataRecord>{}, pl), ShapeError);
}

TEST_CASE("tiny benchmark is reproducible and writes its artifacts") {
  BenchmarkConfig cfg = tiny_config();
  const auto d1 = scratch_dir("bench1"), d2 = scratch_dir("bench2");
  cfg.out_dir = d1;
  const BenchmarkResult a = run_benchmark(cfg, 17);
  cfg.out_dir = d2;
  const BenchmarkResult b = run_benchmark(cfg, 17);

  REQUIRE(a.reports.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(a.reports[k].scheme == kSchemes[k]);
  CHECK(a.data.train.size() == 12);
  CHECK(a.data.adv_train.size() == 12);
  CHECK(a.data.adv_test.size() == 6);
  CHECK(a.data.augmented.size() == 12);
  CHECK(report_for(a, Scheme::Original).train_records == 12);
  CHECK(report_for(a, Scheme::TaskDriven).train_records == 24);
  for (const DataRecord& r : a.data.adv_test) CHECK(r.adversarial);
  CHECK(a.adv_test.mean_cost_adversarial >= a.adv_test.mean_cost_original);

  for (const char* f : {"summary.csv", "latents.csv", "report_original.csv", "report_data_added.csv",
                        "report_data_augment.csv", "report_task_driven.csv", "orig_train.advd", "adv_test.advd",
                        "task_task_driven.advw"}) {
    INFO(f);
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  CHECK(summary_csv(a) == summary_csv(b));
  const std::string summary = slurp(d1 / "summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 2 + 12);

  const Dataset adv = load_dataset(d1 / "adv_test.advd");
  REQUIRE(adv.records.size() == 6);
  CHECK(adv.records[0].latent == a.data.adv_test[0].latent);
  CHECK(adv.records[0].scenario.obstacles == a.data.adv_test[0].scenario.obstacles);

  const std::string table = summary_table(a);
  CHECK(table.find("task_driven") != std::string::npos);

  cfg.out_dir = scratch_dir("bench3");
  CHECK(summary_csv(run_benchmark(cfg, 18)) != summary_csv(a));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("benchmark errors name the stage and keep earlier artifacts") {
  BenchmarkConfig cfg = tiny_config();
  cfg.out_dir = scratch_dir("bench_err");
  cfg.train.lr = std::nan("");
  try {
    run_benchmark(cfg, 3);
    FAIL("expected failure");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("stage train-original") != std::string::npos);
  }
  CHECK(std::filesystem::exists(cfg.out_dir / "orig_train.advd"));
  CHECK_FALSE(std::filesystem::exists(cfg.out_dir / "summary.csv"));
  std::filesystem::remove_all(cfg.out_dir);

  cfg = tiny_config();
  cfg.scene.n_obs = 60;
  cfg.scene.max_rejections = 5;
  CHECK_THROWS_WITH_AS(run_benchmark(cfg, 3), doctest::Contains("stage generate"), NumericError);

  cfg = tiny_config();
  cfg.mpc.horizon = 12;
  CHECK_THROWS_AS(run_benchmark(cfg, 3), ShapeError);
  cfg = tiny_config();
  cfg.mode = RendererMode::Vae;
  CHECK_THROWS_AS(run_benchmark(cfg, 3), ShapeError);
}

TEST_CASE("VAE-mode benchmark reports collisions as undefined") {
  BenchmarkConfig cfg = tiny_config();
  cfg.mode = RendererMode::Vae;
  cfg.vae.image_size = 16;
  cfg.vae.latent_dim = 6;
  cfg.vae_train.epochs = 2;
  cfg.task.perception = taskmodel::Perception::VaeEncoder;
  cfg.task.image_size = 16;
  cfg.task.embed_dim = 6;
  cfg.task.vae = cfg.vae;
  const BenchmarkResult r = run_benchmark(cfg, 5);
  for (const SchemeReport& rep : r.reports)
    for (const SplitEval& e : rep.splits) CHECK(e.collisions == kCollisionUndefined);
  CHECK(r.data.train.front().latent.size() == 6);
  CHECK(summary_csv(r).find(",undefined,") != std::string::npos);
}
