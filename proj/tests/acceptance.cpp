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


// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria
// by number; none runs all of them. Exit status is nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mpc_fixtures.hpp"
#include "qp_reference.hpp"
#include "taskaug/adversary.hpp"
#include "taskaug/evalbench.hpp"
#include "taskaug/selftest.hpp"
#include "taskaug/vae.hpp"
#include "vae_reference.hpp"
#include "wilcoxon_reference.hpp"

namespace fs = std::filesystem;
using namespace taskaug;
using evalbench::Scheme;
using evalbench::Split;

namespace {

// Limits in CPU-bound wall seconds on a single core.
constexpr double kSelftestSeconds = 120;
constexpr double kQpSeconds = 180;
constexpr double kContractSeconds = 300;
constexpr double kBenchmarkSeconds = 45 * 60;
constexpr double kVaeSeconds = 20 * 60;

constexpr double kOpTol = 1e-3;
constexpr double kKktTol = 1e-6;
constexpr double kReferenceCostTol = 1e-4;
constexpr double kEnvelopeTol = 1e-3;
constexpr double kVaeMseLimit = 0.01;
constexpr double kAlpha = 0.05;

constexpr int kQpProblems = 50;
constexpr int kContractRecords = 100;
constexpr int kVaeImages = 1000;
constexpr int kVaeHeldOut = 200;
constexpr int kWilcoxonCases = 100;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome criterion_gradients() {
  const selftest::Report r = selftest::run(20260101, nullptr);
  Outcome o;
  o.pass = r.pass() && r.seconds < kSelftestSeconds;
  o.detail = std::to_string(static_cast<int>(r.checks.size()) - r.failures()) + "/" + std::to_string(r.checks.size()) +
             " checks, selftest " + fmt("%.1f", r.seconds) + " s (limit " + fmt("%.0f", kSelftestSeconds) + ")";
  for (const selftest::Check& c : r.checks)
    if (!c.pass) o.detail += "; failed " + c.suite + "/" + c.name;
  return o;
}

Outcome criterion_qp() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2020);
  mpc::MpcConfig cfg;
  mpc::SolverOptions tight = cfg.solver;
  tight.tol = 1e-9;
  double kkt = 0, cost_err = 0, env_err = 0;
  int solved = 0, infeasible = 0, bad = 0;
  while (solved < kQpProblems) {
    const mpc::MpcProblem p = testing::random_toy_problem(rng, 2.0, cfg);
    const mpc::MpcSolution sol = mpc::solve_qp(p, cfg.solver);
    if (sol.status == mpc::SolveStatus::Infeasible) {
      ++infeasible;
      continue;
    }
    ++solved;
    if (sol.status != mpc::SolveStatus::Solved) {
      ++bad;
      continue;
    }
    const mpc::Violations v = mpc::constraint_violations(p, sol);
    kkt = std::max({kkt, sol.primal_residual, sol.dual_residual, v.dynamics, v.bounds, v.halfspaces});
    const testing::ReferenceResult ref = testing::reference_solve(p);
    cost_err = std::max(cost_err, std::abs(sol.cost - ref.cost) / std::abs(ref.cost));

    const mpc::MpcSolution st = mpc::solve_qp(p, tight);
    if (st.status != mpc::SolveStatus::Solved) {
      ++bad;
      continue;
    }
    const auto env = mpc::grad_cost_wrt_waypoints(p, st);
    const auto fd = mpc::fd_grad_cost(p, 1e-4, tight);
    double err = 0, mag = 0;
    for (std::size_t t = 0; t < env.size(); ++t) {
      err = std::max(err, (env[t] - fd[t]).lpNorm<Eigen::Infinity>());
      mag = std::max(mag, fd[t].lpNorm<Eigen::Infinity>());
    }
    env_err = std::max(env_err, err / (mag + 1e-8));
  }
  const double secs = since(t0);
  Outcome o;
  o.pass = bad == 0 && kkt <= kKktTol && cost_err <= kReferenceCostTol && env_err <= kEnvelopeTol && secs < kQpSeconds;
  o.detail = std::to_string(solved) + " problems (" + std::to_string(infeasible) + " infeasible draws skipped, " +
             std::to_string(bad) + " unsolved), KKT " + fmt("%.2e", kkt) + ", cost vs reference " +
             fmt("%.2e", cost_err) + ", envelope vs FD " + fmt("%.2e", env_err) + ", " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome criterion_contract() {
  const auto t0 = Clock::now();
  evalbench::BenchmarkConfig cfg;
  const std::uint64_t seed = 4242;
  const auto train = evalbench::generate_split(cfg, evalbench::DataStream::Train, 300, seed, cfg.image_size);
  const auto data = evalbench::generate_split(cfg, evalbench::DataStream::Test, kContractRecords, seed, cfg.image_size);
  const ParamStore init = evalbench::initial_task_params(cfg, seed, nullptr);
  const taskmodel::TrainTaskResult model =
      taskmodel::train(train, cfg.task, evalbench::train_options(cfg, seed), init);

  adversary::Pipeline pl;
  pl.render.size = cfg.image_size;
  pl.task = &model.params;
  pl.task_cfg = cfg.task;
  pl.mpc = cfg.mpc;
  pl.planner = cfg.planner;
  adversary::AdversaryConfig acfg;
  acfg.kappa = 30;
  acfg.steps = 10;
  const std::uint64_t task_sum = model.params.checksum();
  const std::uint64_t frozen = adversary::frozen_checksum(pl);
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(data, pl, acfg, seed);
  const bool unchanged = model.params.checksum() == task_sum && adversary::frozen_checksum(pl) == frozen;

  std::size_t holds = 0;
  double jo = 0, ja = 0;
  for (const adversary::AdvRecord& a : res.records) {
    holds += a.cost_adversarial >= a.cost_original;
    jo += a.cost_original;
    ja += a.cost_adversarial;
  }
  const double ratio = ja / jo;
  const double secs = since(t0);
  Outcome o;
  o.pass = !res.records.empty() && holds == res.records.size() && ratio > 1.0 && unchanged && secs < kContractSeconds;
  o.detail = std::to_string(holds) + "/" + std::to_string(res.records.size()) + " records with J_adv >= J_orig (" +
             std::to_string(res.errors.size()) + " errors), mean J ratio " + fmt("%.6f", ratio) + ", checksums " +
             (unchanged ? "unchanged" : "CHANGED") + ", " + fmt("%.1f", secs) + " s";
  return o;
}

struct SeedTrend {
  bool adv_collisions = false;   // task-driven < original on adv
  bool ood_collisions = false;   // task-driven <= data-augment on ood
  bool lower_cost = false;       // task-driven < original on adv, p < alpha
  bool lower_mse = false;
  std::string line;
};

std::vector<SeedTrend> g_trends;
double g_benchmark_seconds = -1;

void run_benchmarks() {
  if (g_benchmark_seconds >= 0) return;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : kSeeds) {
    evalbench::BenchmarkConfig cfg;
    const auto ts = Clock::now();
    const evalbench::BenchmarkResult r = evalbench::run_benchmark(cfg, seed);
    const auto& orig = evalbench::report_for(r, Scheme::Original);
    const auto& aug = evalbench::report_for(r, Scheme::DataAugment);
    const auto& td = evalbench::report_for(r, Scheme::TaskDriven);
    const int adv = static_cast<int>(Split::Adv), ood = static_cast<int>(Split::Ood);
    SeedTrend s;
    s.adv_collisions = td.splits[adv].collisions < orig.splits[adv].collisions;
    s.ood_collisions = td.splits[ood].collisions <= aug.splits[ood].collisions;
    const double pc = td.wilcoxon_p.at("original/adv/cost"), pm = td.wilcoxon_p.at("original/adv/mse");
    s.lower_cost = td.splits[adv].mean_cost < orig.splits[adv].mean_cost && pc < kAlpha;
    s.lower_mse = td.splits[adv].mean_mse < orig.splits[adv].mean_mse && pm < kAlpha;
    std::ostringstream os;
    os << "seed " << seed << ": adv collisions task_driven " << td.splits[adv].collisions << " vs original "
       << orig.splits[adv].collisions << ", ood collisions task_driven " << td.splits[ood].collisions
       << " vs data_augment " << aug.splits[ood].collisions << ", adv cost " << fmt("%.4f", td.splits[adv].mean_cost)
       << " vs " << fmt("%.4f", orig.splits[adv].mean_cost) << " (p " << fmt("%.3g", pc) << "), adv mse "
       << fmt("%.4f", td.splits[adv].mean_mse) << " vs " << fmt("%.4f", orig.splits[adv].mean_mse) << " (p "
       << fmt("%.3g", pm) << "), " << fmt("%.0f", since(ts)) << " s";
    s.line = os.str();
    std::printf("  %s\n", s.line.c_str());
    std::fflush(stdout);
    g_trends.push_back(s);
  }
  g_benchmark_seconds = since(t0);
}

int count_if(bool SeedTrend::*field) {
  return static_cast<int>(std::count_if(g_trends.begin(), g_trends.end(), [&](const SeedTrend& s) { return s.*field; }));
}

Outcome criterion_collisions() {
  run_benchmarks();
  const int a = count_if(&SeedTrend::adv_collisions), b = count_if(&SeedTrend::ood_collisions);
  Outcome o;
  o.pass = a >= 2 && b >= 2 && g_benchmark_seconds < kBenchmarkSeconds;
  o.detail = "adv fewer collisions in " + std::to_string(a) + "/3 seeds, ood no more than augment in " +
             std::to_string(b) + "/3 seeds, three seeds in " + fmt("%.0f", g_benchmark_seconds) + " s (limit " +
             fmt("%.0f", kBenchmarkSeconds) + ")";
  return o;
}

Outcome criterion_cost_mse() {
  run_benchmarks();
  const int c = count_if(&SeedTrend::lower_cost), m = count_if(&SeedTrend::lower_mse);
  Outcome o;
  o.pass = c >= 2 && m >= 2;
  o.detail = "adv cost lower with p < 0.05 in " + std::to_string(c) + "/3 seeds, adv mse lower with p < 0.05 in " +
             std::to_string(m) + "/3 seeds";
  return o;
}

Outcome criterion_vae() {
  const auto t0 = Clock::now();
  evalbench::BenchmarkConfig cfg;
  const vae::VaeConfig vcfg;
  const std::uint64_t seed = 606;
  auto images_of = [&](evalbench::DataStream stream, int n) {
    std::vector<Tensor> out;
    for (const DataRecord& r : evalbench::generate_split(cfg, stream, n, seed, vcfg.image_size))
      out.push_back(r.image);
    return out;
  };
  const std::vector<Tensor> train = images_of(evalbench::DataStream::Train, kVaeImages);
  const std::vector<Tensor> held = images_of(evalbench::DataStream::Test, kVaeHeldOut);
  vae::TrainVaeOptions opts;
  opts.epochs = 200;
  opts.lr = 1e-3;
  opts.seed = seed;
  const vae::TrainVaeResult r = vae::train_vae(train, vcfg, opts);
  const double mse = vae::reconstruction_mse(r.params, held, vcfg);
  const double train_mse = vae::reconstruction_mse(r.params, train, vcfg);

  std::mt19937_64 rng(seed);
  const testing::DecodeGradCheck gc = testing::check_decode_gradient(r.params, vcfg, rng, 10);
  const bool grads_ok = gc.ok(kOpTol);
  const double worst = gc.max_abs_err / std::max(gc.max_ref, 1e-12);
  const double secs = since(t0);
  Outcome o;
  o.pass = mse < kVaeMseLimit && grads_ok && secs < kVaeSeconds;
  o.detail = "held-out MSE " + fmt("%.5f", mse) + " (train " + fmt("%.5f", train_mse) + ", limit " +
             fmt("%.2g", kVaeMseLimit) + "), final loss " + fmt("%.3f", r.loss_trace.back()) +
             ", decode FD relative error " + fmt("%.2e", worst) + ", " + fmt("%.0f", secs) + " s";
  return o;
}

Outcome criterion_wilcoxon() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(5, 14), diff(-6, 6);
  int checked = 0, equal = 0;
  while (checked < kWilcoxonCases) {
    const int n = len(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = diff(rng);
      x[i] = y[i] + diff(rng);
    }
    const evalbench::WilcoxonResult r = evalbench::wilcoxon_signed_rank(x, y);
    if (r.n_eff > 10) continue;
    equal += r.exact && r.p == testing::enumerate_p(x, y);
    ++checked;
  }
  return {equal == checked, std::to_string(equal) + "/" + std::to_string(checked) + " exact p equal to enumeration"};
}

const char* kReproConfig = R"(seed = 11
image_size = 32
n_obs = 2
past_len = 3
horizon = 10
[data]
n_train = 40
n_test = 12
n_ood = 12
n_extra = 40
[adversary]
steps = 3
[task]
epochs = 15
patience = 4
)";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion_reproducible() {
  const fs::path dir = fs::temp_directory_path() / "taskaug_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> summaries;
  std::string detail;
  for (const char* run : {"a", "b"}) {
    {
      std::ofstream os(dir / (std::string(run) + ".toml"));
      os << "out_dir = \"" << (dir / run).string() << "\"\n" << kReproConfig;
    }
    const std::string cmd = std::string("'") + TASKAUG_CLI + "' run-benchmark --config '" +
                            (dir / (std::string(run) + ".toml")).string() + "' > '" + (dir / run).string() +
                            ".log' 2>&1";
    const int status = std::system(cmd.c_str());
    if (status != 0) detail += std::string("run ") + run + " exited with status " + std::to_string(status) + "; ";
    summaries.push_back(slurp(dir / run / "summary.csv"));
  }
  const bool same = !summaries[0].empty() && summaries[0] == summaries[1];
  Outcome o;
  o.pass = detail.empty() && same;
  o.detail = detail + "summary.csv " + (same ? "byte-identical" : "differs") + " (" +
             std::to_string(summaries[0].size()) + " bytes)";
  if (o.pass) fs::remove_all(dir);
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient integrity", criterion_gradients},
      {2, "QP correctness", criterion_qp},
      {3, "adversary contract", criterion_contract},
      {4, "collision trend", criterion_collisions},
      {5, "cost and MSE trend", criterion_cost_mse},
      {6, "VAE mode", criterion_vae},
      {7, "Wilcoxon exact branch", criterion_wilcoxon},
      {8, "reproducibility", criterion_reproducible},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const Criterion& c : all) {
    if (!chosen.empty() && !chosen.count(c.id)) continue;
    std::printf("criterion %d (%s): running\n", c.id, c.title);
    std::fflush(stdout);
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d (%s): %s  %s\n", c.id, c.title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
