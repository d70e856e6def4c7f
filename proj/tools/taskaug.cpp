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


// taskaug command line: data generation, training, adversarial synthesis,
// evaluation and the full benchmark. Exit codes: 0 ok, 1 usage, 2 data
// error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "taskaug/config.hpp"
#include "taskaug/error.hpp"
#include "taskaug/evalbench.hpp"
#include "taskaug/selftest.hpp"

namespace fs = std::filesystem;
using namespace taskaug;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kNumericError = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Run configuration (TOML-style key = value)");
    app->add_option("--seed", seed, "Override the configured seed");
  }

  RunConfig load() const {
    RunConfig c;
    if (!config.empty()) {
      c = load_config(config);
    } else {
      c.finalize();
    }
    if (seed) c.seed = *seed;
    return c;
  }
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

int render_size(const RunConfig& c) {
  return c.bench.mode == RendererMode::Vae ? c.bench.vae.image_size : c.bench.image_size;
}

Dataset make_dataset(const RunConfig& c, RendererMode mode, std::vector<DataRecord> records) {
  Dataset d;
  d.mode = mode;
  d.width = d.height = render_size(c);
  d.past_len = c.bench.task.past_len;
  d.horizon = c.bench.task.horizon;
  d.latent_dim = records.empty() ? (mode == RendererMode::Vae ? c.bench.vae.latent_dim
                                                               : 2 + 4 * c.bench.scene.n_obs)
                                 : static_cast<int>(records.front().latent.size());
  d.records = std::move(records);
  return d;
}

void save(const fs::path& path, const Dataset& d) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path, d);
  std::cout << "wrote " << path.string() << " (" << d.records.size() << " records)\n";
}

void save_params(const fs::path& path, const ParamStore& p) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(path, p);
  std::cout << "wrote " << path.string() << "\n";
}

/// Dataset whose geometry and sizes agree with the configuration.
Dataset load_checked(const RunConfig& c, const fs::path& path) {
  Dataset d = load_dataset(path);
  if (d.records.empty()) return d;
  if (d.width != render_size(c))
    throw DataError(path.string() + ": image size " + std::to_string(d.width) + " but the configuration uses " +
                    std::to_string(render_size(c)));
  if (d.past_len != c.bench.task.past_len || d.horizon != c.bench.task.horizon)
    throw DataError(path.string() + ": P/F differ from the configuration");
  return d;
}

std::optional<ParamStore> maybe_vae(const RunConfig& c, const std::string& flag) {
  const fs::path p = flag.empty() ? c.out_dir / "vae.advw" : fs::path(flag);
  if (c.bench.mode != RendererMode::Vae) return std::nullopt;
  if (!fs::exists(p)) throw DataError("VAE mode needs a decoder checkpoint; missing " + p.string());
  return load_checkpoint(p);
}

adversary::Pipeline pipeline(const RunConfig& c, const ParamStore* task, const ParamStore* vae) {
  adversary::Pipeline pl;
  pl.mode = c.bench.mode;
  pl.render.size = render_size(c);
  pl.vae = vae;
  pl.vae_cfg = c.bench.vae;
  pl.task = task;
  pl.task_cfg = c.bench.task;
  pl.mpc = c.bench.mpc;
  pl.planner = c.bench.planner;
  return pl;
}

// ---- commands ----

int gen_scenarios(const RunConfig& c, const std::string& split, std::optional<int> count, const std::string& out,
                  const std::string& vae_flag) {
  evalbench::DataStream stream;
  int n = 0;
  if (split == "train") {
    stream = evalbench::DataStream::Train;
    n = c.bench.n_train;
  } else if (split == "test") {
    stream = evalbench::DataStream::Test;
    n = c.bench.n_test;
  } else if (split == "ood") {
    stream = evalbench::DataStream::Ood;
    n = c.bench.n_ood;
  } else {
    stream = evalbench::DataStream::Added;
    n = c.bench.n_extra;
  }
  if (count) n = *count;
  if (n < 0) throw ShapeError("--count must be non-negative");
  std::vector<DataRecord> recs = evalbench::generate_split(c.bench, stream, n, c.seed, render_size(c));
  RendererMode mode = RendererMode::Analytic;
  if (c.bench.mode == RendererMode::Vae) {
    const fs::path vp = vae_flag.empty() ? c.out_dir / "vae.advw" : fs::path(vae_flag);
    if (fs::exists(vp)) {
      const ParamStore vae = load_checkpoint(vp);
      for (DataRecord& r : recs) r.latent = vae::encode_image(vae, r.image, c.bench.vae).first;
      mode = RendererMode::Vae;
    } else {
      std::cout << "no VAE checkpoint at " << vp.string() << "; writing analytic latents (train-vae --encode converts)\n";
    }
  }
  save(out.empty() ? c.out_dir / (split + ".advd") : fs::path(out), make_dataset(c, mode, std::move(recs)));
  return 0;
}

int train_vae_cmd(const RunConfig& c, const std::string& data, const std::vector<std::string>& encode,
                  const std::string& out) {
  const Dataset d = load_checked(c, data);
  if (d.records.empty()) throw DataError(data + ": no records to train on");
  std::vector<Tensor> images;
  for (const DataRecord& r : d.records) images.push_back(r.image);
  vae::TrainVaeOptions o = c.bench.vae_train;
  o.seed = c.seed;
  const vae::TrainVaeResult res = vae::train_vae(images, c.bench.vae, o);
  std::printf("final loss %.6f, reconstruction MSE %.6f\n", res.loss_trace.back(),
              vae::reconstruction_mse(res.params, images, c.bench.vae));
  save_params(out.empty() ? c.out_dir / "vae.advw" : fs::path(out), res.params);
  for (const std::string& path : encode) {
    Dataset e = load_checked(c, path);
    for (DataRecord& r : e.records) r.latent = vae::encode_image(res.params, r.image, c.bench.vae).first;
    e.mode = RendererMode::Vae;
    e.latent_dim = c.bench.vae.latent_dim;
    save(path, e);
  }
  return 0;
}

int train_task_cmd(const RunConfig& c, const std::vector<std::string>& data, const std::string& out,
                   const std::string& vae_flag) {
  std::vector<DataRecord> all;
  for (const std::string& p : data) {
    Dataset d = load_checked(c, p);
    if (d.mode != c.bench.mode && !d.records.empty()) throw DataError(p + ": renderer mode differs from the configuration");
    all.insert(all.end(), d.records.begin(), d.records.end());
  }
  if (all.empty()) throw DataError("no training records");
  const std::optional<ParamStore> vae = maybe_vae(c, vae_flag);
  const ParamStore init = evalbench::initial_task_params(c.bench, c.seed, vae ? &*vae : nullptr);
  taskmodel::TrainTaskOptions o = evalbench::train_options(c.bench, c.seed);
  const taskmodel::TrainTaskResult r = taskmodel::train(all, c.bench.task, o, init);
  std::printf("trained on %zu records: best epoch %d, validation loss %.6f, %zu epochs run\n", all.size(),
              r.best_epoch, r.best_val, r.train_loss.size());
  save_params(out.empty() ? c.out_dir / "task.advw" : fs::path(out), r.params);
  return 0;
}

int synth_adv_cmd(const RunConfig& c, const std::string& data, const std::string& model, const std::string& out,
                  const std::string& vae_flag) {
  const Dataset d = load_checked(c, data);
  const ParamStore task = load_checkpoint(model.empty() ? c.out_dir / "task.advw" : fs::path(model));
  taskmodel::check_params(task, c.bench.task);
  const std::optional<ParamStore> vae = maybe_vae(c, vae_flag);
  const adversary::Pipeline pl = pipeline(c, &task, vae ? &*vae : nullptr);
  const adversary::SynthResult res = adversary::synth_adversarial_dataset(d.records, pl, c.bench.adversary, c.seed);
  double jo = 0, ja = 0;
  int kept = 0;
  std::vector<DataRecord> recs;
  for (const adversary::AdvRecord& a : res.records) {
    jo += a.cost_original;
    ja += a.cost_adversarial;
    kept += a.best_step == 0;
    recs.push_back(a.record);
  }
  for (const adversary::RecordError& e : res.errors) std::cerr << "error: " << e.message << "\n";
  const double n = static_cast<double>(std::max<std::size_t>(res.records.size(), 1));
  std::printf("kappa %.6g, K %d: %zu records, %zu errors, mean J original %.6f, mean J adversarial %.6f, ratio %.6f, "
              "%d kept the original\n",
              c.bench.adversary.kappa, c.bench.adversary.steps, res.records.size(), res.errors.size(), jo / n, ja / n,
              jo > 0 ? ja / jo : 0.0, kept);
  save(out.empty() ? c.out_dir / "adv.advd" : fs::path(out), make_dataset(c, d.mode, std::move(recs)));
  return 0;
}

int augment_cmd(const RunConfig& c, const std::string& data, std::optional<int> count, const std::string& out) {
  const Dataset d = load_checked(c, data);
  const int n = count.value_or(c.bench.n_extra);
  std::vector<DataRecord> recs = evalbench::augment_records(d.records, n, c.seed);
  save(out.empty() ? c.out_dir / "augment.advd" : fs::path(out), make_dataset(c, d.mode, std::move(recs)));
  return 0;
}

int eval_cmd(const RunConfig& c, const std::vector<std::string>& models, const std::vector<std::string>& data,
             const std::string& report_dir, const std::string& vae_flag) {
  const std::optional<ParamStore> vae = maybe_vae(c, vae_flag);
  std::vector<ParamStore> params;
  for (const std::string& m : models) {
    params.push_back(load_checkpoint(m));
    taskmodel::check_params(params.back(), c.bench.task);
  }
  std::printf("%-28s %-20s %6s %5s %6s %12s %10s %10s %10s\n", "model", "data", "n", "fail", "coll", "mean cost",
              "mean mse", "p(cost)", "p(mse)");
  for (const std::string& path : data) {
    const Dataset d = load_checked(c, path);
    std::vector<evalbench::SplitEval> evals;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const adversary::Pipeline pl = pipeline(c, &params[k], vae ? &*vae : nullptr);
      evals.push_back(evalbench::evaluate_model(params[k], d.records, pl));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      const evalbench::SplitEval& e = evals[k];
      std::string pc = "-", pm = "-";
      if (k > 0) {
        std::vector<double> xc, yc, xm, ym;
        for (std::size_t i = 0; i < e.records.size(); ++i) {
          if (!e.records[i].ok || !evals[0].records[i].ok) continue;
          xc.push_back(e.records[i].cost);
          yc.push_back(evals[0].records[i].cost);
          xm.push_back(e.records[i].mse);
          ym.push_back(evals[0].records[i].mse);
        }
        if (xc.size() >= 5) {
          char b[32];
          std::snprintf(b, sizeof b, "%.4g", evalbench::wilcoxon_signed_rank(xc, yc).p);
          pc = b;
          std::snprintf(b, sizeof b, "%.4g", evalbench::wilcoxon_signed_rank(xm, ym).p);
          pm = b;
        }
      }
      const std::string coll = e.collisions == evalbench::kCollisionUndefined ? "undef" : std::to_string(e.collisions);
      std::printf("%-28s %-20s %6zu %5d %6s %12.4f %10.4f %10s %10s\n", fs::path(models[k]).filename().string().c_str(),
                  fs::path(path).filename().string().c_str(), e.records.size(), e.failures, coll.c_str(), e.mean_cost,
                  e.mean_mse, pc.c_str(), pm.c_str());
      if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        std::ofstream os(fs::path(report_dir) / (fs::path(models[k]).stem().string() + "_" +
                                                 fs::path(path).stem().string() + ".csv"));
        os << "id,status,cost,mse,collision\n";
        for (const evalbench::RecordEval& r : e.records) {
          os << r.id << ',' << (r.ok ? "ok" : "failed");
          if (r.ok) {
            char b[96];
            std::snprintf(b, sizeof b, ",%.17g,%.17g,", r.cost, r.mse);
            os << b << (r.collision == evalbench::kCollisionUndefined ? "undefined" : std::to_string(r.collision));
          } else {
            os << ",,,";
          }
          os << '\n';
        }
      }
    }
  }
  std::printf("p-values: paired Wilcoxon signed-rank against the first model.\n");
  return 0;
}

int export_cmd(const RunConfig&, const std::string& data, const std::string& out, int limit) {
  const Dataset d = load_dataset(data);
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "records.csv");
  csv << "id,image,adversarial,relabeled";
  for (int k = 0; k < d.latent_dim; ++k) csv << ",nu" << k;
  for (int t = 0; t < d.past_len; ++t)
    for (const char* f : {"x", "y", "v", "theta"}) csv << ",past" << t << "_" << f;
  for (int t = 0; t <= d.horizon; ++t)
    for (const char* f : {"x", "y", "v", "theta"}) csv << ",w" << t << "_" << f;
  csv << '\n';
  const std::size_t n = limit < 0 ? d.records.size() : std::min(d.records.size(), static_cast<std::size_t>(limit));
  char name[32];
  for (std::size_t i = 0; i < n; ++i) {
    const DataRecord& r = d.records[i];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    scene::write_pgm(fs::path(out) / name, r.image);
    csv << i << ',' << name << ',' << r.adversarial << ',' << r.relabeled;
    char b[32];
    for (float v : r.latent) {
      std::snprintf(b, sizeof b, ",%.9g", static_cast<double>(v));
      csv << b;
    }
    for (const auto* states : {&r.past, &r.future})
      for (const scene::State& s : *states)
        for (int k = 0; k < 4; ++k) {
          std::snprintf(b, sizeof b, ",%.9g", s[k]);
          csv << b;
        }
    csv << '\n';
  }
  std::cout << "exported " << n << " records to " << out << "\n";
  return 0;
}

int selftest_cmd(const RunConfig& c) {
  const selftest::Report r = selftest::run(c.seed, [](const selftest::Check& k) {
    std::printf("%s  %-10s %-32s err %.3g (tol %.3g)%s%s\n", k.pass ? "PASS" : "FAIL", k.suite.c_str(),
                k.name.c_str(), k.error, k.tolerance, k.detail.empty() ? "" : "  ", k.detail.c_str());
    std::fflush(stdout);
  });
  std::printf("selftest: %zu checks, %d failed, %.1f s\n", r.checks.size(), r.failures(), r.seconds);
  return r.pass() ? 0 : kNumericError;
}

int run_benchmark_cmd(RunConfig c, bool force) {
  if (selftest_cmd(c) != 0) {
    if (!force) {
      std::cerr << "selftest failed; refusing to run the benchmark (use --force to override)\n";
      return kNumericError;
    }
    std::cerr << "selftest failed; continuing because of --force\n";
  }
  c.bench.log = log_line;
  fs::create_directories(c.out_dir);
  {
    std::ofstream os(c.out_dir / "config.toml");
    os << dump_config(c);
  }
  const evalbench::BenchmarkResult r = evalbench::run_benchmark(c.bench, c.seed);
  std::cout << evalbench::summary_table(r);
  std::printf("adversarial test split: mean J original %.6f, adversarial %.6f, ratio %.6f\n",
              r.adv_test.mean_cost_original, r.adv_test.mean_cost_adversarial,
              r.adv_test.mean_cost_adversarial / r.adv_test.mean_cost_original);
  std::cout << "wrote " << (c.out_dir / "summary.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"taskaug: task-driven adversarial data augmentation for perception-based MPC"};
  app.require_subcommand(1);
  Common common;
  int rc = 0;

  auto* gen = app.add_subcommand("gen-scenarios", "Generate a dataset split");
  common.attach(gen);
  std::string split, out, vae_flag;
  std::optional<int> count;
  gen->add_option("--split", split, "train | test | ood | added")
      ->required()
      ->check(CLI::IsMember({"train", "test", "ood", "added"}));
  gen->add_option("--count", count, "Number of records (default from the configuration)");
  gen->add_option("--out", out, "Output dataset (default <out_dir>/<split>.advd)");
  gen->add_option("--vae", vae_flag, "VAE checkpoint used for latents in VAE mode");
  gen->callback([&] { rc = gen_scenarios(common.load(), split, count, out, vae_flag); });

  auto* tv = app.add_subcommand("train-vae", "Train the VAE on a dataset's images");
  common.attach(tv);
  std::string data;
  std::vector<std::string> encode;
  tv->add_option("--data", data, "Training dataset")->required();
  tv->add_option("--encode", encode, "Datasets to re-encode in place with the trained encoder");
  tv->add_option("--out", out, "Checkpoint (default <out_dir>/vae.advw)");
  tv->callback([&] { rc = train_vae_cmd(common.load(), data, encode, out); });

  auto* tt = app.add_subcommand("train-task", "Train the task model on the union of datasets");
  common.attach(tt);
  std::vector<std::string> datas;
  tt->add_option("--data", datas, "Training datasets")->required();
  tt->add_option("--out", out, "Checkpoint (default <out_dir>/task.advw)");
  tt->add_option("--vae", vae_flag, "VAE checkpoint (VAE mode)");
  tt->callback([&] { rc = train_task_cmd(common.load(), datas, out, vae_flag); });

  auto* rt = app.add_subcommand("retrain", "Retrain from the shared initialisation on base + extra data");
  common.attach(rt);
  std::string base;
  std::vector<std::string> extra;
  rt->add_option("--base", base, "Original training dataset")->required();
  rt->add_option("--extra", extra, "Added, augmented or adversarial datasets")->required();
  rt->add_option("--out", out, "Checkpoint (default <out_dir>/task.advw)");
  rt->add_option("--vae", vae_flag, "VAE checkpoint (VAE mode)");
  rt->callback([&] {
    std::vector<std::string> all{base};
    all.insert(all.end(), extra.begin(), extra.end());
    rc = train_task_cmd(common.load(), all, out, vae_flag);
  });

  auto* sa = app.add_subcommand("synth-adv", "Synthesise adversarial records against a frozen task model");
  common.attach(sa);
  std::string model;
  sa->add_option("--data", data, "Source dataset")->required();
  sa->add_option("--model", model, "Task model checkpoint (default <out_dir>/task.advw)");
  sa->add_option("--out", out, "Output dataset (default <out_dir>/adv.advd)");
  sa->add_option("--vae", vae_flag, "VAE checkpoint (VAE mode)");
  sa->callback([&] { rc = synth_adv_cmd(common.load(), data, model, out, vae_flag); });

  auto* au = app.add_subcommand("augment", "Contrast/brightness/blur copies of a dataset");
  common.attach(au);
  au->add_option("--data", data, "Source dataset")->required();
  au->add_option("--count", count, "Number of records (default data.n_extra)");
  au->add_option("--out", out, "Output dataset (default <out_dir>/augment.advd)");
  au->callback([&] { rc = augment_cmd(common.load(), data, count, out); });

  auto* ev = app.add_subcommand("eval", "Evaluate task models on datasets");
  common.attach(ev);
  std::vector<std::string> models;
  std::string report_dir;
  ev->add_option("--model", models, "Task model checkpoints; the first is the reference")->required();
  ev->add_option("--data", datas, "Datasets")->required();
  ev->add_option("--report-dir", report_dir, "Write per-record CSVs here");
  ev->add_option("--vae", vae_flag, "VAE checkpoint (VAE mode)");
  ev->callback([&] { rc = eval_cmd(common.load(), models, datas, report_dir, vae_flag); });

  auto* ex = app.add_subcommand("export", "Write PGM images and a CSV of a dataset");
  common.attach(ex);
  int limit = -1;
  ex->add_option("--data", data, "Dataset")->required();
  ex->add_option("--out", out, "Output directory")->required();
  ex->add_option("--limit", limit, "Export at most this many records");
  ex->callback([&] { rc = export_cmd(common.load(), data, out, limit); });

  auto* st = app.add_subcommand("selftest", "Gradient, QP and oracle property checks");
  common.attach(st);
  st->callback([&] { rc = selftest_cmd(common.load()); });

  auto* rb = app.add_subcommand("run-benchmark", "Full four-scheme benchmark");
  common.attach(rb);
  bool force = false;
  rb->add_flag("--force", force, "Run even if the selftest fails");
  rb->callback([&] { rc = run_benchmark_cmd(common.load(), force); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return rc;
}
