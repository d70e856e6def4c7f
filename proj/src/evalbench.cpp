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


#include "taskaug/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "taskaug/error.hpp"
#include "taskaug/rng.hpp"

namespace taskaug::evalbench {

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Original: return "original";
    case Scheme::DataAdded: return "data_added";
    case Scheme::DataAugment: return "data_augment";
    case Scheme::TaskDriven: return "task_driven";
  }
  return "?";
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Orig: return "orig";
    case Split::Ood: return "ood";
    case Split::Adv: return "adv";
  }
  return "?";
}

// ---- augmentation ----

AugmentParams draw_augment_params(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  AugmentParams a;
  // Every parameter is drawn so the stream position does not depend on the coins.
  a.contrast = coin(rng);
  a.contrast_scale = std::uniform_real_distribution<double>(0.7, 1.3)(rng);
  a.brightness = coin(rng);
  a.brightness_offset = std::uniform_real_distribution<double>(-0.15, 0.15)(rng);
  a.blur = coin(rng);
  a.blur_kernel = coin(rng) ? 5 : 3;
  return a;
}

Tensor box_blur(const Tensor& image, int kernel) {
  const Shape& s = image.shape();
  if (s.size() < 2) throw ShapeError("box_blur: need at least 2 dims, got " + shape_str(s));
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("box_blur: kernel must be odd and positive");
  const int H = s[s.size() - 2], W = s[s.size() - 1];
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t planes = plane ? image.size() / plane : 0;
  const int r = kernel / 2;
  Tensor out(s);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* in = image.data().data() + p * plane;
    float* o = out.data().data() + p * plane;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, H - 1), xx = std::clamp(x + dx, 0, W - 1);
            acc += in[static_cast<std::size_t>(yy) * W + xx];
          }
        o[static_cast<std::size_t>(y) * W + x] = static_cast<float>(acc / (kernel * kernel));
      }
  }
  return out;
}

Tensor apply_augment(const Tensor& image, const AugmentParams& a) {
  Tensor out = image;
  if (a.contrast && out.size() > 0) {
    double mean = 0;
    for (float v : out.data()) mean += v;
    mean /= static_cast<double>(out.size());
    for (float& v : out.data()) v = static_cast<float>(mean + a.contrast_scale * (v - mean));
  }
  if (a.brightness)
    for (float& v : out.data()) v = static_cast<float>(v + a.brightness_offset);
  if (a.blur) out = box_blur(out, a.blur_kernel);
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensor augment_image(const Tensor& image, std::mt19937_64& rng) {
  return apply_augment(image, draw_augment_params(rng));
}

// ---- statistics ----

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("wilcoxon: lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 5) throw ShapeError("wilcoxon: need at least 5 pairs, got " + std::to_string(x.size()));
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (!std::isfinite(v)) throw NumericError("wilcoxon: non-finite difference at " + std::to_string(i));
    if (v != 0.0) d.push_back(v);
  }
  WilcoxonResult res;
  const int n = static_cast<int>(d.size());
  res.n_eff = n;
  if (n == 0) return res;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled ranks keep tied averages integral.
  std::vector<int> rank2(static_cast<std::size_t>(n));
  double tie_term = 0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int t = j - i + 1;
    for (int k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;
    tie_term += static_cast<double>(t) * t * t - t;
    i = j + 1;
  }
  long w2_plus = 0, w2_minus = 0;
  for (int i = 0; i < n; ++i) (d[i] > 0 ? w2_plus : w2_minus) += rank2[i];
  res.w_plus = w2_plus / 2.0;
  res.w_minus = w2_minus / 2.0;
  const long w2 = std::min(w2_plus, w2_minus);

  if (n <= 20) {
    res.exact = true;
    const long total = w2_plus + w2_minus;
    std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
    count[0] = 1;
    long reach = 0;
    for (int r : rank2) {
      for (long s = reach; s >= 0; --s)
        if (count[s]) count[s + r] += count[s];
      reach += r;
    }
    std::uint64_t tail = 0;
    for (long s = 0; s <= w2; ++s) tail += count[s];
    const double patterns = std::ldexp(1.0, n);
    res.p = std::min(1.0, 2.0 * static_cast<double>(tail) / patterns);
    return res;
  }
  const double nn = n;
  const double mean = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0) return res;
  const double z = (std::abs(w2 / 2.0 - mean) - 0.5) / std::sqrt(var);
  res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

// ---- evaluation ----

void aggregate(SplitEval& e, RendererMode mode) {
  e.evaluated = 0;
  e.failures = 0;
  double cost = 0, mse = 0;
  int coll = 0;
  for (const RecordEval& r : e.records) {
    if (!r.ok) {
      ++e.failures;
      continue;
    }
    ++e.evaluated;
    cost += r.cost;
    mse += r.mse;
    if (r.collision > 0) coll += r.collision;
  }
  e.mean_cost = e.evaluated ? cost / e.evaluated : std::numeric_limits<double>::quiet_NaN();
  e.mean_mse = e.evaluated ? mse / e.evaluated : std::numeric_limits<double>::quiet_NaN();
  e.collisions = mode == RendererMode::Analytic ? coll : kCollisionUndefined;
}

SplitEval evaluate_model(const ParamStore& params, std::span<const DataRecord> split,
                         const adversary::Pipeline& pl) {
  if (split.empty()) throw ShapeError("evaluate_model: empty split");
  adversary::Pipeline p = pl;
  p.task = &params;
  SplitEval out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const DataRecord& r = split[i];
    RecordEval e;
    e.id = i;
    try {
      const adversary::CostEval c = adversary::task_cost(p, r.image, r.past, adversary::constraint_scene(p, r));
      e.cost = c.cost;
      e.mse = taskmodel::waypoint_mse(c.waypoints, r.future);
      if (pl.mode == RendererMode::Analytic) e.collision = scene::check_collisions(c.solution.states, r.scenario);
      e.ok = true;
    } catch (const NumericError& ex) {
      e.error = ex.what();
    }
    out.records.push_back(std::move(e));
  }
  aggregate(out, pl.mode);
  return out;
}

// ---- benchmark ----

void BenchmarkConfig::validate() const {
  if (n_train < 1 || n_test < 1 || n_ood < 1 || n_extra < 0) throw ShapeError("benchmark: split sizes must be positive");
  if (task.horizon != mpc.horizon) throw ShapeError("benchmark: task horizon and MPC horizon differ");
  if (task.dt != mpc.dt) throw ShapeError("benchmark: task dt and MPC dt differ");
  if (adversary.steps < 1) throw ShapeError("benchmark: K must be at least 1");
  if (adversary.kappa < 0) throw ShapeError("benchmark: kappa must be non-negative");
  if (mode == RendererMode::Vae) {
    if (task.perception != taskmodel::Perception::VaeEncoder)
      throw ShapeError("benchmark: VAE mode needs VAE-encoder perception");
    if (task.image_size != vae.image_size || task.embed_dim != vae.latent_dim)
      throw ShapeError("benchmark: task model and VAE sizes differ");
  } else if (task.image_size != image_size) {
    throw ShapeError("benchmark: task image size differs from the render size");
  }
}

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string("stage ") + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

AdversaryStats stats_of(const adversary::SynthResult& r) {
  AdversaryStats s;
  s.records = r.records.size();
  s.errors = r.errors.size();
  for (const adversary::AdvRecord& a : r.records) {
    s.mean_cost_original += a.cost_original;
    s.mean_cost_adversarial += a.cost_adversarial;
    if (a.best_step == 0) ++s.kept_original;
  }
  if (s.records) {
    s.mean_cost_original /= static_cast<double>(s.records);
    s.mean_cost_adversarial /= static_cast<double>(s.records);
  }
  return s;
}

std::vector<DataRecord> records_of(const adversary::SynthResult& r, std::size_t limit) {
  std::vector<DataRecord> out;
  for (const adversary::AdvRecord& a : r.records) {
    if (out.size() == limit) break;
    out.push_back(a.record);
  }
  return out;
}

double paired_p(const SplitEval& a, const SplitEval& b, bool cost) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.records.size() && i < b.records.size(); ++i) {
    if (!a.records[i].ok || !b.records[i].ok) continue;
    x.push_back(cost ? a.records[i].cost : a.records[i].mse);
    y.push_back(cost ? b.records[i].cost : b.records[i].mse);
  }
  if (x.size() < 5) return std::numeric_limits<double>::quiet_NaN();
  return wilcoxon_signed_rank(x, y).p;
}

}  // namespace

std::vector<DataRecord> generate_split(const BenchmarkConfig& cfg, DataStream stream, int count,
                                       std::uint64_t seed, int render_size) {
  std::mt19937_64 rng = stream_rng(seed, 0x4454, static_cast<std::uint64_t>(stream));
  const scene::Distribution dist = stream == DataStream::Ood ? scene::Distribution::OoD : scene::Distribution::Train;
  // Smaller targets are rendered at image_size and area-averaged down.
  const bool downsample = render_size < cfg.image_size;
  scene::RenderConfig rc;
  rc.size = downsample ? cfg.image_size : render_size;
  std::vector<DataRecord> out;
  long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 100L * count + 100) throw NumericError("too many blocked scenarios");
    const scene::Scenario s = scene::sample_scenario(dist, rng, cfg.scene);
    try {
      DataRecord r = make_analytic_record(s, cfg.task.past_len, cfg.task.horizon, cfg.planner, rc);
      if (downsample) r.image = quantize_image(vae::downsample_area(r.image, render_size));
      out.push_back(std::move(r));
    } catch (const NumericError&) {
    }
  }
  return out;
}

std::vector<DataRecord> augment_records(std::span<const DataRecord> records, int count, std::uint64_t seed) {
  std::vector<DataRecord> out;
  if (count > 0 && records.empty()) throw ShapeError("augment: no records to augment");
  for (int i = 0; i < count; ++i) {
    const DataRecord& src = records[static_cast<std::size_t>(i) % records.size()];
    std::mt19937_64 rng = stream_rng(seed, 0x4147, static_cast<std::uint64_t>(i));
    DataRecord r = src;
    r.image = quantize_image(augment_image(src.image, rng));
    out.push_back(std::move(r));
  }
  return out;
}

ParamStore initial_task_params(const BenchmarkConfig& cfg, std::uint64_t seed, const ParamStore* vae_params) {
  const std::uint64_t s = splitmix64(seed ^ 0x494E'4954);
  if (cfg.task.perception == taskmodel::Perception::VaeEncoder) {
    if (!vae_params) throw DataError("VAE-encoder perception needs VAE parameters");
    return taskmodel::init_task_model(cfg.task, s, *vae_params);
  }
  return taskmodel::init_task_model(cfg.task, s);
}

taskmodel::TrainTaskOptions train_options(const BenchmarkConfig& cfg, std::uint64_t seed) {
  taskmodel::TrainTaskOptions o = cfg.train;
  o.seed = splitmix64(seed ^ 0x5452'4149);
  return o;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = Clock::now();
  auto log = [&](const std::string& msg) {
    if (!cfg.log) return;
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    cfg.log("[" + fixed(s, 1) + "s] " + msg);
  };
  const bool vae_mode = cfg.mode == RendererMode::Vae;
  const int S = vae_mode ? cfg.vae.image_size : cfg.image_size;
  const std::filesystem::path& dir = cfg.out_dir;
  if (!dir.empty()) std::filesystem::create_directories(dir);

  BenchmarkResult res;
  BenchmarkData& d = res.data;
  auto save = [&](const std::string& name, const std::vector<DataRecord>& recs) {
    if (dir.empty()) return;
    Dataset ds;
    ds.mode = cfg.mode;
    ds.width = ds.height = S;
    ds.past_len = cfg.task.past_len;
    ds.horizon = cfg.task.horizon;
    ds.latent_dim = recs.empty() ? 0 : static_cast<int>(recs.front().latent.size());
    ds.records = recs;
    save_dataset(dir / (name + ".advd"), ds);
  };

  stage("generate", [&] {
    d.train = generate_split(cfg, DataStream::Train, cfg.n_train, seed, S);
    d.test = generate_split(cfg, DataStream::Test, cfg.n_test, seed, S);
    d.ood = generate_split(cfg, DataStream::Ood, cfg.n_ood, seed, S);
    d.added = generate_split(cfg, DataStream::Added, cfg.n_extra, seed, S);
    return 0;
  });
  log("generated " + std::to_string(d.train.size()) + " train, " + std::to_string(d.test.size()) + " test, " +
      std::to_string(d.ood.size()) + " ood, " + std::to_string(d.added.size()) + " added");

  ParamStore vae_params;
  if (vae_mode) {
    stage("train-vae", [&] {
      std::vector<Tensor> images;
      for (const DataRecord& r : d.train) images.push_back(r.image);
      vae::TrainVaeOptions o = cfg.vae_train;
      o.seed = splitmix64(seed ^ 0x5641'4500);
      vae_params = vae::train_vae(images, cfg.vae, o).params;
      for (auto* split : {&d.train, &d.test, &d.ood, &d.added})
        for (DataRecord& r : *split) r.latent = vae::encode_image(vae_params, r.image, cfg.vae).first;
      if (!dir.empty()) save_checkpoint(dir / "vae.advw", vae_params);
      return 0;
    });
    log("trained VAE");
  }
  save("orig_train", d.train);
  save("orig_test", d.test);
  save("ood_test", d.ood);
  save("added", d.added);

  const ParamStore init =
      stage("init", [&] { return initial_task_params(cfg, seed, vae_mode ? &vae_params : nullptr); });
  const taskmodel::TrainTaskOptions topts = train_options(cfg, seed);

  std::array<taskmodel::TrainTaskResult, 4> trained;
  std::array<std::size_t, 4> train_sizes{};
  auto fit = [&](Scheme s, const std::vector<DataRecord>& data) {
    const int k = static_cast<int>(s);
    trained[k] = stage(("train-" + std::string(scheme_name(s))).c_str(),
                       [&] { return taskmodel::train(data, cfg.task, topts, init); });
    train_sizes[k] = data.size();
    if (!dir.empty()) save_checkpoint(dir / ("task_" + std::string(scheme_name(s)) + ".advw"), trained[k].params);
    log("trained " + std::string(scheme_name(s)) + " on " + std::to_string(data.size()) + " records, best epoch " +
        std::to_string(trained[k].best_epoch) + ", val " + fixed(trained[k].best_val, 4));
  };
  fit(Scheme::Original, d.train);

  adversary::Pipeline pl;
  pl.mode = cfg.mode;
  pl.render.size = S;
  pl.vae = vae_mode ? &vae_params : nullptr;
  pl.vae_cfg = cfg.vae;
  pl.task = &trained[0].params;
  pl.task_cfg = cfg.task;
  pl.mpc = cfg.mpc;
  pl.planner = cfg.planner;

  stage("augment", [&] {
    d.augmented = augment_records(d.train, cfg.n_extra, seed);
    return 0;
  });
  save("augment", d.augmented);
  log("augmented " + std::to_string(d.augmented.size()) + " images");

  stage("synth-adv", [&] {
    adversary::AdversaryConfig acfg = cfg.adversary;
    acfg.per_record = std::max(1, (cfg.n_extra + cfg.n_train - 1) / cfg.n_train);
    if (cfg.n_extra > 0) {
      const adversary::SynthResult tr =
          adversary::synth_adversarial_dataset(d.train, pl, acfg, splitmix64(seed ^ 0x4144'5654));
      res.adv_train = stats_of(tr);
      d.adv_train = records_of(tr, static_cast<std::size_t>(cfg.n_extra));
    }
    acfg.per_record = 1;
    const adversary::SynthResult te =
        adversary::synth_adversarial_dataset(d.test, pl, acfg, splitmix64(seed ^ 0x4144'5645));
    res.adv_test = stats_of(te);
    d.adv_test = records_of(te, d.test.size());
    return 0;
  });
  save("adv_train", d.adv_train);
  save("adv_test", d.adv_test);
  log("synthesised " + std::to_string(d.adv_train.size()) + " adversarial train and " +
      std::to_string(d.adv_test.size()) + " adversarial test records; test J ratio " +
      fixed(res.adv_test.mean_cost_adversarial / res.adv_test.mean_cost_original, 4));

  auto with = [&](const std::vector<DataRecord>& extra) {
    std::vector<DataRecord> u = d.train;
    u.insert(u.end(), extra.begin(), extra.end());
    return u;
  };
  fit(Scheme::DataAdded, with(d.added));
  fit(Scheme::DataAugment, with(d.augmented));
  fit(Scheme::TaskDriven, with(d.adv_train));

  const std::array<const std::vector<DataRecord>*, 3> tests{&d.test, &d.ood, &d.adv_test};
  for (Scheme s : kSchemes) {
    SchemeReport rep;
    rep.scheme = s;
    const int k = static_cast<int>(s);
    rep.train_records = train_sizes[k];
    rep.best_epoch = trained[k].best_epoch;
    rep.best_val = trained[k].best_val;
    for (Split sp : kSplits) {
      rep.splits[static_cast<int>(sp)] = stage(("eval-" + std::string(scheme_name(s))).c_str(), [&] {
        return evaluate_model(trained[k].params, *tests[static_cast<int>(sp)], pl);
      });
    }
    res.reports.push_back(std::move(rep));
    log("evaluated " + std::string(scheme_name(s)));
  }
  for (SchemeReport& a : res.reports)
    for (const SchemeReport& b : res.reports) {
      if (a.scheme == b.scheme) continue;
      for (Split sp : kSplits) {
        const int i = static_cast<int>(sp);
        const std::string key = std::string(scheme_name(b.scheme)) + "/" + std::string(split_name(sp));
        a.wilcoxon_p[key + "/cost"] = paired_p(a.splits[i], b.splits[i], true);
        a.wilcoxon_p[key + "/mse"] = paired_p(a.splits[i], b.splits[i], false);
      }
    }

  if (!dir.empty()) {
    stage("write-reports", [&] {
      for (const SchemeReport& r : res.reports)
        write_text(dir / ("report_" + std::string(scheme_name(r.scheme)) + ".csv"), report_csv(r));
      write_text(dir / "summary.csv", summary_csv(res));
      write_text(dir / "latents.csv", latents_csv(d));
      return 0;
    });
  }
  log("done");
  return res;
}

const SchemeReport& report_for(const BenchmarkResult& r, Scheme s) {
  for (const SchemeReport& rep : r.reports)
    if (rep.scheme == s) return rep;
  throw DataError("benchmark result has no " + std::string(scheme_name(s)) + " report");
}

namespace {

const char* kGeometryNote = "# adv-split collisions are checked against the perturbed geometry scenario_of(nu_bar)\n";

std::string collision_str(int c) { return c == kCollisionUndefined ? "undefined" : std::to_string(c); }

}  // namespace

std::string summary_csv(const BenchmarkResult& r) {
  std::ostringstream os;
  os << kGeometryNote;
  os << "scheme,split,records,evaluated,failures,collisions,mean_cost,mean_mse,p_cost_vs_original,p_mse_vs_original\n";
  for (const SchemeReport& rep : r.reports)
    for (Split sp : kSplits) {
      const SplitEval& e = rep.splits[static_cast<int>(sp)];
      double pc = 1.0, pm = 1.0;
      if (rep.scheme != Scheme::Original) {
        const std::string key = "original/" + std::string(split_name(sp));
        pc = rep.wilcoxon_p.at(key + "/cost");
        pm = rep.wilcoxon_p.at(key + "/mse");
      }
      os << scheme_name(rep.scheme) << ',' << split_name(sp) << ',' << e.records.size() << ',' << e.evaluated << ','
         << e.failures << ',' << collision_str(e.collisions) << ',' << num(e.mean_cost) << ',' << num(e.mean_mse)
         << ',' << num(pc) << ',' << num(pm) << '\n';
    }
  return os.str();
}

std::string report_csv(const SchemeReport& r) {
  std::ostringstream os;
  os << kGeometryNote;
  os << "split,id,status,cost,mse,collision\n";
  for (Split sp : kSplits)
    for (const RecordEval& e : r.splits[static_cast<int>(sp)].records) {
      os << split_name(sp) << ',' << e.id << ',' << (e.ok ? "ok" : "failed") << ',';
      if (e.ok) {
        os << num(e.cost) << ',' << num(e.mse) << ',' << collision_str(e.collision) << '\n';
      } else {
        os << ",," << '\n';
      }
    }
  return os.str();
}

std::string latents_csv(const BenchmarkData& d) {
  std::ostringstream os;
  std::size_t dim = 0;
  for (const auto* s : {&d.train, &d.test, &d.ood, &d.added, &d.adv_train, &d.adv_test})
    if (!s->empty()) dim = std::max(dim, s->front().latent.size());
  os << "split,id";
  for (std::size_t k = 0; k < dim; ++k) os << ",nu" << k;
  os << '\n';
  const std::pair<const char*, const std::vector<DataRecord>*> splits[] = {
      {"train", &d.train},   {"orig", &d.test},         {"ood", &d.ood},
      {"added", &d.added},   {"adv_train", &d.adv_train}, {"adv", &d.adv_test}};
  for (const auto& [name, recs] : splits)
    for (std::size_t i = 0; i < recs->size(); ++i) {
      os << name << ',' << i;
      for (float v : (*recs)[i].latent) os << ',' << num(v);
      os << '\n';
    }
  return os.str();
}

std::string summary_table(const BenchmarkResult& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-13s %-5s %6s %5s %10s %10s %10s %10s\n", "scheme", "split", "coll", "fail",
                "cost", "mse", "p(cost)", "p(mse)");
  os << line;
  for (const SchemeReport& rep : r.reports)
    for (Split sp : kSplits) {
      const SplitEval& e = rep.splits[static_cast<int>(sp)];
      std::string pc = "-", pm = "-";
      if (rep.scheme != Scheme::Original) {
        const std::string key = "original/" + std::string(split_name(sp));
        pc = fixed(rep.wilcoxon_p.at(key + "/cost"), 4);
        pm = fixed(rep.wilcoxon_p.at(key + "/mse"), 4);
      }
      std::snprintf(line, sizeof line, "%-13s %-5s %6s %5d %10.3f %10.4f %10s %10s\n",
                    std::string(scheme_name(rep.scheme)).c_str(), std::string(split_name(sp)).c_str(),
                    collision_str(e.collisions).c_str(), e.failures, e.mean_cost, e.mean_mse, pc.c_str(), pm.c_str());
      os << line;
    }
  os << "p-values: paired Wilcoxon signed-rank against original.\n";
  os << "adv-split collisions use the perturbed geometry scenario_of(nu_bar).\n";
  return os.str();
}

}  // namespace taskaug::evalbench
