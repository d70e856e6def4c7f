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

#include "taskaug/taskmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "taskaug/error.hpp"
#include "taskaug/rng.hpp"

namespace taskaug::taskmodel {

namespace {

// Input normalisation of past states and output scale of predicted offsets.
constexpr float kInScale[4] = {0.01f, 0.01f, 0.1f, 1.0f};
constexpr float kOutScale[4] = {10.0f, 10.0f, 2.0f, 0.5f};

struct Layout {
  Shape shape;
  int fan_in;
};

int compact_side(int s) { return ((s - 5) / 5 + 1 + 1) / 2; }

std::vector<std::pair<std::string, Layout>> perception_layout(const TaskModelConfig& cfg) {
  if (cfg.perception == Perception::VaeEncoder) return {};
  if (cfg.image_size < 10) throw ShapeError("task model: image size too small");
  const int c = cfg.compact_channels;
  const int q = compact_side(cfg.image_size);
  const int flat = c * q * q;
  return {
      {"perc.c1.w", {{c, 1, 5, 5}, 25}},
      {"perc.c1.b", {{c}, 25}},
      {"perc.c2.w", {{c, c, 3, 3}, c * 9}},
      {"perc.c2.b", {{c}, c * 9}},
      {"perc.fc.w", {{flat, cfg.embed_dim}, flat}},
      {"perc.fc.b", {{cfg.embed_dim}, flat}},
  };
}

std::vector<std::pair<std::string, Layout>> planner_layout(const TaskModelConfig& cfg) {
  const int z = cfg.embed_dim, pw = cfg.past_len * 4, out = cfg.horizon * 4;
  const int* h = cfg.hidden;
  const int in = z + pw;
  return {
      {"plan.l1.wz", {{z, h[0]}, in}},
      {"plan.l1.wp", {{pw, h[0]}, in}},
      {"plan.l1.b", {{h[0]}, in}},
      {"plan.l2.w", {{h[0], h[1]}, h[0]}},
      {"plan.l2.b", {{h[1]}, h[0]}},
      {"plan.l3.w", {{h[1], h[2]}, h[1]}},
      {"plan.l3.b", {{h[2]}, h[1]}},
      {"plan.head.w", {{h[2], out}, h[2]}},
      {"plan.head.b", {{out}, h[2]}},
  };
}

void check_config(const TaskModelConfig& cfg) {
  if (cfg.past_len < 1 || cfg.horizon < 1 || cfg.embed_dim < 1) {
    throw ShapeError("task model: P, F and embedding size must be positive");
  }
  if (cfg.perception == Perception::VaeEncoder &&
      (cfg.vae.image_size != cfg.image_size || cfg.vae.latent_dim != cfg.embed_dim)) {
    throw ShapeError("task model: VAE encoder perception needs image size " +
                     std::to_string(cfg.vae.image_size) + " and embedding " + std::to_string(cfg.vae.latent_dim));
  }
}

std::vector<std::string> vae_encoder_names() {
  return {"enc.c1.w", "enc.c1.b", "enc.c2.w", "enc.c2.b", "enc.c3.w", "enc.c3.b", "enc.mu.w", "enc.mu.b"};
}

void fill_past(float* dst, std::span<const State> past) {
  for (std::size_t t = 0; t < past.size(); ++t)
    for (int k = 0; k < 4; ++k) dst[t * 4 + static_cast<std::size_t>(k)] = static_cast<float>(past[t][k]);
}

void check_past(std::span<const State> past, const TaskModelConfig& cfg) {
  if (static_cast<int>(past.size()) != cfg.past_len) {
    throw ShapeError("task model: expected " + std::to_string(cfg.past_len) + " past states, got " +
                     std::to_string(past.size()));
  }
}

}  // namespace

ParamStore init_task_model(const TaskModelConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  std::mt19937_64 rng = stream_rng(seed, 0x746D);
  ParamStore p;
  if (cfg.perception == Perception::VaeEncoder) {
    const ParamStore v = vae::init_vae(cfg.vae, seed);
    for (const std::string& n : vae_encoder_names()) p.add(n, v.at(n));
  }
  for (const auto& [name, l] : perception_layout(cfg)) p.add(name, init_uniform(l.shape, l.fan_in, rng));
  for (const auto& [name, l] : planner_layout(cfg)) p.add(name, init_uniform(l.shape, l.fan_in, rng));
  return p;
}

ParamStore init_task_model(const TaskModelConfig& cfg, std::uint64_t seed, const ParamStore& vae_params) {
  ParamStore p = init_task_model(cfg, seed);
  if (cfg.perception == Perception::VaeEncoder) {
    vae::check_params(vae_params, cfg.vae);
    for (const std::string& n : vae_encoder_names()) p.at(n) = vae_params.at(n);
  }
  return p;
}

void check_params(const ParamStore& params, const TaskModelConfig& cfg) {
  check_config(cfg);
  auto need = [&](const std::string& name, const Shape* shape) {
    if (!params.contains(name)) throw DataError("task model checkpoint lacks tensor " + name);
    if (shape && params.at(name).shape() != *shape) {
      throw ShapeError("task model tensor " + name + " has shape " + shape_str(params.at(name).shape()) +
                       ", expected " + shape_str(*shape));
    }
  };
  if (cfg.perception == Perception::VaeEncoder) {
    for (const std::string& n : vae_encoder_names()) need(n, nullptr);
  }
  for (const auto& [name, l] : perception_layout(cfg)) need(name, &l.shape);
  for (const auto& [name, l] : planner_layout(cfg)) need(name, &l.shape);
}

State current_state(std::span<const State> past, double dt) {
  if (past.empty()) throw ShapeError("current_state: empty past");
  State s = past.back();
  s[0] += dt * s[2] * std::cos(s[3]);
  s[1] += dt * s[2] * std::sin(s[3]);
  return s;
}

ad::Var embed(const nn::VarMap& p, ad::Var images, const TaskModelConfig& cfg) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != cfg.image_size || s[3] != cfg.image_size) {
    throw ShapeError("task model: expected images [B,1," + std::to_string(cfg.image_size) + "," +
                     std::to_string(cfg.image_size) + "], got " + shape_str(s));
  }
  if (cfg.perception == Perception::VaeEncoder) return vae::encode_mean(p, images, cfg.vae);
  const int B = s[0];
  ad::Var h = ad::relu(ad::conv2d(images, p.at("perc.c1.w"), p.at("perc.c1.b"), {5, 0}));
  h = ad::relu(ad::conv2d(h, p.at("perc.c2.w"), p.at("perc.c2.b"), {2, 1}));
  const Shape& hs = h.shape();
  h = ad::reshape(h, {B, hs[1] * hs[2] * hs[3]});
  return nn::linear(h, p.at("perc.fc.w"), p.at("perc.fc.b"));
}

ad::Var forward(const nn::VarMap& p, ad::Var images, const Tensor& past, const TaskModelConfig& cfg) {
  check_config(cfg);
  const int B = images.shape().at(0);
  const int P = cfg.past_len, F = cfg.horizon;
  if (past.shape() != Shape{B, P * 4}) {
    throw ShapeError("task model: past " + shape_str(past.shape()) + ", expected [" + std::to_string(B) + "," +
                     std::to_string(P * 4) + "]");
  }
  ad::Graph& g = *images.graph;
  Tensor pn(past.shape());
  for (std::size_t i = 0; i < past.size(); ++i) pn[i] = past[i] * kInScale[i % 4];

  ad::Var z = embed(p, images, cfg);
  ad::Var h = ad::add(ad::add(ad::matmul(z, p.at("plan.l1.wz")), ad::matmul(g.constant(std::move(pn)), p.at("plan.l1.wp"))),
                      p.at("plan.l1.b"));
  h = ad::relu(h);
  h = ad::relu(nn::linear(h, p.at("plan.l2.w"), p.at("plan.l2.b")));
  h = ad::relu(nn::linear(h, p.at("plan.l3.w"), p.at("plan.l3.b")));
  ad::Var out = nn::linear(h, p.at("plan.head.w"), p.at("plan.head.b"));

  // Offsets are taken from the constant-velocity extrapolation of the last past state.
  Tensor scale({B, F * 4}), base({B, F * 4});
  for (int b = 0; b < B; ++b) {
    const float* last = past.ptr() + static_cast<std::size_t>(b * P * 4 + (P - 1) * 4);
    const double vx = last[2] * std::cos(double(last[3])), vy = last[2] * std::sin(double(last[3]));
    for (int t = 0; t < F; ++t) {
      const double ahead = (t + 2) * cfg.dt;  // row t is w_{t+1}; the last past state sits at t = -1
      float* bt = base.ptr() + static_cast<std::size_t>(b * F * 4 + t * 4);
      bt[0] = static_cast<float>(last[0] + ahead * vx);
      bt[1] = static_cast<float>(last[1] + ahead * vy);
      bt[2] = last[2];
      bt[3] = last[3];
      for (int k = 0; k < 4; ++k) scale[static_cast<std::size_t>(b * F * 4 + t * 4 + k)] = kOutScale[k];
    }
  }
  return ad::add(ad::mul(out, g.constant(std::move(scale))), g.constant(std::move(base)));
}

std::vector<State> predict_waypoints(const ParamStore& params, const Tensor& image,
                                     std::span<const State> past, const TaskModelConfig& cfg) {
  check_past(past, cfg);
  const int S = cfg.image_size;
  if (image.size() != static_cast<std::size_t>(S * S)) {
    throw ShapeError("task model: image " + shape_str(image.shape()) + " does not match size " + std::to_string(S));
  }
  ad::Graph g;
  const nn::VarMap p = params.bind(g, false);
  Tensor pt({1, cfg.past_len * 4});
  fill_past(pt.ptr(), past);
  const Tensor& y = forward(p, g.constant(image.reshaped({1, 1, S, S})), pt, cfg).value();
  std::vector<State> out{current_state(past, cfg.dt)};
  for (int t = 0; t < cfg.horizon; ++t) {
    State s;
    for (int k = 0; k < 4; ++k) s[k] = y[static_cast<std::size_t>(t * 4 + k)];
    out.push_back(s);
  }
  return out;
}

double waypoint_mse(std::span<const State> pred, std::span<const State> label) {
  if (pred.size() != label.size()) {
    throw ShapeError("waypoint_mse: " + std::to_string(pred.size()) + " vs " + std::to_string(label.size()) +
                     " states");
  }
  if (pred.empty()) return 0.0;
  double acc = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) acc += (pred[t] - label[t]).squaredNorm();
  return acc / static_cast<double>(pred.size() * 4);
}

ad::Var batch_loss(const nn::VarMap& p, ad::Graph& g, std::span<const DataRecord* const> batch,
                   const TaskModelConfig& cfg) {
  if (batch.empty()) throw ShapeError("task model: empty batch");
  const int B = static_cast<int>(batch.size());
  const int P = cfg.past_len, F = cfg.horizon, S = cfg.image_size;
  const std::size_t px = static_cast<std::size_t>(S * S);
  Tensor images({B, 1, S, S}), past({B, P * 4}), label({B, F * 4});
  double c0 = 0;
  for (int b = 0; b < B; ++b) {
    const DataRecord& r = *batch[static_cast<std::size_t>(b)];
    if (r.image.size() != px) throw ShapeError("task model: record image " + shape_str(r.image.shape()));
    check_past(r.past, cfg);
    if (static_cast<int>(r.future.size()) != F + 1) {
      throw ShapeError("task model: expected " + std::to_string(F + 1) + " label states, got " +
                       std::to_string(r.future.size()));
    }
    std::copy(r.image.data().begin(), r.image.data().end(), images.ptr() + static_cast<std::size_t>(b) * px);
    fill_past(past.ptr() + static_cast<std::size_t>(b * P * 4), r.past);
    fill_past(label.ptr() + static_cast<std::size_t>(b * F * 4), std::span(r.future).subspan(1));
    c0 += (current_state(r.past, cfg.dt) - r.future[0]).squaredNorm();
  }
  ad::Var pred = forward(p, g.constant(std::move(images)), past, cfg);
  const double denom = static_cast<double>(B) * (F + 1) * 4;
  return ad::affine(ad::mse(pred, g.constant(std::move(label))), static_cast<float>(F) / static_cast<float>(F + 1),
                    static_cast<float>(c0 / denom));
}

double dataset_loss(const ParamStore& params, std::span<const DataRecord> data, const TaskModelConfig& cfg) {
  if (data.empty()) return 0.0;
  double total = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += kChunk) {
    const std::size_t b1 = std::min(data.size(), b0 + kChunk);
    std::vector<const DataRecord*> batch;
    for (std::size_t i = b0; i < b1; ++i) batch.push_back(&data[i]);
    ad::Graph g;
    const nn::VarMap p = params.bind(g, false);
    total += batch_loss(p, g, batch, cfg).value().item() * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

TrainTaskResult train(std::span<const DataRecord> data, const TaskModelConfig& cfg,
                      const TrainTaskOptions& opts, ParamStore init) {
  if (data.empty()) throw DataError("task model train: empty dataset");
  check_params(init, cfg);

  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 split_rng = stream_rng(opts.seed, 0x7370);
  std::shuffle(idx.begin(), idx.end(), split_rng);
  const std::size_t n_val = data.size() >= 10 ? static_cast<std::size_t>(std::floor(opts.val_fraction * data.size())) : 0;
  TrainTaskResult res;
  std::vector<DataRecord> val;
  std::vector<const DataRecord*> fit;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i < n_val) {
      val.push_back(data[idx[i]]);
      res.val_indices.push_back(idx[i]);
    } else {
      fit.push_back(&data[idx[i]]);
    }
  }
  std::sort(fit.begin(), fit.end());
  std::vector<DataRecord> fit_copy;
  if (val.empty()) {
    for (const DataRecord* r : fit) fit_copy.push_back(*r);
  }
  const std::vector<DataRecord>& stop_set = val.empty() ? fit_copy : val;

  ParamStore params = std::move(init);
  Adam adam(params, {opts.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 shuffle_rng = stream_rng(opts.seed, 0x5348);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, opts.batch_size));
  res.best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::shuffle(fit.begin(), fit.end(), shuffle_rng);
    double total = 0;
    try {
      for (std::size_t b0 = 0; b0 < fit.size(); b0 += bs) {
        const std::size_t b1 = std::min(fit.size(), b0 + bs);
        ad::Graph g;
        const nn::VarMap p = params.bind(g, true);
        ad::Var loss = batch_loss(p, g, std::span(fit).subspan(b0, b1 - b0), cfg);
        const double lv = loss.value().item();
        if (!std::isfinite(lv)) throw NumericError("non-finite loss");
        g.backward(loss);
        adam.step(params, nn::collect_grads(g, p));
        total += lv * static_cast<double>(b1 - b0);
      }
    } catch (const NumericError& err) {
      throw NumericError("task model train: " + std::string(err.what()) + " at epoch " + std::to_string(epoch));
    }
    res.train_loss.push_back(total / static_cast<double>(fit.size()));
    const double v = dataset_loss(params, stop_set, cfg);
    if (!std::isfinite(v)) {
      throw NumericError("task model train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    res.val_loss.push_back(v);
    if (v < res.best_val) {
      res.best_val = v;
      res.best_epoch = epoch;
      res.params = params;
    } else if (epoch - res.best_epoch >= opts.patience) {
      break;
    }
  }
  if (res.best_epoch < 0) res.params = std::move(params);
  return res;
}

}  // namespace taskaug::taskmodel
