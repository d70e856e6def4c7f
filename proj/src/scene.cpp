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

#include "taskaug/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "taskaug/error.hpp"

namespace taskaug::scene {

namespace {

// Through memory: some optimisers drop a double->float->double round trip.
double as_float(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

bool clear_of(const Obstacle& ob, const Vec2& p, double clearance) {
  return ob.inflated(clearance).level(p) > 0;
}

bool inside_any(const std::vector<Obstacle>& obs, const Vec2& p) {
  for (const Obstacle& o : obs)
    if (o.level(p) <= 0) return true;
  return false;
}

bool segment_hits(const std::vector<Obstacle>& obs, const Vec2& a, const Vec2& b, double step) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int k = 0; k <= n; ++k) {
    if (inside_any(obs, a + (static_cast<double>(k) / n) * (b - a))) return true;
  }
  return false;
}

}  // namespace

Scenario sample_scenario(Distribution dist, std::mt19937_64& rng, const SceneConfig& cfg) {
  Scenario s;
  s.goal = {as_float(cfg.goal.x()), as_float(cfg.goal.y())};
  s.distribution = dist;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const Vec2 seg = s.goal - s.start;
  const Vec2 dir = seg.normalized();
  const Vec2 normal(-dir.y(), dir.x());
  // Longitudinal extent matching the Train centre box along the diagonal.
  const double f_lo = cfg.center_lo / cfg.goal.x(), f_hi = cfg.center_hi / cfg.goal.x();
  int rejections = 0;
  while (static_cast<int>(s.obstacles.size()) < cfg.n_obs) {
    Obstacle o;
    if (dist == Distribution::Train) {
      o.cx = uni(cfg.center_lo, cfg.center_hi);
      o.cy = uni(cfg.center_lo, cfg.center_hi);
      o.rx = uni(cfg.train_axis_lo, cfg.train_axis_hi);
      o.ry = uni(cfg.train_axis_lo, cfg.train_axis_hi);
    } else {
      const Vec2 c = s.start + uni(f_lo, f_hi) * seg + uni(-cfg.ood_lateral, cfg.ood_lateral) * normal;
      o.cx = c.x();
      o.cy = c.y();
      o.rx = uni(cfg.ood_axis_lo, cfg.ood_axis_hi);
      o.ry = uni(cfg.ood_axis_lo, cfg.ood_axis_hi);
    }
    o.cx = as_float(o.cx);
    o.cy = as_float(o.cy);
    o.rx = as_float(o.rx);
    o.ry = as_float(o.ry);
    if (clear_of(o, s.start, cfg.clearance) && clear_of(o, s.goal, cfg.clearance)) {
      s.obstacles.push_back(o);
    } else if (++rejections >= cfg.max_rejections) {
      throw NumericError("sample_scenario: 1000 rejections, sampling parameters inconsistent");
    }
  }
  return s;
}

int analytic_obstacle_count(std::size_t latent_len) {
  if (latent_len < 2 || (latent_len - 2) % 4 != 0) {
    throw ShapeError("latent of length " + std::to_string(latent_len) +
                     " is not an analytic scene layout (2 + 4 n); decode VAE latents with vae::decode");
  }
  return static_cast<int>((latent_len - 2) / 4);
}

Latent latent_of(const Scenario& s) {
  Latent nu;
  nu.reserve(2 + 4 * s.obstacles.size());
  nu.push_back(static_cast<float>(s.goal.x()));
  nu.push_back(static_cast<float>(s.goal.y()));
  for (const Obstacle& o : s.obstacles) {
    nu.push_back(static_cast<float>(o.cx));
    nu.push_back(static_cast<float>(o.cy));
    nu.push_back(static_cast<float>(o.rx));
    nu.push_back(static_cast<float>(o.ry));
  }
  return nu;
}

Scenario scenario_of(std::span<const float> nu, Distribution dist) {
  const int n = analytic_obstacle_count(nu.size());
  Scenario s;
  s.distribution = dist;
  s.goal = {nu[0], nu[1]};
  for (int i = 0; i < n; ++i) {
    const std::size_t b = 2 + 4 * static_cast<std::size_t>(i);
    s.obstacles.push_back({nu[b], nu[b + 1], std::max(nu[b + 2], kMinRadius),
                           std::max(nu[b + 3], kMinRadius)});
  }
  return s;
}

Vec2 pixel_to_world(int row, int col, const RenderConfig& cfg) {
  const double h = cfg.world / (cfg.size - 1);
  return {col * h, cfg.world - row * h};
}

namespace {

struct RenderTerms {
  std::vector<float> value;  // unclamped intensity per pixel
};

void render_forward(std::span<const float> nu, const RenderConfig& cfg, float* out) {
  const int n = analytic_obstacle_count(nu.size());
  const int S = cfg.size;
  const double inv2s2 = 1.0 / (2.0 * cfg.goal_sigma * cfg.goal_sigma);
  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) {
      const Vec2 p = pixel_to_world(r, c, cfg);
      const double gx = p.x() - nu[0], gy = p.y() - nu[1];
      double v = cfg.goal_intensity * std::exp(-(gx * gx + gy * gy) * inv2s2);
      for (int i = 0; i < n; ++i) {
        const std::size_t b = 2 + 4 * static_cast<std::size_t>(i);
        const double rx = std::max(nu[b + 2], kMinRadius), ry = std::max(nu[b + 3], kMinRadius);
        const double dx = (p.x() - nu[b]) / rx, dy = (p.y() - nu[b + 1]) / ry;
        const double e = dx * dx + dy * dy - 1.0;
        v += 1.0 / (1.0 + std::exp(cfg.sharpness * e));
      }
      out[r * S + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

}  // namespace

ad::Var render_analytic(ad::Var nu, const RenderConfig& cfg) {
  const Tensor& nv = nu.value();
  if (nv.rank() != 1) throw ShapeError("render_analytic: latent must be 1-D, got " + shape_str(nv.shape()));
  analytic_obstacle_count(nv.size());
  const int S = cfg.size;
  Tensor img({1, 1, S, S});
  render_forward(nv.data(), cfg, img.ptr());
  return nu.graph->record(ad::Op::Render, {nu.id}, std::move(img), [cfg](ad::Graph& g, int self) {
    const int in = g.inputs(self)[0];
    const Tensor& nv = g.value(in);
    const Tensor& gy = *g.grad_if_any(self);
    const int n = analytic_obstacle_count(nv.size());
    const int S = cfg.size;
    const double beta = cfg.sharpness;
    const double s2 = cfg.goal_sigma * cfg.goal_sigma;
    const double inv2s2 = 1.0 / (2.0 * s2);
    std::vector<double> acc(nv.size(), 0.0);
    std::vector<double> sig(static_cast<std::size_t>(n));
    for (int r = 0; r < S; ++r) {
      for (int c = 0; c < S; ++c) {
        const double go = gy[static_cast<std::size_t>(r * S + c)];
        if (go == 0.0) continue;
        const Vec2 p = pixel_to_world(r, c, cfg);
        const double gx = p.x() - nv[0], gyy = p.y() - nv[1];
        const double G = cfg.goal_intensity * std::exp(-(gx * gx + gyy * gyy) * inv2s2);
        double v = G;
        for (int i = 0; i < n; ++i) {
          const std::size_t b = 2 + 4 * static_cast<std::size_t>(i);
          const double rx = std::max(nv[b + 2], kMinRadius), ry = std::max(nv[b + 3], kMinRadius);
          const double dx = (p.x() - nv[b]) / rx, dy = (p.y() - nv[b + 1]) / ry;
          sig[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(beta * (dx * dx + dy * dy - 1.0)));
          v += sig[static_cast<std::size_t>(i)];
        }
        if (v <= 0.0 || v >= 1.0) continue;  // clamped
        acc[0] += go * G * gx / s2;
        acc[1] += go * G * gyy / s2;
        for (int i = 0; i < n; ++i) {
          const std::size_t b = 2 + 4 * static_cast<std::size_t>(i);
          const double rx = std::max(nv[b + 2], kMinRadius), ry = std::max(nv[b + 3], kMinRadius);
          const double dx = (p.x() - nv[b]) / rx, dy = (p.y() - nv[b + 1]) / ry;
          const double sg = sig[static_cast<std::size_t>(i)];
          const double k = go * (-beta) * sg * (1.0 - sg);  // d/de
          acc[b] += k * (-2.0 * dx / rx);
          acc[b + 1] += k * (-2.0 * dy / ry);
          if (nv[b + 2] > kMinRadius) acc[b + 2] += k * (-2.0 * dx * dx / rx);
          if (nv[b + 3] > kMinRadius) acc[b + 3] += k * (-2.0 * dy * dy / ry);
        }
      }
    }
    Tensor& gn = g.grad_buffer(in);
    for (std::size_t i = 0; i < acc.size(); ++i) gn[i] += static_cast<float>(acc[i]);
  });
}

Tensor render_analytic(std::span<const float> nu, const RenderConfig& cfg) {
  analytic_obstacle_count(nu.size());
  for (float v : nu)
    if (!std::isfinite(v)) throw NumericError("render_analytic: non-finite latent");
  Tensor img({1, 1, cfg.size, cfg.size});
  render_forward(nu, cfg, img.ptr());
  return img;
}

double lattice_cost(const Scenario& s, std::span<const double> offsets, const PlannerConfig& cfg) {
  const int F = static_cast<int>(offsets.size());
  const Vec2 seg = s.goal - s.start;
  const Vec2 dir = seg.normalized();
  const Vec2 normal(-dir.y(), dir.x());
  std::vector<Obstacle> inflated;
  for (const Obstacle& o : s.obstacles) inflated.push_back(o.inflated(cfg.inflation));
  auto point = [&](int t) {
    const double o = t == 0 ? 0.0 : offsets[static_cast<std::size_t>(t - 1)];
    return Vec2(s.start + (static_cast<double>(t) / F) * seg + o * normal);
  };
  auto off = [&](int t) { return t <= 0 ? 0.0 : offsets[static_cast<std::size_t>(t - 1)]; };
  double cost = 0;
  for (int t = 1; t <= F; ++t) {
    const double d2 = off(t) - 2 * off(t - 1) + off(t - 2);
    cost += d2 * d2;
    if (inside_any(inflated, point(t))) cost += cfg.obstacle_penalty;
    else if (segment_hits(inflated, point(t - 1), point(t), cfg.edge_step)) cost += cfg.obstacle_penalty;
  }
  return cost;
}

OraclePlan oracle_plan(const Scenario& s, int past_len, int horizon, const PlannerConfig& cfg) {
  if (past_len < 1 || horizon < 1) throw ShapeError("oracle_plan: P and F must be positive");
  const int F = horizon;
  const int K = cfg.lateral_samples;
  if (K < 3 || K % 2 == 0) throw ShapeError("oracle_plan: lateral_samples must be odd and >= 3");
  const int mid = K / 2;
  const Vec2 seg = s.goal - s.start;
  if (seg.norm() < 1e-9) throw ShapeError("oracle_plan: start equals goal");
  const Vec2 dir = seg.normalized();
  const Vec2 normal(-dir.y(), dir.x());
  std::vector<double> lat(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) lat[static_cast<std::size_t>(k)] = -cfg.lateral_extent + 2.0 * cfg.lateral_extent * k / (K - 1);
  std::vector<Obstacle> inflated;
  for (const Obstacle& o : s.obstacles) inflated.push_back(o.inflated(cfg.inflation));
  auto point = [&](int t, int k) {
    const double o = t == 0 ? 0.0 : lat[static_cast<std::size_t>(k)];
    return Vec2(s.start + (static_cast<double>(t) / F) * seg + o * normal);
  };
  // Penalty of arriving at (t, j) from (t-1, i).
  auto step_penalty = [&](int t, int i, int j) {
    if (inside_any(inflated, point(t, j))) return cfg.obstacle_penalty;
    if (segment_hits(inflated, point(t - 1, t == 1 ? mid : i), point(t, j), cfg.edge_step)) {
      return cfg.obstacle_penalty;
    }
    return 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  auto idx = [K](int i, int j) { return static_cast<std::size_t>(i * K + j); };
  // dp[i*K+j]: best cost with offset index i at t-1 and j at t.
  std::vector<double> dp(static_cast<std::size_t>(K * K), inf);
  std::vector<std::vector<int>> back(static_cast<std::size_t>(F + 1),
                                     std::vector<int>(static_cast<std::size_t>(K * K), -1));
  for (int j = 0; j < K; ++j) {
    if (F == 1 && j != mid) continue;
    const double o = lat[static_cast<std::size_t>(j)];
    dp[idx(mid, j)] = o * o + step_penalty(1, mid, j);
  }
  for (int t = 2; t <= F; ++t) {
    std::vector<double> next(static_cast<std::size_t>(K * K), inf);
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) {
        if (t == F && j != mid) continue;
        const double pen = step_penalty(t, i, j);
        double best = inf;
        int arg = -1;
        for (int k = 0; k < K; ++k) {
          const double prev = dp[idx(k, i)];
          if (prev == inf) continue;
          const double d2 = lat[static_cast<std::size_t>(j)] - 2 * lat[static_cast<std::size_t>(i)] + lat[static_cast<std::size_t>(k)];
          const double c = prev + d2 * d2;
          if (c < best) {
            best = c;
            arg = k;
          }
        }
        if (arg >= 0) {
          next[idx(i, j)] = best + pen;
          back[static_cast<std::size_t>(t)][idx(i, j)] = arg;
        }
      }
    }
    dp.swap(next);
  }
  double best = inf;
  int bi = -1;
  for (int i = 0; i < K; ++i) {
    if (dp[idx(i, mid)] < best) {
      best = dp[idx(i, mid)];
      bi = i;
    }
  }
  if (bi < 0 || best >= cfg.obstacle_penalty) {
    throw NumericError("oracle_plan: no collision-free lattice path");
  }
  std::vector<int> path(static_cast<std::size_t>(F + 1), mid);
  path[static_cast<std::size_t>(F)] = mid;
  if (F >= 2) path[static_cast<std::size_t>(F - 1)] = bi;
  for (int t = F; t >= 3; --t) {
    const int k = back[static_cast<std::size_t>(t)][idx(path[static_cast<std::size_t>(t - 1)], path[static_cast<std::size_t>(t)])];
    path[static_cast<std::size_t>(t - 2)] = k;
  }
  OraclePlan plan;
  plan.cost = best;
  std::vector<Vec2> pos;
  for (int t = 0; t <= F; ++t) {
    pos.push_back(point(t, path[static_cast<std::size_t>(t)]));
    if (t > 0) plan.offsets.push_back(lat[static_cast<std::size_t>(path[static_cast<std::size_t>(t)])]);
  }
  for (int t = 0; t <= F; ++t) {
    const int a = t < F ? t : F - 1;
    const Vec2 d = pos[static_cast<std::size_t>(a + 1)] - pos[static_cast<std::size_t>(a)];
    plan.future.emplace_back(pos[static_cast<std::size_t>(t)].x(), pos[static_cast<std::size_t>(t)].y(),
                             d.norm() / cfg.dt, std::atan2(d.y(), d.x()));
  }
  const State& w0 = plan.future.front();
  const Vec2 h0(std::cos(w0(3)), std::sin(w0(3)));
  for (int j = 0; j < past_len; ++j) {
    const Vec2 p = s.start - static_cast<double>(past_len - j) * w0(2) * cfg.dt * h0;
    plan.past.emplace_back(p.x(), p.y(), w0(2), w0(3));
  }
  return plan;
}

int check_collisions(std::span<const State> trajectory, const Scenario& s, double step) {
  if (trajectory.empty()) return 0;
  if (trajectory.size() == 1) return inside_any(s.obstacles, trajectory[0].head<2>()) ? 1 : 0;
  for (std::size_t t = 1; t < trajectory.size(); ++t) {
    if (segment_hits(s.obstacles, trajectory[t - 1].head<2>(), trajectory[t].head<2>(), step)) return 1;
  }
  return 0;
}

int colliding_steps(std::span<const State> trajectory, const Scenario& s) {
  int n = 0;
  for (const State& x : trajectory) n += inside_any(s.obstacles, x.head<2>()) ? 1 : 0;
  return n;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() < 2) throw ShapeError("write_pgm: image must be at least 2-D");
  const int H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string());
  os << "P5\n" << W << ' ' << H << "\n255\n";
  for (int i = 0; i < H * W; ++i) {
    const float v = std::clamp(image[static_cast<std::size_t>(i)], 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * v))));
  }
}

}  // namespace taskaug::scene
