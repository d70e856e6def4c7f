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

#include "taskaug/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "taskaug/binio.hpp"
#include "taskaug/error.hpp"

namespace taskaug {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'D'};

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void put_state(std::ostream& os, const scene::State& s) {
  for (int k = 0; k < 4; ++k) binio::put<float>(os, static_cast<float>(s[k]));
}

scene::State get_state(binio::Reader& r) {
  scene::State s;
  for (int k = 0; k < 4; ++k) s[k] = r.get<float>("state");
  return s;
}

void check_u16(int v, const char* what) {
  if (v < 0 || v > 0xFFFF) throw ShapeError(std::string("dataset ") + what + " out of range");
}

}  // namespace

void Dataset::validate() const {
  const std::size_t px = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DataRecord& r = records[i];
    const std::string at = " in record " + std::to_string(i);
    if (r.image.size() != px) throw ShapeError("image size " + shape_str(r.image.shape()) + at);
    if (static_cast<int>(r.latent.size()) != latent_dim) throw ShapeError("latent length" + at);
    if (static_cast<int>(r.past.size()) != past_len) throw ShapeError("past length" + at);
    if (static_cast<int>(r.future.size()) != horizon + 1) throw ShapeError("future length" + at);
    if (mode == RendererMode::Analytic && r.scenario.obstacles.size() > 255) {
      throw ShapeError("too many obstacles" + at);
    }
  }
}

Tensor quantize_image(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = static_cast<float>(to_byte(image[i])) / 255.0f;
  return out;
}

DataRecord make_analytic_record(const scene::Scenario& s, int past_len, int horizon,
                                const scene::PlannerConfig& planner, const scene::RenderConfig& render) {
  const scene::OraclePlan plan = scene::oracle_plan(s, past_len, horizon, planner);
  DataRecord r;
  r.latent = scene::latent_of(s);
  r.image = quantize_image(scene::render_analytic(r.latent, render));
  auto round = [](scene::State x) {
    for (int k = 0; k < 4; ++k) x[k] = static_cast<float>(x[k]);
    return x;
  };
  for (const auto& x : plan.past) r.past.push_back(round(x));
  for (const auto& x : plan.future) r.future.push_back(round(x));
  r.scenario = s;
  return r;
}

void write_dataset(std::ostream& os, const Dataset& d) {
  d.validate();
  check_u16(d.width, "width");
  check_u16(d.height, "height");
  check_u16(d.past_len, "P");
  check_u16(d.horizon, "F");
  check_u16(d.latent_dim, "latent dim");
  binio::put_bytes(os, kMagic, 4);
  binio::put<std::uint32_t>(os, kDatasetVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(d.records.size()));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(d.width));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(d.height));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(d.past_len));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(d.horizon));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(d.latent_dim));
  binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(d.mode));

  std::vector<std::uint8_t> bytes;
  for (const DataRecord& r : d.records) {
    bytes.resize(r.image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(r.image[i]);
    binio::put_bytes(os, bytes.data(), bytes.size());
    binio::put_bytes(os, r.latent.data(), r.latent.size() * sizeof(float));
    for (const auto& s : r.past) put_state(os, s);
    for (const auto& s : r.future) put_state(os, s);
    if (d.mode == RendererMode::Analytic) {
      binio::put<float>(os, static_cast<float>(r.scenario.goal.x()));
      binio::put<float>(os, static_cast<float>(r.scenario.goal.y()));
      binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(r.scenario.obstacles.size()));
      for (const Obstacle& o : r.scenario.obstacles) {
        binio::put<float>(os, static_cast<float>(o.cx));
        binio::put<float>(os, static_cast<float>(o.cy));
        binio::put<float>(os, static_cast<float>(o.rx));
        binio::put<float>(os, static_cast<float>(o.ry));
      }
    }
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>((r.adversarial ? 1 : 0) | (r.relabeled ? 2 : 0)));
  }
}

Dataset read_dataset(std::istream& is) {
  binio::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not an ADVD dataset (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion) {
    throw DataError("ADVD version mismatch: file has " + std::to_string(version) + ", expected " +
                    std::to_string(kDatasetVersion));
  }
  const auto count = r.get<std::uint32_t>("record count");
  Dataset d;
  d.width = r.get<std::uint16_t>("width");
  d.height = r.get<std::uint16_t>("height");
  d.past_len = r.get<std::uint16_t>("P");
  d.horizon = r.get<std::uint16_t>("F");
  d.latent_dim = r.get<std::uint16_t>("latent dim");
  const auto mode = r.get<std::uint8_t>("renderer mode");
  if (mode > 1) throw DataError("unknown renderer mode " + std::to_string(mode));
  d.mode = static_cast<RendererMode>(mode);

  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height));
  d.records.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    DataRecord rec;
    r.bytes(bytes.data(), bytes.size(), "image");
    rec.image = Tensor({1, 1, d.height, d.width});
    for (std::size_t k = 0; k < bytes.size(); ++k) rec.image[k] = static_cast<float>(bytes[k]) / 255.0f;
    rec.latent.resize(static_cast<std::size_t>(d.latent_dim));
    r.bytes(rec.latent.data(), rec.latent.size() * sizeof(float), "latent");
    for (int k = 0; k < d.past_len; ++k) rec.past.push_back(get_state(r));
    for (int k = 0; k <= d.horizon; ++k) rec.future.push_back(get_state(r));
    if (d.mode == RendererMode::Analytic) {
      const float gx = r.get<float>("goal");
      const float gy = r.get<float>("goal");
      rec.scenario.goal = Vec2(gx, gy);
      const auto n = r.get<std::uint8_t>("obstacle count");
      for (int k = 0; k < n; ++k) {
        Obstacle o;
        o.cx = r.get<float>("obstacle");
        o.cy = r.get<float>("obstacle");
        o.rx = r.get<float>("obstacle");
        o.ry = r.get<float>("obstacle");
        rec.scenario.obstacles.push_back(o);
      }
    }
    const auto flags = r.get<std::uint8_t>("flags");
    rec.adversarial = (flags & 1) != 0;
    rec.relabeled = (flags & 2) != 0;
    d.records.push_back(std::move(rec));
  }
  if (!r.at_end()) {
    throw DataError("trailing bytes after " + std::to_string(count) + " records at byte offset " +
                    std::to_string(r.offset()));
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_dataset(os, d);
  if (!os) throw DataError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_dataset(is);
}

}  // namespace taskaug
