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

#include "taskaug/params.hpp"

#include <cmath>
#include <fstream>

#include "taskaug/binio.hpp"
#include "taskaug/error.hpp"

namespace taskaug {

namespace {
constexpr char kMagic[4] = {'A', 'D', 'V', 'W'};

void fnv(std::uint64_t& h, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
}
}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(false);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return tensors_[it->second];
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

std::map<std::string, ad::Var> ParamStore::bind(ad::Graph& g, bool trainable) const {
  std::map<std::string, ad::Var> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    Tensor t = tensors_[i];
    t.set_requires_grad(trainable);
    out[names_[i]] = g.leaf(t);
  }
  return out;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    fnv(h, names_[i].data(), names_[i].size());
    for (int d : tensors_[i].shape()) fnv(h, &d, sizeof d);
    fnv(h, tensors_[i].ptr(), tensors_[i].size() * sizeof(float));
  }
  return h;
}

Tensor init_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (float& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

void write_checkpoint(std::ostream& os, const ParamStore& params) {
  binio::put_bytes(os, kMagic, 4);
  binio::put<std::uint32_t>(os, kCheckpointVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const std::string& name : params.names()) {
    const Tensor& t = params.at(name);
    if (name.size() > 0xFFFF) throw ShapeError("parameter name too long: " + name);
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    binio::put_bytes(os, name.data(), name.size());
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    binio::put_bytes(os, t.ptr(), t.size() * sizeof(float));
  }
}

ParamStore read_checkpoint(std::istream& is) {
  binio::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not an ADVW checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("ADVW version mismatch: file has " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  ParamStore out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.bytes(name.data(), len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    for (int k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>("dim");
      if (d == 0 || d > (1u << 28)) throw DataError("invalid dimension in tensor '" + name + "'");
      shape.push_back(static_cast<int>(d));
    }
    Tensor t(shape);
    r.bytes(t.ptr(), t.size() * sizeof(float), "tensor payload");
    out.add(name, std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, params);
  if (!os) throw DataError("write failed: " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_checkpoint(is);
}

Adam::Adam(const ParamStore& params, Options opts) : opts_(opts) {
  for (const std::string& name : params.names()) {
    m_[name].assign(params.at(name).size(), 0.0f);
    v_[name].assign(params.at(name).size(), 0.0f);
  }
}

void Adam::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(opts_.beta1), b2 = static_cast<float>(opts_.beta2);
  const float step = static_cast<float>(opts_.lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(opts_.eps);
  for (const auto& [name, g] : grads) {
    auto mit = m_.find(name);
    if (mit == m_.end()) continue;
    Tensor& p = params.at(name);
    std::vector<float>& m = mit->second;
    std::vector<float>& v = v_[name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
}

}  // namespace taskaug
