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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "taskaug/autodiff.hpp"
#include "taskaug/tensor.hpp"

namespace taskaug {

/// Named parameter tensors in insertion order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  /// Binds every tensor into `g`; trainable leaves when `trainable`.
  std::map<std::string, ad::Var> bind(ad::Graph& g, bool trainable) const;

  /// FNV-1a over names, shapes and raw float bytes.
  std::uint64_t checksum() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor init_uniform(Shape shape, int fan_in, std::mt19937_64& rng);

// "ADVW" checkpoint: magic, version u32, tensor count u32, then per tensor
// name length u16 + UTF-8 name, rank u8, dims u32 each, f32 payload. All
// integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const ParamStore& params);
ParamStore read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Adam with bias correction.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(const ParamStore& params) : Adam(params, Options{}) {}
  Adam(const ParamStore& params, Options opts);

  /// grads keyed by parameter name; missing names are skipped.
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);

 private:
  Options opts_;
  long t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

}  // namespace taskaug
