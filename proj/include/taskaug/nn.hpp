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

#include <map>
#include <string>

#include "taskaug/autodiff.hpp"
#include "taskaug/params.hpp"

namespace taskaug::nn {

using VarMap = std::map<std::string, ad::Var>;

/// x [B,I] @ w [I,O] + b [O].
inline ad::Var linear(ad::Var x, ad::Var w, ad::Var b) { return ad::add(ad::matmul(x, w), b); }

/// Gradients of every bound parameter after a reverse pass.
inline std::map<std::string, Tensor> collect_grads(const ad::Graph& g, const VarMap& vars) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : vars) out.emplace(name, g.grad(v));
  return out;
}

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor* const> items);

}  // namespace taskaug::nn
