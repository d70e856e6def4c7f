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

#include "taskaug/nn.hpp"

#include <algorithm>

#include "taskaug/error.hpp"

namespace taskaug::nn {

Tensor stack(std::span<const Tensor* const> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape& inner = items.front()->shape();
  Shape shape{static_cast<int>(items.size())};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor out(shape);
  const std::size_t n = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != inner) {
      throw ShapeError("stack: shape " + shape_str(items[i]->shape()) + " differs from " + shape_str(inner));
    }
    std::copy(items[i]->data().begin(), items[i]->data().end(), out.ptr() + i * n);
  }
  return out;
}

}  // namespace taskaug::nn
