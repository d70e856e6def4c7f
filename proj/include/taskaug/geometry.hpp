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

#include <Eigen/Core>

namespace taskaug {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned ellipse.
struct Obstacle {
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;

  Vec2 center() const { return {cx, cy}; }
  Obstacle inflated(double margin) const { return {cx, cy, rx + margin, ry + margin}; }
  /// Implicit level ((x-cx)/rx)^2 + ((y-cy)/ry)^2 - 1; <= 0 inside or on.
  double level(const Vec2& p) const;

  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

struct ClosestPoint {
  Vec2 point;
  double distance = 0;
};

/// Closest point of the ellipse boundary to p (Eberly's bisection method).
ClosestPoint closest_boundary_point(const Obstacle& e, const Vec2& p);

}  // namespace taskaug
