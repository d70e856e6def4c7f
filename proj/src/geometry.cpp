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

#include "taskaug/geometry.hpp"

#include <cmath>
#include <utility>

namespace taskaug {

namespace {

double robust_root(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0 ? 0.0 : std::hypot(n0, z1) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 200; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double ratio0 = n0 / (s + r0);
    const double ratio1 = z1 / (s + 1.0);
    g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
    if (g > 0)
      s0 = s;
    else if (g < 0)
      s1 = s;
    else
      break;
  }
  return s;
}

// First quadrant, e0 >= e1 > 0, y0, y1 >= 0.
Vec2 closest_first_quadrant(double e0, double e1, double y0, double y1) {
  if (y1 > 0) {
    if (y0 > 0) {
      const double z0 = y0 / e0, z1 = y1 / e1;
      const double g = z0 * z0 + z1 * z1 - 1.0;
      if (g != 0) {
        const double r0 = (e0 / e1) * (e0 / e1);
        const double sbar = robust_root(r0, z0, z1, g);
        return {r0 * y0 / (sbar + r0), y1 / (sbar + 1.0)};
      }
      return {y0, y1};
    }
    return {0.0, e1};
  }
  const double numer0 = e0 * y0;
  const double denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    return {e0 * xde0, e1 * std::sqrt(1.0 - xde0 * xde0)};
  }
  return {e0, 0.0};
}

}  // namespace

double Obstacle::level(const Vec2& p) const {
  const double dx = (p.x() - cx) / rx;
  const double dy = (p.y() - cy) / ry;
  return dx * dx + dy * dy - 1.0;
}

ClosestPoint closest_boundary_point(const Obstacle& e, const Vec2& p) {
  double y0 = std::abs(p.x() - e.cx), y1 = std::abs(p.y() - e.cy);
  double e0 = e.rx, e1 = e.ry;
  const bool swapped = e0 < e1;
  if (swapped) {
    std::swap(e0, e1);
    std::swap(y0, y1);
  }
  Vec2 q = closest_first_quadrant(e0, e1, y0, y1);
  if (swapped) std::swap(q.x(), q.y());
  if (p.x() < e.cx) q.x() = -q.x();
  if (p.y() < e.cy) q.y() = -q.y();
  q += e.center();
  return {q, (p - q).norm()};
}

}  // namespace taskaug
