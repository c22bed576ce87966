#pragma once

#include <map>
#include <string>

#include "grala/math.hpp"

namespace grala {

/// Axis-aligned world cuboid in meters, y-up with the floor at y = 0.
struct LayoutBox {
  Vec3 min;
  Vec3 max;

  Vec3 center() const { return (min + max) * 0.5; }
  Vec3 extent() const { return max - min; }
  double diagonal() const { return length(max - min); }
  double volume() const {
    const Vec3 e = extent();
    return e.x * e.y * e.z;
  }
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
  }
  bool contains(const LayoutBox& o) const { return contains(o.min) && contains(o.max); }

  /// Same center, every extent multiplied by `factor`.
  LayoutBox scaled(double factor) const {
    const Vec3 c = center();
    const Vec3 h = extent() * (0.5 * factor);
    return {c - h, c + h};
  }
  /// Grown by `fraction` of its extent on every side.
  LayoutBox padded(double fraction) const {
    const Vec3 p = extent() * fraction;
    return {min - p, max + p};
  }

  friend bool operator==(const LayoutBox&, const LayoutBox&) = default;
};

/// Volume of the intersection of two boxes (0 when disjoint or touching).
inline double intersection_volume(const LayoutBox& a, const LayoutBox& b) {
  const Vec3 lo = vmax(a.min, b.min);
  const Vec3 hi = vmin(a.max, b.max);
  const Vec3 d = hi - lo;
  if (d.x <= 0 || d.y <= 0 || d.z <= 0) return 0.0;
  return d.x * d.y * d.z;
}

/// Node id -> box; ordered so iteration is deterministic.
using LayoutSet = std::map<std::string, LayoutBox>;

}  // namespace grala
