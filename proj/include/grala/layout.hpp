#pragma once

#include <string>
#include <vector>

#include "grala/box.hpp"
#include "grala/camera.hpp"
#include "grala/error.hpp"
#include "grala/image.hpp"
#include "grala/scene_graph.hpp"
#include "json.hpp"

namespace grala {

inline constexpr double kMinExtent = 1e-3;      // m
inline constexpr double kOverlapEpsilon = 1e-6; // 3D IoU below this counts as "not overlapping"

struct LayoutViolation {
  std::string rule;  // floor | integrity | spatial-overlap | interaction-overlap
  std::vector<std::string> nodes;
  std::string detail;
};

struct ValidationReport {
  std::vector<LayoutViolation> violations;

  bool ok() const { return violations.empty(); }
  nlohmann::json to_json() const;
};

/// Intersection over union of two boxes.
double box_iou(const LayoutBox& a, const LayoutBox& b);

/// Checks the layout against the graph; throws ValidationError only when a
/// node has no box, every other problem is reported.
ValidationReport validate_layout(const LayoutSet& layout, const SceneGraph& graph);

LayoutBox union_box(const LayoutBox& a, const LayoutBox& b);

/// The box corner 8-tuple in a fixed order (bit 0 -> x, bit 1 -> y, bit 2 -> z).
std::array<Vec3, 8> box_corners(const LayoutBox& b);

class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// Filled convex hull of the projected corners at the camera resolution.
/// Throws ProjectionError when any corner is not in front of the near plane.
Mask project_box(const LayoutBox& b, const Camera& camera);

}  // namespace grala
