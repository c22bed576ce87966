#include "grala/layout.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace grala {

nlohmann::json ValidationReport::to_json() const {
  auto j = nlohmann::json::array();
  for (const auto& v : violations) j.push_back({{"rule", v.rule}, {"nodes", v.nodes}, {"detail", v.detail}});
  return j;
}

double box_iou(const LayoutBox& a, const LayoutBox& b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.volume() + b.volume() - inter);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ValidationReport validate_layout(const LayoutSet& layout, const SceneGraph& graph) {
  for (const auto& n : graph.nodes)
    if (!layout.contains(n.id)) throw ValidationError("layout has no box for node '" + n.id + "'");

  ValidationReport report;
  for (const auto& n : graph.nodes) {
    const auto& b = layout.at(n.id);
    if (b.min.y < 0) report.violations.push_back({"floor", {n.id}, "min_y = " + fmt(b.min.y) + " is below the floor"});
    const Vec3 e = b.extent();
    for (int k = 0; k < 3; ++k)
      if (!(e[k] >= kMinExtent)) {
        report.violations.push_back(
            {"integrity", {n.id}, std::string("extent along ") + "xyz"[k] + " is " + fmt(e[k]) + " m"});
        break;
      }
  }

  std::set<std::pair<std::string, std::string>> interacting;
  for (const auto& e : graph.edges)
    if (e.kind == EdgeKind::interaction) interacting.insert(std::minmax(e.src, e.dst));

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < graph.nodes.size(); ++j) {
      const auto& a = graph.nodes[i].id;
      const auto& b = graph.nodes[j].id;
      const auto& ba = layout.at(a);
      const auto& bb = layout.at(b);
      const double iou = box_iou(ba, bb);
      if (interacting.contains(std::minmax(a, b))) {
        if (iou <= kOverlapEpsilon)
          report.violations.push_back({"interaction-overlap", {a, b}, "interacting boxes do not overlap"});
        else if (ba.contains(bb) || bb.contains(ba))
          report.violations.push_back({"interaction-overlap", {a, b}, "one box entirely contains the other"});
      } else if (iou > kOverlapEpsilon) {
        report.violations.push_back({"spatial-overlap", {a, b}, "non-interacting boxes overlap (IoU " + fmt(iou) + ")"});
      }
    }
  }
  return report;
}

LayoutBox union_box(const LayoutBox& a, const LayoutBox& b) { return {vmin(a.min, b.min), vmax(a.max, b.max)}; }

std::array<Vec3, 8> box_corners(const LayoutBox& b) {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i)
    c[i] = {(i & 1) ? b.max.x : b.min.x, (i & 2) ? b.max.y : b.min.y, (i & 4) ? b.max.z : b.min.z};
  return c;
}

namespace {

struct P2 {
  double x, y;
};

double cross2(const P2& o, const P2& a, const P2& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

/// Andrew's monotone chain; counter-clockwise in pixel coordinates, no collinear points.
std::vector<P2> convex_hull(std::vector<P2> pts) {
  std::sort(pts.begin(), pts.end(), [](const P2& a, const P2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<P2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Mask project_box(const LayoutBox& b, const Camera& camera) {
  const CameraFrame frame(camera);
  std::vector<P2> pts;
  for (const auto& corner : box_corners(b)) {
    const Vec3 pc = frame.to_camera(corner);
    if (pc.z <= kNearPlane) throw ProjectionError("box is not entirely in front of the camera near plane");
    pts.push_back({frame.u(pc), frame.v(pc)});
  }
  const auto hull = convex_hull(pts);

  Mask mask(camera.width, camera.height);
  if (hull.size() < 3) return mask;
  double lo_x = hull[0].x, hi_x = hull[0].x, lo_y = hull[0].y, hi_y = hull[0].y;
  for (const auto& p : hull) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
  const int x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(hi_x - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
  const int y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(hi_y - 0.5)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const P2 p{x + 0.5, y + 0.5};
      bool inside = true;
      for (std::size_t i = 0; i < hull.size() && inside; ++i)
        inside = cross2(hull[i], hull[(i + 1) % hull.size()], p) >= 0;
      if (inside) mask.at(x, y) = 1;
    }
  }
  return mask;
}

}  // namespace grala
