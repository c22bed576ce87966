#include "grala/layout.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"

using namespace grala;

namespace {

SceneGraph pair_graph(EdgeKind kind) {
  return {"p", {{"a", "a", "a"}, {"b", "b", "b"}}, {{"a", "b", "rides", kind}}};
}

bool has_rule(const ValidationReport& r, const std::string& rule) {
  for (const auto& v : r.violations)
    if (v.rule == rule) return true;
  return false;
}

/// Independent hull membership: p is inside the convex hull of `pts` iff it
/// lies on the inner side of every supporting line through two points.
bool in_hull_oracle(const std::vector<std::array<double, 2>>& pts, double x, double y) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const double ex = pts[j][0] - pts[i][0], ey = pts[j][1] - pts[i][1];
      if (ex == 0 && ey == 0) continue;
      bool supporting = true;
      for (const auto& q : pts)
        if (ex * (q[1] - pts[i][1]) - ey * (q[0] - pts[i][0]) < -1e-9) supporting = false;
      if (supporting && ex * (y - pts[i][1]) - ey * (x - pts[i][0]) < -1e-9) return false;
    }
  return true;
}

LayoutBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1, 1), e(0.05, 1.0);
  const Vec3 lo{c(rng), c(rng) + 1.0, c(rng)};
  return {lo, lo + Vec3{e(rng), e(rng), e(rng)}};
}

}  // namespace

TEST_CASE("validator flags floor, integrity and overlap problems") {
  SUBCASE("below the floor") {
    const LayoutSet l{{"a", {{0, -0.1, 0}, {1, 1, 1}}}, {"b", {{0.5, 0.5, 0.5}, {2, 2, 2}}}};
    CHECK(has_rule(validate_layout(l, pair_graph(EdgeKind::interaction)), "floor"));
  }
  SUBCASE("identical interacting boxes overlap entirely") {
    const LayoutSet l{{"a", {{0, 0, 0}, {1, 1, 1}}}, {"b", {{0, 0, 0}, {1, 1, 1}}}};
    const auto r = validate_layout(l, pair_graph(EdgeKind::interaction));
    CHECK(has_rule(r, "interaction-overlap"));
    CHECK(r.violations.size() == 1);
  }
  SUBCASE("flat box") {
    const LayoutSet l{{"a", {{0, 0, 0}, {1, 1, 0}}}, {"b", {{3, 0, 0}, {4, 1, 1}}}};
    CHECK(has_rule(validate_layout(l, pair_graph(EdgeKind::spatial)), "integrity"));
  }
  SUBCASE("disjoint interacting boxes") {
    const LayoutSet l{{"a", {{0, 0, 0}, {1, 1, 1}}}, {"b", {{3, 0, 0}, {4, 1, 1}}}};
    CHECK(has_rule(validate_layout(l, pair_graph(EdgeKind::interaction)), "interaction-overlap"));
  }
  SUBCASE("overlapping spatial pair; touching faces are fine") {
    const LayoutSet overlap{{"a", {{0, 0, 0}, {1, 1, 1}}}, {"b", {{0.5, 0, 0}, {2, 1, 1}}}};
    CHECK(has_rule(validate_layout(overlap, pair_graph(EdgeKind::spatial)), "spatial-overlap"));
    const LayoutSet touching{{"a", {{0, 0, 0}, {1, 1, 1}}}, {"b", {{0, 1, 0}, {1, 2, 1}}}};
    CHECK(validate_layout(touching, pair_graph(EdgeKind::spatial)).ok());
  }
  SUBCASE("missing box") {
    const LayoutSet l{{"a", {{0, 0, 0}, {1, 1, 1}}}};
    CHECK_THROWS_AS(validate_layout(l, pair_graph(EdgeKind::spatial)), ValidationError);
  }
}

TEST_CASE("shipped fixture layouts validate") {
  for (const char* name : {"farm.json", "wizard.json", "duo.json"}) {
    const auto doc = load_scene_file(testing::fixture(name));
    REQUIRE(doc.layout.has_value());
    const auto report = validate_layout(*doc.layout, doc.graph);
    CHECK_MESSAGE(report.ok(), name << ": " << report.to_json().dump());
  }
}

TEST_CASE("report serializes rule, nodes and detail") {
  const LayoutSet l{{"a", {{0, -0.1, 0}, {1, 1, 1}}}, {"b", {{3, 0, 0}, {4, 1, 1}}}};
  const auto j = validate_layout(l, pair_graph(EdgeKind::spatial)).to_json();
  REQUIRE(j.size() == 1);
  CHECK(j[0]["rule"] == "floor");
  CHECK(j[0]["nodes"] == nlohmann::json::array({"a"}));
  CHECK(j[0].contains("detail"));
}

TEST_CASE("union box") {
  const LayoutBox a{{0, 0, 0}, {1, 1, 1}}, b{{2, 0, 2}, {3, 1, 3}};
  CHECK(union_box(a, b) == LayoutBox{{0, 0, 0}, {3, 1, 3}});
  CHECK(union_box(a, a) == a);
  const LayoutBox inner{{0.2, 0.2, 0.2}, {0.5, 0.5, 0.5}};
  CHECK(union_box(a, inner) == a);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_box(rng), y = random_box(rng), z = random_box(rng);
    CHECK(union_box(x, y) == union_box(y, x));
    CHECK(union_box(union_box(x, y), z) == union_box(x, union_box(y, z)));
    CHECK(union_box(x, x) == x);
  }
}

TEST_CASE("unit cube projects to a centered square matching the pinhole oracle") {
  Camera cam;
  cam.eye = {0, 0, 4};
  cam.fov_deg = 60;
  cam.width = cam.height = 64;
  const LayoutBox cube{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};

  const double f = 32.0 / std::tan(kPi / 6);
  std::vector<std::array<double, 2>> corners;
  const CameraFrame frame(cam);
  for (const auto& c : box_corners(cube)) {
    // Camera looks down -z; image y grows downward.
    const double depth = 4.0 - c.z;
    const double u = 32.0 + f * c.x / depth, v = 32.0 - f * c.y / depth;
    const Vec3 pc = frame.to_camera(c);
    CHECK(frame.u(pc) == doctest::Approx(u).epsilon(1e-12));
    CHECK(frame.v(pc) == doctest::Approx(v).epsilon(1e-12));
    corners.push_back({u, v});
  }

  const Mask mask = project_box(cube, cam);
  int mismatches = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) mismatches += mask.at(x, y) != (in_hull_oracle(corners, x + 0.5, y + 0.5) ? 1 : 0);
  CHECK(mismatches == 0);

  // The near face spans 32 +- f * 0.5 / 3.5 pixels.
  const double half = f * 0.5 / 3.5;
  CHECK(mask.at(32, 32) == 1);
  CHECK(mask.at(static_cast<int>(32 + half) - 1, 32) == 1);
  CHECK(mask.at(static_cast<int>(32 + half) + 1, 32) == 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      CHECK(mask.at(x, y) == mask.at(63 - x, y));
      CHECK(mask.at(x, y) == mask.at(x, 63 - y));
    }
}

TEST_CASE("box outside the frustum projects to nothing") {
  const Camera cam = testing::front_camera(32, 32);
  CHECK(project_box({{20, -0.5, -0.5}, {21, 0.5, 0.5}}, cam).count() == 0);
}

TEST_CASE("camera inside the box is a projection error") {
  const Camera cam = testing::front_camera(32, 32);
  CHECK_THROWS_AS(project_box({{-1, -1, 3}, {1, 1, 5}}, cam), ProjectionError);
}

TEST_CASE("projection is monotone under containment") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> t(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto outer = random_box(rng);
    const Vec3 e = outer.extent();
    Vec3 a{outer.min.x + t(rng) * e.x, outer.min.y + t(rng) * e.y, outer.min.z + t(rng) * e.z};
    Vec3 b{outer.min.x + t(rng) * e.x, outer.min.y + t(rng) * e.y, outer.min.z + t(rng) * e.z};
    const LayoutBox inner{vmin(a, b), vmax(a, b)};
    Rng crng(trial);
    const Camera cam = sample_camera(crng, outer, {}, 48, 48);
    const auto mi = project_box(inner, cam), mo = project_box(outer, cam);
    for (std::size_t p = 0; p < mi.data.size(); ++p) CHECK(mi.data[p] <= mo.data[p]);
  }
}

TEST_CASE("sampled cameras keep the box inside the frame") {
  const LayoutBox box{{-0.4, 0.0, -0.3}, {0.6, 1.7, 0.5}};
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const Camera cam = sample_camera(rng, box, {}, 64, 64);
    const Vec3 dir = normalize(cam.eye - cam.target);
    const double elevation = std::asin(dir.y) * 180 / kPi;
    CHECK(elevation >= -10.0 - 1e-9);
    CHECK(elevation <= 45.0 + 1e-9);
    const Mask m = project_box(box, cam);
    bool border = false;
    for (int k = 0; k < 64; ++k)
      border = border || m.at(k, 0) || m.at(k, 63) || m.at(0, k) || m.at(63, k);
    CHECK_FALSE(border);
  }
  Rng a(5), b(5);
  CHECK(sample_camera(a, box, {}, 32, 32) == sample_camera(b, box, {}, 32, 32));
}
