#include "grala/guidance.hpp"

#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "grala/error.hpp"
#include "test_util.hpp"

using namespace grala;

namespace {

ReferenceScene horse_scene() {
  return ReferenceScene({{"horse", ReferencePrimitive::Kind::ellipsoid, {0.1, 0.05, -0.2}, {0.7, 0.4, 0.3}, {1, 1, 1}},
                         {"astronaut", ReferencePrimitive::Kind::ellipsoid, {0.0, 0.6, 0.1}, {0.2, 0.35, 0.2},
                          {0.9, 0.9, 0.2}},
                         {"crate", ReferencePrimitive::Kind::box, {0.8, -0.4, 0.0}, {0.3, 0.3, 0.3}, {0.2, 0.4, 0.9}}});
}

GuidanceRequest request_for(const Camera& cam, std::string prompt, Image rgb) {
  GuidanceRequest r;
  r.camera = cam;
  r.prompt = std::move(prompt);
  r.rgb = std::move(rgb);
  r.timestep = 500;
  return r;
}

using M4 = std::array<std::array<double, 4>, 4>;
using M3 = std::array<std::array<double, 3>, 3>;

/// Silhouette of an axis-aligned ellipsoid from its dual quadric: the image
/// outline is the conic C = adj(P Q* P^T); pixels with the same sign as the
/// projected center lie inside.
Mask conic_silhouette(const ReferencePrimitive& e, const Camera& cam) {
  const Vec3 fwd = normalize(cam.target - cam.eye);
  const Vec3 right = normalize(cross(fwd, cam.up));
  const Vec3 down = cross(fwd, right);
  const double f = 0.5 * cam.height / std::tan(deg_to_rad(cam.fov_deg) / 2);
  const Vec3 rows[3] = {right, down, fwd};
  // P = K [R | -R eye]
  double P[3][4];
  const double K[3][3] = {{f, 0, 0.5 * cam.width}, {0, f, 0.5 * cam.height}, {0, 0, 1}};
  double Rt[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) Rt[i][k] = rows[i][k];
    Rt[i][3] = -dot(rows[i], cam.eye);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      P[i][j] = 0;
      for (int k = 0; k < 3; ++k) P[i][j] += K[i][k] * Rt[k][j];
    }
  // Q* = T diag(r^2, -1) T^T with T the translation to the center.
  M4 Qd{};
  const double d[4] = {e.size.x * e.size.x, e.size.y * e.size.y, e.size.z * e.size.z, -1};
  const double c[4] = {e.center.x, e.center.y, e.center.z, 1};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = (i == j && i < 3) ? d[i] : 0;
      s += d[3] * c[i] * c[j];
      Qd[i][j] = s;
    }
  M3 Cd{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) Cd[i][j] += P[i][a] * Qd[a][b] * P[j][b];
  M3 C{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (j + 1) % 3, i2 = (j + 2) % 3, j1 = (i + 1) % 3, j2 = (i + 2) % 3;
      C[i][j] = Cd[i1][j1] * Cd[i2][j2] - Cd[i1][j2] * Cd[i2][j1];
    }
  auto form = [&](double u, double v) {
    const double x[3] = {u, v, 1};
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += x[i] * C[i][j] * x[j];
    return s;
  };
  double pc[3];
  for (int i = 0; i < 3; ++i) pc[i] = P[i][0] * c[0] + P[i][1] * c[1] + P[i][2] * c[2] + P[i][3];
  const double inside_sign = form(pc[0] / pc[2], pc[1] / pc[2]) < 0 ? -1 : 1;
  Mask m(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) m.at(x, y) = form(x + 0.5, y + 0.5) * inside_sign > 0 ? 1 : 0;
  return m;
}

double sq_dist(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s;
}

}  // namespace

TEST_CASE("rgb equal to the target is a fixed point") {
  const MockOracle oracle(horse_scene());
  const Camera cam = testing::front_camera(40, 32);
  const Image t = oracle.target("a brown horse", cam);
  const auto resp = oracle.guide(request_for(cam, "a brown horse", t));
  for (double v : resp.grad.data) CHECK(v == 0.0);
  CHECK_FALSE(resp.unknown_prompt);
}

TEST_CASE("black render against a white ellipsoid gives grad = -T") {
  const MockOracle oracle(horse_scene());
  const Camera cam = testing::front_camera(40, 32);
  const auto resp = oracle.guide(request_for(cam, "a horse", Image(40, 32, 3)));
  const Mask sil = primitive_silhouette(oracle.reference().match_token("horse"), cam);
  REQUIRE(sil.count() > 0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) CHECK(resp.grad.at(x, y, c) == (sil.at(x, y) ? -1.0 : 0.0));
}

TEST_CASE("attention equals the analytic ellipsoid silhouette") {
  const MockOracle oracle(horse_scene());
  Rng rng(11);
  const LayoutBox around{{-0.7, -0.4, -0.6}, {0.8, 0.5, 0.2}};
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = sample_camera(rng, around, {}, 48, 40);
    auto req = request_for(cam, "an astronaut riding a horse", Image(48, 40, 3, 0.5));
    req.tokens = {"horse", "astronaut"};
    const auto resp = oracle.guide(req);
    REQUIRE(resp.attention.count("horse") == 1);
    REQUIRE(resp.attention.count("astronaut") == 1);
    for (const auto* token : {"horse", "astronaut"}) {
      const Mask oracle_mask = conic_silhouette(*oracle.reference().match_token(token)[0], cam);
      const Image& att = resp.attention.at(token);
      int mismatches = 0;
      for (std::size_t p = 0; p < oracle_mask.data.size(); ++p) mismatches += att.data[p] != oracle_mask.data[p];
      CHECK_MESSAGE(mismatches == 0, token << " trial " << trial);
      CHECK(oracle_mask.count() > 0);
    }
    resp.validate(48, 40);
  }
}

TEST_CASE("attention ignores occlusion by other primitives") {
  // The astronaut sits in front of the horse; the horse map still covers it.
  const MockOracle oracle(horse_scene());
  const Camera cam = testing::front_camera(48, 48);
  auto req = request_for(cam, "an astronaut riding a horse", Image(48, 48, 3));
  req.tokens = {"horse"};
  const auto resp = oracle.guide(req);
  const Mask full = conic_silhouette(*oracle.reference().match_token("horse")[0], cam);
  for (std::size_t p = 0; p < full.data.size(); ++p) CHECK(resp.attention.at("horse").data[p] == full.data[p]);
}

TEST_CASE("box primitives cast their projected hull") {
  const ReferenceScene scene({{"crate", ReferencePrimitive::Kind::box, {0, 0, 0}, {1, 1, 1}, {1, 0, 0}}});
  const Camera cam = testing::front_camera(64, 64, 4.0, 60.0);
  const Mask sil = primitive_silhouette(scene.match_token("crate"), cam);
  // Straight on, only the near face is visible: 32 +- f * 0.5 / 3.5.
  const double half = 32.0 / std::tan(kPi / 6) * 0.5 / 3.5;
  CHECK(sil.at(32, 32) == 1);
  CHECK(sil.at(static_cast<int>(32 + half) - 1, 32) == 1);
  CHECK(sil.at(static_cast<int>(32 + half) + 1, 32) == 0);
}

TEST_CASE("one gradient step decreases the distance to the target") {
  const MockOracle oracle(horse_scene());
  std::mt19937_64 rng(3);
  Rng crng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Camera cam = sample_camera(crng, {{-0.7, -0.4, -0.6}, {0.8, 0.5, 0.2}}, {}, 24, 24);
    const Image rgb = testing::random_image(rng, 24, 24, 3, 0.0, 1.0);
    const auto resp = oracle.guide(request_for(cam, "a horse and a crate", rgb));
    const Image t = oracle.target("a horse and a crate", cam);
    for (double eta : {0.05, 0.5, 1.0}) {
      Image next = rgb;
      for (std::size_t i = 0; i < next.data.size(); ++i) next.data[i] -= eta * resp.grad.data[i];
      CHECK(sq_dist(next, t) < sq_dist(rgb, t));
    }
  }
}

TEST_CASE("unknown prompts yield zero guidance and a flag") {
  const MockOracle oracle(horse_scene());
  const Camera cam = testing::front_camera(16, 16);
  auto req = request_for(cam, "a unicorn", Image(16, 16, 3, 0.3));
  req.tokens = {"unicorn"};
  const auto resp = oracle.guide(req);
  CHECK(resp.unknown_prompt);
  CHECK(resp.attention.empty());
  for (double v : resp.grad.data) CHECK(v == 0.0);
}

TEST_CASE("prompt matching is by whole word") {
  CHECK(contains_word("An Astronaut riding a horse", "astronaut"));
  CHECK(contains_word("horse", "horse"));
  CHECK_FALSE(contains_word("a seahorse", "horse"));
  CHECK_FALSE(contains_word("horses", "horse"));
  CHECK(contains_word("a horse, brown", "horse"));
}

TEST_CASE("mock oracle is deterministic") {
  const MockOracle a(horse_scene()), b(horse_scene());
  std::mt19937_64 rng(5);
  const Camera cam = testing::front_camera(20, 20);
  auto req = request_for(cam, "an astronaut riding a horse", testing::random_image(rng, 20, 20, 3, 0, 1));
  req.tokens = {"astronaut", "horse"};
  const auto r1 = a.guide(req), r2 = b.guide(req);
  CHECK(r1.grad == r2.grad);
  CHECK(r1.attention == r2.attention);
  CHECK(a.config_hash() == b.config_hash());
}

TEST_CASE("request and response validation") {
  const MockOracle oracle(horse_scene());
  const Camera cam = testing::front_camera(8, 8);
  SUBCASE("rgb out of range") {
    CHECK_THROWS_AS(oracle.guide(request_for(cam, "horse", Image(8, 8, 3, 1.5))), ValidationError);
  }
  SUBCASE("shape disagrees with the camera") {
    CHECK_THROWS_AS(oracle.guide(request_for(cam, "horse", Image(8, 7, 3))), ValidationError);
  }
  SUBCASE("timestep out of range") {
    auto r = request_for(cam, "horse", Image(8, 8, 3));
    r.timestep = 0;
    CHECK_THROWS_AS(oracle.guide(r), ValidationError);
  }
  SUBCASE("non-finite grad") {
    GuidanceResponse r;
    r.grad = Image(8, 8, 3);
    r.grad.data[5] = std::nan("");
    CHECK_THROWS_AS(r.validate(8, 8), NonFiniteError);
  }
  SUBCASE("attention not max-normalized") {
    GuidanceResponse r;
    r.grad = Image(8, 8, 3);
    r.attention["horse"] = Image(8, 8, 1, 0.5);
    CHECK_THROWS_AS(r.validate(8, 8), ProviderError);
    r.attention["horse"] = Image(8, 8, 1, 0.0);
    CHECK_NOTHROW(r.validate(8, 8));
  }
}

TEST_CASE("reference scene JSON round trip") {
  const auto scene = horse_scene();
  const auto again = ReferenceScene::from_json(scene.to_json());
  CHECK(again.to_json() == scene.to_json());
  CHECK_THROWS_AS(ReferenceScene::from_json(nlohmann::json::parse(R"([{"token": "x", "kind": "cone",
      "center": [0,0,0], "radii": [1,1,1], "color": [1,1,1]}])")),
                  ParseError);
  CHECK_THROWS_AS(ReferenceScene::from_json(nlohmann::json::parse(R"([{"token": "x", "kind": "box",
      "center": [0,0,0], "color": [1,1,1]}])")),
                  ParseError);
}
