#include "grala/losses.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "grala/error.hpp"
#include "grala/layout.hpp"
#include "test_util.hpp"

using namespace grala;

namespace {

Mask half_mask(int w, int h, bool right) {
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(x, y) = ((x >= w / 2) == right) ? 1 : 0;
  return m;
}

Mask random_mask(std::mt19937_64& rng, int w, int h) {
  Mask m(w, h);
  for (auto& v : m.data) v = rng() % 2;
  return m;
}

GuidanceResponse random_guidance(std::mt19937_64& rng, int w, int h) {
  GuidanceResponse g;
  g.grad = testing::random_image(rng, w, h, 3);
  return g;
}

/// The scalar whose parameter gradient node_objective's pixel gradients
/// describe: guidance enters linearly with its field held fixed.
double effective_loss(const RenderOutput& r, const Mask& m, const Image& g, const Image* att, const LossWeights& w) {
  const double n = static_cast<double>(r.alpha.pixel_count());
  double lin = 0, lay = 0, loc = 0;
  for (std::size_t p = 0; p < r.alpha.data.size(); ++p) {
    if (m.data[p])
      for (int c = 0; c < 3; ++c) lin += g.data[p * 3 + c] * r.rgb.data[p * 3 + c];
    else
      lay += r.alpha.data[p];
    if (att) loc += (r.alpha.data[p] - att->data[p]) * (r.alpha.data[p] - att->data[p]);
  }
  return w.guidance * lin / n + w.layout * lay / n + (att ? w.local * loc / n : 0.0);
}

}  // namespace

TEST_CASE("layout loss tabulated cases are exact") {
  const int w = 16, h = 8;
  CHECK(layout_loss(Image(w, h, 1, 1.0), Mask(w, h, 1)).value == 0.0);
  CHECK(layout_loss(Image(w, h, 1, 1.0), Mask(w, h, 0)).value == 1.0);
  Image left(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) left.at(x, y) = 1.0;
  CHECK(layout_loss(left, half_mask(w, h, true)).value == 0.5);
  const auto l = layout_loss(left, half_mask(w, h, true));
  CHECK(l.grad.at(0, 0) == 1.0 / (w * h));
  CHECK(l.grad.at(w - 1, 0) == 0.0);
  CHECK_THROWS_AS(layout_loss(Image(4, 4, 1), Mask(4, 5)), ValidationError);
}

TEST_CASE("layout loss vanishes exactly when alpha vanishes outside the mask") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Mask m = random_mask(rng, 9, 7);
    Image a = testing::random_image(rng, 9, 7, 1, 0.0, 1.0);
    for (std::size_t p = 0; p < a.data.size(); ++p)
      if (!m.data[p]) a.data[p] = 0;
    CHECK(layout_loss(a, m).value == 0.0);
    std::size_t p = rng() % a.data.size();
    while (m.data[p]) p = (p + 1) % a.data.size();
    if (m.count() == m.data.size()) continue;
    a.data[p] = 1e-300;
    CHECK(layout_loss(a, m).value > 0.0);
  }
}

TEST_CASE("masked guidance") {
  std::mt19937_64 rng(1);
  const Image g = testing::random_image(rng, 6, 5, 3);
  CHECK(masked_guidance(g, Mask(6, 5, 1)).grad == g);
  for (double v : masked_guidance(g, Mask(6, 5, 0)).grad.data) CHECK(v == 0.0);

  Mask checker(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) checker.at(x, y) = (x + y) % 2;
  const auto mg = masked_guidance(g, checker);
  double abs_sum = 0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) {
        const double want = checker.at(x, y) ? g.at(x, y, c) : 0.0;
        CHECK(mg.grad.at(x, y, c) == want);
        if (!checker.at(x, y)) CHECK_FALSE(std::signbit(mg.grad.at(x, y, c)));
        abs_sum += std::abs(want);
      }
  CHECK(mg.surrogate == doctest::Approx(abs_sum / 90.0).epsilon(1e-14));
}

TEST_CASE("localization loss tabulated cases") {
  const Image a(5, 5, 1, 0.3);
  CHECK(localization_loss(a, a).value == 0.0);
  CHECK(localization_loss(Image(5, 5, 1, 1.0), Image(5, 5, 1, 0.0)).value == 1.0);
  CHECK(localization_loss(Image(5, 5, 1, 0.5), Image(5, 5, 1, 1.0)).value == 0.25);
  CHECK(localization_loss(Image(5, 5, 1, 0.5), Image(5, 5, 1, 1.0)).grad.at(2, 2) == 2 * -0.5 / 25);
}

TEST_CASE("node objective at its minimum gives zero parameter gradients") {
  // A splat well inside its mask, guidance at rest, attention equal to alpha.
  GaussianModel model;
  Gaussian g;
  g.log_scale = {std::log(0.1), std::log(0.1), std::log(0.1)};
  g.opacity_logit = logit(0.6);
  g.color = {0.5, 0.2, 0.1};
  model.gaussians = {g};
  model.zero_grad();
  const Camera cam = testing::front_camera(32, 32);
  auto rr = render(model, cam);
  const Mask m = project_box({{-0.6, -0.6, -0.6}, {0.6, 0.6, 0.6}}, cam);
  GuidanceResponse zero;
  zero.grad = Image(32, 32, 3);
  const auto out = node_objective(rr.image, m, zero, &rr.image.alpha, {});
  CHECK(out.breakdown.total == 0.0);
  for (double v : out.grads.rgb.data) CHECK(v == 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      CHECK(out.grads.alpha.at(x, y) == (m.at(x, y) ? 0.0 : 10.0 / (32 * 32)));
  render_backward(rr.tape, out.grads, model);
  for (double v : testing::all_grads(model)) CHECK(v == 0.0);
}

TEST_CASE("node objective equals the weighted sum of the separate terms") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const int w = 3 + static_cast<int>(rng() % 6), h = 3 + static_cast<int>(rng() % 6);
    RenderOutput r{testing::random_image(rng, w, h, 3, 0, 1), testing::random_image(rng, w, h, 1, 0, 1), {}};
    const Mask m = random_mask(rng, w, h);
    const auto g = random_guidance(rng, w, h);
    const Image att = testing::random_image(rng, w, h, 1, 0, 1);
    const LossWeights lw{0.5 + t * 0.1, 3.0, 0.7};
    const auto out = node_objective(r, m, g, &att, lw);

    const double lay = layout_loss(r.alpha, m).value;
    const double sur = masked_guidance(g.grad, m).surrogate;
    const double loc = localization_loss(r.alpha, att).value;
    CHECK(out.breakdown.layout == lay);
    CHECK(out.breakdown.masked_guidance == sur);
    CHECK(*out.breakdown.localization == loc);
    CHECK(out.breakdown.total == doctest::Approx(lw.guidance * sur + lw.layout * lay + lw.local * loc).epsilon(1e-13));
    const auto mg = masked_guidance(g.grad, m).grad;
    const auto lg = layout_loss(r.alpha, m).grad, cg = localization_loss(r.alpha, att).grad;
    for (std::size_t i = 0; i < mg.data.size(); ++i)
      CHECK(out.grads.rgb.data[i] == doctest::Approx(lw.guidance * mg.data[i] / (w * h)).epsilon(1e-13));
    for (std::size_t p = 0; p < lg.data.size(); ++p)
      CHECK(out.grads.alpha.data[p] == doctest::Approx(lw.layout * lg.data[p] + lw.local * cg.data[p]).epsilon(1e-13));
  }
}

TEST_CASE("single-node form equals the object form with lambda_local = 0") {
  std::mt19937_64 rng(3);
  RenderOutput r{testing::random_image(rng, 7, 6, 3, 0, 1), testing::random_image(rng, 7, 6, 1, 0, 1), {}};
  const Mask m = random_mask(rng, 7, 6);
  const auto g = random_guidance(rng, 7, 6);
  const Image att = testing::random_image(rng, 7, 6, 1, 0, 1);
  LossWeights lw;
  lw.local = 0;
  const auto single = node_objective(r, m, g, nullptr, lw);
  const auto object = node_objective(r, m, g, &att, lw);
  CHECK(single.breakdown.total == object.breakdown.total);
  CHECK(single.grads.rgb == object.grads.rgb);
  CHECK(single.grads.alpha == object.grads.alpha);
  CHECK_FALSE(single.breakdown.to_json().contains("localization"));
  CHECK(object.breakdown.to_json().contains("localization"));
  const Image empty;
  CHECK_THROWS_AS(node_objective(r, m, g, &empty, lw), ValidationError);
}

TEST_CASE("super-node objective") {
  std::mt19937_64 rng(4);
  const int w = 6, h = 5;
  auto rand_render = [&] {
    return RenderOutput{testing::random_image(rng, w, h, 3, 0, 1), testing::random_image(rng, w, h, 1, 0, 1), {}};
  };
  const RenderOutput ur = rand_render();
  const Mask um = random_mask(rng, w, h);
  const auto ug = random_guidance(rng, w, h);
  const std::vector<RenderOutput> mr{rand_render(), rand_render()};
  const std::vector<Mask> mm{random_mask(rng, w, h), random_mask(rng, w, h)};
  const std::vector<GuidanceResponse> mg{random_guidance(rng, w, h), random_guidance(rng, w, h)};
  const Image a0 = testing::random_image(rng, w, h, 1, 0, 1), a1 = testing::random_image(rng, w, h, 1, 0, 1);
  const std::vector<const Image*> att{&a0, &a1};
  const LossWeights lw;

  const auto s = supernode_objective(ur, um, ug, mr, mm, mg, att, lw);
  const double u_total = node_objective(ur, um, ug, nullptr, lw).breakdown.total;
  const double m_total = node_objective(mr[0], mm[0], mg[0], &a0, lw).breakdown.total +
                         node_objective(mr[1], mm[1], mg[1], &a1, lw).breakdown.total;
  CHECK(s.total == doctest::Approx(u_total + m_total).epsilon(1e-14));

  SUBCASE("swapping members leaves the total unchanged") {
    const std::vector<RenderOutput> r2{mr[1], mr[0]};
    const std::vector<Mask> m2{mm[1], mm[0]};
    const std::vector<GuidanceResponse> g2{mg[1], mg[0]};
    const std::vector<const Image*> a2{&a1, &a0};
    CHECK(supernode_objective(ur, um, ug, r2, m2, g2, a2, lw).total == s.total);
  }
  SUBCASE("ablating the union guidance removes exactly its surrogate") {
    GuidanceResponse zero;
    zero.grad = Image(w, h, 3);
    const auto ab = supernode_objective(ur, um, zero, mr, mm, mg, att, lw);
    CHECK(s.total - ab.total == doctest::Approx(lw.guidance * s.union_branch.masked_guidance).epsilon(1e-12));
    CHECK(ab.union_branch.total == doctest::Approx(lw.layout * s.union_branch.layout).epsilon(1e-14));
    for (double v : ab.union_grads.rgb.data) CHECK(v == 0.0);
  }
  SUBCASE("member count is checked") {
    const std::vector<RenderOutput> one{mr[0]};
    CHECK_THROWS_AS(supernode_objective(ur, um, ug, one, mm, mg, att, lw), ValidationError);
  }
  SUBCASE("all branches at their minima") {
    RenderOutput flat{Image(w, h, 3), Image(w, h, 1), {}};
    GuidanceResponse zero;
    zero.grad = Image(w, h, 3);
    const std::vector<RenderOutput> fr{flat, flat};
    const std::vector<GuidanceResponse> zg{zero, zero};
    const std::vector<const Image*> fa{&flat.alpha, &flat.alpha};
    CHECK(supernode_objective(flat, um, zero, fr, mm, zg, fa, lw).total == 0.0);
  }
}

TEST_CASE("loss gradients through the renderer match finite differences") {
  std::mt19937_64 rng(9);
  const int w = 32, h = 32;
  for (int trial = 0; trial < 10; ++trial) {
    GaussianModel model = testing::random_model(rng, 1 + static_cast<int>(rng() % 10));
    const Camera cam = testing::front_camera(w, h);
    const Mask m = project_box({{-0.3, -0.3, -0.3}, {0.3, 0.4, 0.3}}, cam);
    const auto g = random_guidance(rng, w, h);
    const Image att = testing::random_image(rng, w, h, 1, 0, 1);
    const LossWeights lw{1.0, 10.0, 1.0};
    const Image* a = trial % 2 ? &att : nullptr;

    auto rr = render(model, cam);
    const auto loss = node_objective(rr.image, m, g, a, lw);
    model.zero_grad();
    render_backward(rr.tape, loss.grads, model);
    const auto analytic = testing::all_grads(model);
    const auto fd = testing::central_differences(testing::all_params(model), [&] {
      return effective_loss(render(model, cam).image, m, g.grad, a, lw);
    });
    CHECK_MESSAGE(testing::relative_error(analytic, fd) < 1e-3, "trial " << trial);
  }
}

TEST_CASE("super-node gradients route through the union and the member renders") {
  std::mt19937_64 rng(10);
  const int w = 24, h = 24;
  for (int trial = 0; trial < 4; ++trial) {
    GaussianModel m1 = testing::random_model(rng, 4), m2 = testing::random_model(rng, 4);
    const Camera cam = testing::front_camera(w, h);
    const Mask um = project_box({{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}}, cam);
    const std::vector<Mask> mm{project_box({{-0.5, -0.5, -0.5}, {0.1, 0.5, 0.5}}, cam),
                               project_box({{-0.1, -0.5, -0.5}, {0.5, 0.5, 0.5}}, cam)};
    const auto ug = random_guidance(rng, w, h);
    const std::vector<GuidanceResponse> mg{random_guidance(rng, w, h), random_guidance(rng, w, h)};
    const Image a0 = testing::random_image(rng, w, h, 1, 0, 1), a1 = testing::random_image(rng, w, h, 1, 0, 1);
    const LossWeights lw;

    const std::vector<const GaussianModel*> both{&m1, &m2};
    auto ur = render(both, cam);
    auto r1 = render(m1, cam), r2 = render(m2, cam);
    const std::vector<RenderOutput> mr{r1.image, r2.image};
    const std::vector<const Image*> att{&a0, &a1};
    const auto s = supernode_objective(ur.image, um, ug, mr, mm, mg, att, lw);
    m1.zero_grad();
    m2.zero_grad();
    const std::vector<GaussianModel*> both_mut{&m1, &m2};
    render_backward(ur.tape, s.union_grads, both_mut);
    render_backward(r1.tape, s.member_grads[0], m1);
    render_backward(r2.tape, s.member_grads[1], m2);

    auto f = [&] {
      return effective_loss(render(both, cam).image, um, ug.grad, nullptr, lw) +
             effective_loss(render(m1, cam).image, mm[0], mg[0].grad, &a0, lw) +
             effective_loss(render(m2, cam).image, mm[1], mg[1].grad, &a1, lw);
    };
    auto params = testing::all_params(m1);
    for (double* p : testing::all_params(m2)) params.push_back(p);
    auto analytic = testing::all_grads(m1);
    for (double v : testing::all_grads(m2)) analytic.push_back(v);
    CHECK(testing::relative_error(analytic, testing::central_differences(params, f)) < 1e-3);
  }
}
