#include "grala/eval.hpp"

#include <cmath>

#include "grala/error.hpp"
#include "grala/json_util.hpp"

namespace grala {

double MockScorer::score(const ScoreRequest& r) const {
  const SceneRender ref = render_scene(reference_, r.camera);
  if (ref.rgb.width != r.image.width || ref.rgb.height != r.image.height || r.image.channels != 3)
    throw ProviderError("mock scorer: image does not match the camera resolution");
  double sum = 0;
  const std::size_t n = ref.rgb.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    double d2 = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = r.image.data[p * 3 + c] - ref.rgb.data[p * 3 + c];
      d2 += d * d;
    }
    sum += std::sqrt(d2);
  }
  return -sum / static_cast<double>(n);
}

nlohmann::json EvalConfig::to_json() const {
  return {{"views", views},
          {"seed", seed},
          {"resolution", resolution},
          {"distance_factor", cameras.distance_factor},
          {"fov_deg", cameras.fov_deg},
          {"min_elevation_deg", cameras.min_elevation_deg},
          {"max_elevation_deg", cameras.max_elevation_deg}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json views_json = nlohmann::json::array();
  for (const auto& v : per_view) {
    nlohmann::json j{{"eye", grala::to_json(v.camera.eye)}, {"target", grala::to_json(v.camera.target)}};
    if (v.score)
      j["score"] = *v.score;
    else
      j["error"] = v.error;
    views_json.push_back(std::move(j));
  }
  return {{"scorer", scorer}, {"prompt", prompt},  {"views", views},
          {"skipped", skipped}, {"mean", mean}, {"per_view", std::move(views_json)}};
}

EvalReport evaluate_scene(const Scene& scene, const Scorer& scorer, const EvalConfig& config) {
  if (config.views < 1) throw ValidationError("eval: at least one view is required");
  const LayoutBox bounds = scene.bounds();
  if (bounds.volume() <= 0) throw ValidationError("eval: the scene has no geometry");
  Rng rng(config.seed);
  EvalReport report;
  report.scorer = scorer.name();
  report.prompt = scene.prompt;
  report.views = config.views;
  double sum = 0;
  for (int i = 0; i < config.views; ++i) {
    EvalView view{sample_camera(rng, bounds, config.cameras, config.resolution, config.resolution), std::nullopt, {}};
    const SceneRender r = render_scene(scene, view.camera);
    try {
      const double s = scorer.score({r.rgb, scene.prompt, view.camera});
      if (!std::isfinite(s)) throw ProviderError("non-finite score");
      view.score = s;
      sum += s;
    } catch (const Error& e) {
      view.error = e.what();
      ++report.skipped;
    }
    report.per_view.push_back(std::move(view));
  }
  if (report.skipped > kMaxSkippedFraction * config.views)
    throw ProviderError("eval: scorer failed on " + std::to_string(report.skipped) + " of " +
                        std::to_string(config.views) + " views");
  const int scored = config.views - report.skipped;
  report.mean = scored > 0 ? sum / scored : 0.0;
  return report;
}

}  // namespace grala
