#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grala/harmonize.hpp"
#include "json.hpp"

namespace grala {

inline constexpr int kEvalViews = 200;
inline constexpr double kMaxSkippedFraction = 0.1;

struct ScoreRequest {
  const Image& image;
  const std::string& text;
  const Camera& camera;
};

/// (image, text) -> scalar, higher is better.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const ScoreRequest& request) const = 0;
  virtual std::string name() const = 0;
};

/// Negative mean per-pixel RGB distance to the reference scene seen from the
/// same camera; 0 is a perfect match.
class MockScorer final : public Scorer {
 public:
  explicit MockScorer(Scene reference) : reference_(std::move(reference)) {}
  double score(const ScoreRequest& request) const override;
  std::string name() const override { return "mock-pixel-distance"; }

 private:
  Scene reference_;
};

struct EvalConfig {
  int views = kEvalViews;
  std::uint64_t seed = 0;
  int resolution = 64;
  CameraSamplingConfig cameras;

  nlohmann::json to_json() const;
};

struct EvalView {
  Camera camera;
  std::optional<double> score;  // empty when the scorer failed
  std::string error;
};

struct EvalReport {
  std::string scorer;
  std::string prompt;
  int views = 0;
  int skipped = 0;
  double mean = 0;  // over scored views
  std::vector<EvalView> per_view;

  nlohmann::json to_json() const;
};

/// Scores the scene from `views` cameras orbiting its bounds. A failing view
/// is skipped; more than 10% skipped throws ProviderError.
EvalReport evaluate_scene(const Scene& scene, const Scorer& scorer, const EvalConfig& config);

}  // namespace grala
