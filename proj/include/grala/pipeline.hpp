#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grala/eval.hpp"
#include "grala/optimizer.hpp"
#include "json.hpp"

namespace grala {

enum class Stage { compose, validate, generate, mesh, harmonize, render, eval };

inline constexpr Stage kStages[] = {Stage::compose,   Stage::validate, Stage::generate, Stage::mesh,
                                    Stage::harmonize, Stage::render,   Stage::eval};

std::string_view to_string(Stage stage);

struct RunConfig {
  std::string scene_path;       // scene DSL file
  std::string prompt;           // composing through a recorded LLM transcript instead
  std::string transcript_path;  // {"replies": [...]}
  std::string reference_path;   // mock target scene; default: one ellipsoid per box
  std::string provider = "mock";  // mock | remote
  std::string endpoint;
  std::uint64_t seed = 0;
  std::string out_dir = "grala-out";
  bool force = false;
  std::optional<double> lambda_local;
  std::optional<int> iters;
  std::optional<int> resolution;  // replaces the resolution staircase
  int views = kEvalViews;
  int render_views = 8;
  int render_resolution = 128;
  int mesh_resolution = 128;

  /// Throws ValidationError for contradictory or out-of-range settings.
  void validate() const;
  OptimConfig optim() const;
  /// Everything but the output directory and --force.
  nlohmann::json to_json() const;
};

struct StageEvent {
  Stage stage;
  std::string unit;  // generate: node or super-node id; empty for whole stages
  bool cached = false;
};

/// Runs the stages up to `last` under config.out_dir. A completed stage
/// whose input hash is unchanged is reused (reported cached) unless
/// config.force. Errors propagate unchanged; `current()` names the stage
/// that raised them and its partial outputs stay on disk.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::function<void(const StageEvent&)> on_event = {},
                    std::function<void(const std::string&)> warn = {});

  /// `with_render` = false skips the render stage, which nothing downstream reads.
  void run(Stage last = Stage::eval, bool with_render = true);
  Stage current() const { return current_; }

  std::string stage_dir(Stage stage) const;

 private:
  RunConfig config_;
  std::function<void(const StageEvent&)> on_event_;
  std::function<void(const std::string&)> warn_;
  Stage current_ = Stage::compose;

  std::string compose();
  std::string validate(const std::string& input);
  std::string generate(const std::string& input);
  std::string mesh(const std::string& input);
  std::string harmonize(const std::string& input);
  std::string render(const std::string& input);
  std::string eval(const std::string& input);

  bool reuse(const std::string& dir, const std::string& marker, const std::string& key) const;
  void enter(Stage stage);
};

}  // namespace grala
