#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grala/camera.hpp"
#include "grala/gaussian.hpp"
#include "grala/guidance.hpp"
#include "grala/losses.hpp"
#include "grala/scene_graph.hpp"
#include "grala/splat_render.hpp"
#include "json.hpp"

namespace grala {

struct ScheduleStage {
  int start = 0;  // first iteration of the stage
  int resolution = 128;
  friend bool operator==(const ScheduleStage&, const ScheduleStage&) = default;
};

struct Schedule {
  int total_iters = 3000;
  std::vector<ScheduleStage> stages{{0, 128}, {1000, 256}, {2000, 512}};
  int timestep_max = 980;
  int timestep_min = 20;
  int local_warmup = 600;
  int densify_from = 300;
  int densify_until = 2400;
  int densify_every = 100;
  int checkpoint_every = 500;

  int resolution(int iter) const;
  /// round(linear max -> min) over [0, total_iters - 1].
  int timestep(int iter) const;
  bool local_active(int iter) const { return iter >= local_warmup; }
  /// Densification runs after iterations densify_from, +every, ... up to densify_until.
  bool densify_at(int iter) const;

  /// All stages at one resolution.
  void set_resolution(int res) { stages = {{0, res}}; }
  /// Throws ValidationError for an empty or unordered staircase.
  void validate() const;

  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);
};

struct LearningRates {
  double position_factor = 1.6e-4;  // times the box diagonal
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double opacity = 5e-2;
  double color = 1e-2;
};

struct DensifyConfig {
  double grad_threshold = 2e-4;       // mean world-space position gradient norm
  double clone_scale_fraction = 0.01; // of the box diagonal
  double split_scale_factor = 0.8;
  double prune_opacity = 0.005;
  std::size_t max_gaussians = 20000;
};

struct OptimConfig {
  Schedule schedule;
  LossWeights weights;
  LearningRates lr;
  DensifyConfig densify;
  CameraSamplingConfig cameras;
  std::size_t num_gaussians = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
  bool mask_guidance = true;  // false: guidance mask is all ones, layout mask unchanged

  nlohmann::json to_json() const;
  static OptimConfig from_json(const nlohmann::json& j);
};

/// Adam moments, one Gaussian-shaped slot per splat.
struct AdamState {
  std::vector<Gaussian> m;
  std::vector<Gaussian> v;
  long step = 0;

  static AdamState for_model(const GaussianModel& model);
};

/// One Adam step along model.grads; colors are clamped to [0, 1].
void adam_step(GaussianModel& model, AdamState& state, const OptimConfig& config, double box_diagonal);

/// Running mean of the world-space position gradient norm per splat.
struct GradStats {
  std::vector<double> sum;
  std::vector<int> count;

  void reset(std::size_t n) {
    sum.assign(n, 0.0);
    count.assign(n, 0);
  }
  /// Adds |d position| for every gaussian flagged in `visible`.
  void accumulate(const GaussianModel& model, const std::vector<char>& visible);
  double mean(std::size_t i) const { return count[i] ? sum[i] / count[i] : 0.0; }
};

/// Flags the gaussians of tape.models[model_index] that the pass rasterized.
void mark_visible(const RenderTape& tape, std::size_t model_index, std::vector<char>& visible);

struct DensifyResult {
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
  bool kept_survivor = false;  // everything would have been pruned
};

/// Clones small / splits large high-gradient splats, then prunes
/// low-opacity ones. Keeps `state` aligned with the model and resets `stats`.
DensifyResult densify_and_prune(GaussianModel& model, AdamState& state, GradStats& stats, double box_diagonal,
                                const DensifyConfig& config, Rng& rng);

/// Per-iteration view handed to an observer; lets tests inspect gradients.
struct IterationProbe {
  int iter = 0;
  const Camera* camera = nullptr;
  const GaussianModel* model = nullptr;  // single-node runs
  const RenderTape* tape = nullptr;
  const Mask* mask = nullptr;
  const Mask* guidance_mask = nullptr;
  const NodeLoss* loss = nullptr;
};
using IterationObserver = std::function<void(const IterationProbe&)>;

struct RunOptions {
  std::string run_dir;  // empty: nothing written
  IterationObserver observer;
  std::function<void(const std::string&)> warn;  // defaults to stderr
};

/// Derives a per-node seed from the run seed.
std::uint64_t node_seed(std::uint64_t seed, const std::string& node_id);

/// Single-node loop. On a provider failure the error propagates; periodic
/// checkpoints already written stay on disk.
GaussianModel optimize_single(const ObjectNode& node, const LayoutBox& box, const GuidanceProvider& provider,
                              const OptimConfig& config, std::uint64_t seed, const RunOptions& options = {});

struct SuperRunDirs {
  std::string joint;   // log, config and the union model
  std::string first;   // member checkpoints and final model
  std::string second;
};

std::pair<GaussianModel, GaussianModel> optimize_super(const SceneGraph& graph, const SuperNode& supernode,
                                                        const LayoutBox& b1, const LayoutBox& b2,
                                                        const GuidanceProvider& provider, const OptimConfig& config,
                                                        std::uint64_t seed, const SuperRunDirs& dirs = {},
                                                        std::function<void(const std::string&)> warn = {});

}  // namespace grala
