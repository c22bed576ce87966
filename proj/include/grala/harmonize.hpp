#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "grala/camera.hpp"
#include "grala/mesh.hpp"
#include "grala/refiner.hpp"
#include "grala/scene_graph.hpp"
#include "json.hpp"

namespace grala {

struct ScenePart {
  std::string node_id;
  Mesh mesh;  // world frame
  LayoutBox box;
};

struct Scene {
  std::vector<ScenePart> parts;  // graph node order
  std::string prompt;

  /// Union of the mesh bounds; the zero box for an empty scene.
  LayoutBox bounds() const;
};

struct Assembly {
  Scene scene;
  std::vector<std::string> warnings;
};

/// Places one mesh per graph node. Throws ValidationError naming the node
/// when a mesh is missing or its bounds leave `tolerance` x its box.
Assembly assemble_scene(const SceneGraph& graph, const std::map<std::string, Mesh>& meshes, const LayoutSet& layout,
                        double tolerance = 1.05);

struct SceneRender {
  Image rgb;    // black background
  Image depth;  // camera z, kFarDepth where nothing is hit
  std::vector<int> part;   // per pixel, -1 for background
  std::vector<int> texel;  // per pixel, y * width + x in that part's texture
};

/// Z-buffered rasterization with perspective-correct uvs and nearest-texel
/// sampling. Triangles reaching behind the near plane are skipped.
SceneRender render_scene(const Scene& scene, const Camera& camera);

struct HarmonizeConfig {
  int iterations = 70;
  double step = 0.2;
  double strength = 0.5;
  int resolution = 64;
  CameraSamplingConfig cameras;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct HarmonizeIteration {
  int iter = 0;
  double mse = 0;
  std::size_t texels_updated = 0;
};

using HarmonizeObserver = std::function<void(const HarmonizeIteration&, const Scene&, const SceneRender&)>;

/// Refines textures toward the refiner's output over sampled scene views.
/// Each hit texel steps by `step` times the mean residual of the pixels
/// sampling it. Geometry is never touched. A refiner failure propagates and
/// leaves the textures of the last completed iteration.
std::vector<HarmonizeIteration> harmonize(Scene& scene, const RefinerProvider& refiner, const HarmonizeConfig& config,
                                          const HarmonizeObserver& observer = {});

/// <dir>/<node>.{obj,mtl,png} per part plus scene.json.
void write_scene(const Scene& scene, const std::string& dir);
Scene read_scene(const std::string& dir);

}  // namespace grala
