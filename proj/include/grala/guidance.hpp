#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "grala/camera.hpp"
#include "grala/image.hpp"
#include "grala/scene_graph.hpp"
#include "json.hpp"

namespace grala {

struct GuidanceRequest {
  Image rgb;  // H x W x 3 in [0, 1]
  std::string prompt;
  Camera camera;
  int timestep = 1000;              // [1, 1000]
  std::vector<std::string> tokens;  // object names needing attention maps

  /// Throws ValidationError on out-of-range rgb, timestep, or a shape that
  /// disagrees with the camera.
  void validate() const;
};

struct GuidanceResponse {
  Image grad;                           // H x W x 3 guidance direction
  std::map<std::string, Image> attention; // token -> H x W in [0, 1]
  bool unknown_prompt = false;          // provider could not interpret the prompt

  /// Throws NonFiniteError / ProviderError when the payload breaks the
  /// response invariants for a `width` x `height` request.
  void validate(int width, int height) const;
};

/// Pure request -> response function standing in for the diffusion prior
/// and the attention extractor. Implementations must be safe to call
/// concurrently.
class GuidanceProvider {
 public:
  virtual ~GuidanceProvider() = default;
  virtual GuidanceResponse guide(const GuidanceRequest& request) const = 0;
  virtual std::string name() const = 0;
  /// Identifies the provider configuration for run reproducibility.
  virtual std::string config_hash() const = 0;
};

struct ReferencePrimitive {
  enum class Kind { ellipsoid, box };
  std::string token;
  Kind kind = Kind::ellipsoid;
  Vec3 center;
  Vec3 size;  // radii for ellipsoids, full extents for boxes
  Vec3 color;

  /// Ray parameter of the first hit in front of the origin, or a negative value.
  double intersect(const Vec3& origin, const Vec3& dir) const;
};

/// Colored analytic primitives keyed by token; the mock oracle's target scene.
class ReferenceScene {
 public:
  ReferenceScene() = default;
  explicit ReferenceScene(std::vector<ReferencePrimitive> prims) : prims_(std::move(prims)) {}

  static ReferenceScene from_json(const nlohmann::json& j);
  /// One ellipsoid per laid-out node: token = node name, centered in its
  /// box with radii `radius_fraction` x the box extents, hashed color.
  static ReferenceScene from_layout(const SceneGraph& graph, const LayoutSet& layout, double radius_fraction = 0.4);
  static ReferenceScene load(const std::string& path);
  nlohmann::json to_json() const;

  const std::vector<ReferencePrimitive>& primitives() const { return prims_; }

  /// Primitives whose token occurs as a whole word of the prompt (case-insensitive).
  std::vector<const ReferencePrimitive*> match_prompt(std::string_view prompt) const;
  std::vector<const ReferencePrimitive*> match_token(std::string_view token) const;

 private:
  std::vector<ReferencePrimitive> prims_;
};

/// Nearest-hit ray cast of the primitives, black background.
Image render_primitives(const std::vector<const ReferencePrimitive*>& prims, const Camera& camera);
/// 1 wherever a pixel ray hits any of the primitives.
Mask primitive_silhouette(const std::vector<const ReferencePrimitive*>& prims, const Camera& camera);

/// Deterministic procedural oracle: grad = rgb - T with T the analytic
/// render of the primitives named in the prompt, attention = silhouettes.
class MockOracle final : public GuidanceProvider {
 public:
  explicit MockOracle(ReferenceScene reference) : reference_(std::move(reference)) {}

  GuidanceResponse guide(const GuidanceRequest& request) const override;
  std::string name() const override { return "mock"; }
  std::string config_hash() const override;

  const ReferenceScene& reference() const { return reference_; }
  /// The target image T for a prompt and camera.
  Image target(std::string_view prompt, const Camera& camera) const;

 private:
  ReferenceScene reference_;
};

bool contains_word(std::string_view text, std::string_view word);

}  // namespace grala
