#pragma once

#include <span>
#include <vector>

#include "grala/camera.hpp"
#include "grala/gaussian.hpp"
#include "grala/image.hpp"

namespace grala {

struct RenderSettings {
  double low_pass = 0.3;  // px^2 added to the projected covariance diagonal
};

struct RenderOutput {
  Image rgb;    // H x W x 3, black background
  Image alpha;  // H x W, 1 - final transmittance
  Image depth;  // H x W, expected depth with the background at kFarDepth
};

/// Upstream gradients dL/d(rgb, alpha, depth). Empty images count as zero.
struct PixelGradients {
  Image rgb;
  Image alpha;
  Image depth;

  static PixelGradients zeros(int width, int height) {
    return {Image(width, height, 3), Image(width, height, 1), Image(width, height, 1)};
  }
};

/// Per-splat screen-space state of one forward pass, in compositing order.
struct ProjectedSplat {
  std::size_t model = 0;  // index into the rendered model list
  std::size_t index = 0;  // gaussian index inside that model
  Vec3 cam;               // camera-space mean
  double u = 0, v = 0;    // projected mean, pixels
  double cov[3] = {};     // 2D covariance (xx, xy, yy) incl. low-pass
  double conic[3] = {};   // its inverse (xx, xy, yy)
  double opacity = 0;
  Vec3 color;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel rect of the 3-sigma footprint

  /// Mahalanobis distance squared of a pixel center.
  double mahalanobis2(int x, int y) const {
    const double dx = x + 0.5 - u, dy = y + 0.5 - v;
    return conic[0] * dx * dx + 2 * conic[1] * dx * dy + conic[2] * dy * dy;
  }
};

/// Everything render_backward needs from the matching forward pass.
struct RenderTape {
  std::vector<const GaussianModel*> models;
  std::vector<std::size_t> model_sizes;
  Camera camera;
  RenderSettings settings;
  std::vector<ProjectedSplat> splats;
  std::vector<double> final_transmittance;
  bool recorded = false;
};

struct RenderResult {
  RenderOutput image;
  RenderTape tape;
};

/// Footprint weight: exp(-q/2) minus its tangent at q = 9 (3 sigma),
/// rescaled to 1 at the center. Value and slope both reach 0 at the cutoff.
double footprint_weight(double mahalanobis2);

/// EWA splatting of the concatenated gaussians of `models`, depth-sorted and
/// composited front to back.
RenderResult render(std::span<const GaussianModel* const> models, const Camera& camera, const RenderSettings& settings = {});
RenderResult render(const GaussianModel& model, const Camera& camera, const RenderSettings& settings = {});

/// Accumulates parameter gradients into `models[i].grads`. The model list
/// must be the one the tape was recorded with; throws Error otherwise.
void render_backward(const RenderTape& tape, const PixelGradients& grads, std::span<GaussianModel* const> models);
void render_backward(const RenderTape& tape, const PixelGradients& grads, GaussianModel& model);

}  // namespace grala
