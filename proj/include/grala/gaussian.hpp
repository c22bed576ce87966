#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grala/box.hpp"
#include "grala/math.hpp"

namespace grala {

/// One 3D Gaussian. Activations: stddevs = exp(log_scale), rotation is
/// normalized on use, opacity = sigmoid(opacity_logit). Colors are
/// view-independent RGB.
struct Gaussian {
  Vec3 position;
  Vec3 log_scale;
  Quat rotation;
  double opacity_logit = 0;
  Vec3 color;

  /// Flat access to the 14 scalar parameters in declaration order.
  static constexpr int kParamCount = 14;
  double& param(int k);
  double param(int k) const;

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return {std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)}; }
  /// World covariance R diag(s^2) R^T.
  Mat3 covariance() const;

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

struct GaussianModel {
  std::string node_id;
  std::vector<Gaussian> gaussians;
  std::vector<Gaussian> grads;  // same shape as gaussians; filled by render_backward

  std::size_t size() const { return gaussians.size(); }
  void zero_grad() { grads.assign(gaussians.size(), zero_gaussian()); }
  static Gaussian zero_gaussian() {
    Gaussian g;
    g.rotation = {0, 0, 0, 0};
    return g;
  }
  bool finite() const;
};

/// Positions uniform in the box, isotropic stddev 2% of the box diagonal,
/// opacity 0.1, colors uniform in [0.3, 0.7], identity rotations.
GaussianModel init_in_box(const LayoutBox& box, std::size_t count, std::uint64_t seed, std::string node_id = {});

/// Concatenation of several models (the joint model of a super-node).
GaussianModel merge_models(const std::vector<const GaussianModel*>& models, std::string node_id = {});

/// Little-endian "GRLA" file: magic, u32 version, u32 count, then float32
/// arrays for positions, log-scales, quaternions (w, x, y, z), opacity
/// logits and colors.
void save_grla(const GaussianModel& model, const std::string& path);
GaussianModel load_grla(const std::string& path, std::string node_id = {});
std::vector<std::uint8_t> encode_grla(const GaussianModel& model);
GaussianModel decode_grla(const std::vector<std::uint8_t>& bytes, std::string node_id = {});

}  // namespace grala
