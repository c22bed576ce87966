#pragma once

#include <cstdint>
#include <random>

#include "grala/box.hpp"
#include "grala/math.hpp"

namespace grala {

inline constexpr double kNearPlane = 0.01;  // m
inline constexpr double kFarDepth = 100.0;  // m, background depth

/// Pinhole camera. Camera space is x right, y down, z forward; pixel (i, j)
/// has its center at (i + 0.5, j + 0.5).
struct Camera {
  Vec3 eye{0, 0, 4};
  Vec3 target{0, 0, 0};
  Vec3 up{0, 1, 0};
  double fov_deg = 60.0;  // vertical
  int width = 64;
  int height = 64;

  /// Throws ValidationError unless eye != target, fov in (10, 120), up not
  /// parallel to the view direction, and a positive resolution.
  void validate() const;

  /// World-to-camera rotation; rows are the camera right, down and forward axes.
  Mat3 rotation() const;
  double focal() const;  // pixels, same for both axes
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }

  Vec3 to_camera(const Vec3& world) const { return rotation() * (world - eye); }

  friend bool operator==(const Camera&, const Camera&) = default;
};

/// Precomputed camera frame for inner loops.
struct CameraFrame {
  Mat3 rot;
  Vec3 eye;
  double fx, fy, cx, cy;

  explicit CameraFrame(const Camera& c);
  Vec3 to_camera(const Vec3& p) const { return rot * (p - eye); }
  /// Pixel coordinates of a camera-space point with z > 0.
  double u(const Vec3& pc) const { return fx * pc.x / pc.z + cx; }
  double v(const Vec3& pc) const { return fy * pc.y / pc.z + cy; }
};

struct CameraSamplingConfig {
  double min_elevation_deg = -10.0;
  double max_elevation_deg = 45.0;
  double distance_factor = 1.8;  // eye distance = factor * box diagonal
  double fov_deg = 60.0;
};

using Rng = std::mt19937_64;

/// Orbit camera looking at the box center from a random azimuth/elevation.
Camera sample_camera(Rng& rng, const LayoutBox& target_box, const CameraSamplingConfig& config, int width,
                     int height);

}  // namespace grala
