#include "grala/camera.hpp"

#include <cmath>

#include "grala/error.hpp"

namespace grala {

void Camera::validate() const {
  if (eye == target) throw ValidationError("camera eye equals target");
  if (!(fov_deg > 10.0 && fov_deg < 120.0)) throw ValidationError("camera fov must lie in (10, 120) degrees");
  if (width <= 0 || height <= 0) throw ValidationError("camera resolution must be positive");
  if (length(cross(target - eye, up)) <= 1e-12 * length(target - eye))
    throw ValidationError("camera up vector is parallel to the view direction");
}

Mat3 Camera::rotation() const {
  const Vec3 forward = normalize(target - eye);
  const Vec3 right = normalize(cross(forward, up));
  const Vec3 down = cross(forward, right);
  return Mat3::from_rows(right, down, forward);
}

double Camera::focal() const { return 0.5 * height / std::tan(0.5 * deg_to_rad(fov_deg)); }

CameraFrame::CameraFrame(const Camera& c)
    : rot(c.rotation()), eye(c.eye), fx(c.focal()), fy(c.focal()), cx(c.cx()), cy(c.cy()) {}

Camera sample_camera(Rng& rng, const LayoutBox& target_box, const CameraSamplingConfig& config, int width,
                     int height) {
  std::uniform_real_distribution<double> azimuth(0.0, 360.0);
  std::uniform_real_distribution<double> elevation(config.min_elevation_deg, config.max_elevation_deg);
  const double az = deg_to_rad(azimuth(rng));
  const double el = deg_to_rad(elevation(rng));
  const double dist = config.distance_factor * target_box.diagonal();

  Camera cam;
  cam.target = target_box.center();
  cam.eye = cam.target + Vec3{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)} * dist;
  cam.up = {0, 1, 0};
  cam.fov_deg = config.fov_deg;
  cam.width = width;
  cam.height = height;
  return cam;
}

}  // namespace grala
