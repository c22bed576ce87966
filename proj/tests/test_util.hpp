#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "grala/camera.hpp"
#include "grala/gaussian.hpp"
#include "grala/image.hpp"

namespace grala::testing {

inline std::string fixture(const std::string& name) { return std::string(GRALA_FIXTURES) + "/" + name; }

/// Up to `max_splats` random anisotropic gaussians around the origin.
inline GaussianModel random_model(std::mt19937_64& rng, int count, double spread = 0.5) {
  std::uniform_real_distribution<double> pos(-spread, spread);
  std::uniform_real_distribution<double> lsc(std::log(0.08), std::log(0.3));
  std::uniform_real_distribution<double> quat(-1.0, 1.0);
  std::uniform_real_distribution<double> op(-2.0, 2.0);
  std::uniform_real_distribution<double> col(0.0, 1.0);
  GaussianModel m;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.position = {pos(rng), pos(rng), pos(rng)};
    g.log_scale = {lsc(rng), lsc(rng), lsc(rng)};
    g.rotation = {quat(rng) + 1.5, quat(rng), quat(rng), quat(rng)};
    g.opacity_logit = op(rng);
    g.color = {col(rng), col(rng), col(rng)};
    m.gaussians.push_back(g);
  }
  m.zero_grad();
  return m;
}

inline Camera front_camera(int w, int h, double dist = 4.0, double fov = 50.0) {
  Camera c;
  c.eye = {0, 0, dist};
  c.target = {0, 0, 0};
  c.fov_deg = fov;
  c.width = w;
  c.height = h;
  return c;
}

inline Image random_image(std::mt19937_64& rng, int w, int h, int c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Image img(w, h, c);
  for (auto& v : img.data) v = d(rng);
  return img;
}

inline double dot(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

/// Central finite differences of `f` over every scalar parameter of the
/// models reachable through `params`.
inline std::vector<double> central_differences(std::vector<double*> params, const std::function<double()>& f,
                                               double h = 1e-4) {
  std::vector<double> out;
  out.reserve(params.size());
  for (double* p : params) {
    const double keep = *p;
    *p = keep + h;
    const double up = f();
    *p = keep - h;
    const double down = f();
    *p = keep;
    out.push_back((up - down) / (2 * h));
  }
  return out;
}

inline std::vector<double*> all_params(GaussianModel& m) {
  std::vector<double*> out;
  for (auto& g : m.gaussians)
    for (int k = 0; k < Gaussian::kParamCount; ++k) out.push_back(&g.param(k));
  return out;
}

inline std::vector<double> all_grads(const GaussianModel& m) {
  std::vector<double> out;
  for (const auto& g : m.grads)
    for (int k = 0; k < Gaussian::kParamCount; ++k) out.push_back(g.param(k));
  return out;
}

/// ||a - b|| / ||b||, with a floor on the denominator for all-zero gradients.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace grala::testing
