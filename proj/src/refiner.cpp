#include "grala/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "grala/camera.hpp"
#include "grala/error.hpp"

namespace grala {

void check_refined(const Image& in, const Image& out) {
  if (!out.same_shape(in)) throw ProviderError("refined image has the wrong shape");
  for (double v : out.data) {
    if (!std::isfinite(v)) throw NonFiniteError("refined image contains non-finite values");
    if (v < 0.0 || v > 1.0) throw ProviderError("refined image outside [0, 1]");
  }
}

Image ShiftRefiner::refine(const RefineRequest& r) const {
  Image out = r.rgb;
  for (double& v : out.data) v = std::clamp(v + shift_, 0.0, 1.0);
  return out;
}

Image MockHarmonizer::refine(const RefineRequest& r) const {
  Image out = r.rgb;
  const std::size_t n = r.rgb.pixel_count();
  const bool has_depth = r.depth.pixel_count() == n;
  auto lit = [&](std::size_t p) { return !has_depth || r.depth.data[p] < kFarDepth; };
  double mean[3] = {0, 0, 0};
  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (!lit(p)) continue;
    for (int c = 0; c < 3; ++c) mean[c] += r.rgb.data[p * 3 + c];
    ++count;
  }
  if (count == 0) return out;
  for (double& m : mean) m /= static_cast<double>(count);
  const double s = std::clamp(r.strength, 0.0, 1.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!lit(p)) continue;
    for (int c = 0; c < 3; ++c) {
      double& v = out.data[p * 3 + c];
      v = std::clamp((1 - s) * v + s * mean[c], 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace grala
