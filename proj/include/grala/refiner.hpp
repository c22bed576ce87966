#pragma once

#include <string>

#include "grala/image.hpp"

namespace grala {

struct RefineRequest {
  Image rgb;    // H x W x 3 in [0, 1]
  Image depth;  // H x W
  std::string prompt;
  double strength = 0.5;
};

/// Stand-in for the depth-conditioned refiner: returns an image of the
/// input's shape with values in [0, 1].
class RefinerProvider {
 public:
  virtual ~RefinerProvider() = default;
  virtual Image refine(const RefineRequest& request) const = 0;
  virtual std::string name() const = 0;
};

/// Throws ProviderError unless `out` is finite, in [0, 1] and shaped like `in`.
void check_refined(const Image& in, const Image& out);

class IdentityRefiner final : public RefinerProvider {
 public:
  Image refine(const RefineRequest& r) const override { return r.rgb; }
  std::string name() const override { return "identity"; }
};

/// clamp(x + shift, 0, 1).
class ShiftRefiner final : public RefinerProvider {
 public:
  explicit ShiftRefiner(double shift = 0.1) : shift_(shift) {}
  Image refine(const RefineRequest& r) const override;
  std::string name() const override { return "shift"; }

 private:
  double shift_;
};

/// Offline harmonizer: pulls every lit pixel toward the mean color of the
/// lit pixels by `strength`. Background pixels (depth at the far plane) pass
/// through.
class MockHarmonizer final : public RefinerProvider {
 public:
  Image refine(const RefineRequest& r) const override;
  std::string name() const override { return "mock"; }
};

}  // namespace grala
