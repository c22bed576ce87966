#include "grala/losses.hpp"

#include <cmath>

#include "grala/error.hpp"

namespace grala {

namespace {

void require_mask_shape(const Image& img, const Mask& mask, int channels, const char* what) {
  if (img.width != mask.width || img.height != mask.height || img.channels != channels)
    throw ValidationError(std::string(what) + ": image and mask shapes differ");
}

}  // namespace

ImageLoss layout_loss(const Image& alpha, const Mask& mask) {
  require_mask_shape(alpha, mask, 1, "layout_loss");
  const double inv = 1.0 / static_cast<double>(alpha.pixel_count());
  ImageLoss out{0.0, Image(alpha.width, alpha.height, 1)};
  double sum = 0;
  for (std::size_t p = 0; p < alpha.data.size(); ++p) {
    if (mask.data[p]) continue;
    sum += alpha.data[p];
    out.grad.data[p] = inv;
  }
  out.value = sum * inv;
  return out;
}

MaskedGuidance masked_guidance(const Image& grad, const Mask& mask) {
  require_mask_shape(grad, mask, grad.channels, "masked_guidance");
  MaskedGuidance out{Image(grad.width, grad.height, grad.channels), 0.0};
  const int c = grad.channels;
  double sum = 0;
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    if (!mask.data[p]) continue;
    for (int k = 0; k < c; ++k) {
      const double g = grad.data[p * c + k];
      out.grad.data[p * c + k] = g;
      sum += std::abs(g);
    }
  }
  out.surrogate = grad.data.empty() ? 0.0 : sum / static_cast<double>(grad.data.size());
  return out;
}

ImageLoss localization_loss(const Image& alpha, const Image& attention) {
  if (!alpha.same_shape(attention) || alpha.channels != 1)
    throw ValidationError("localization_loss: alpha and attention shapes differ");
  const double inv = 1.0 / static_cast<double>(alpha.pixel_count());
  ImageLoss out{0.0, Image(alpha.width, alpha.height, 1)};
  double sum = 0;
  for (std::size_t p = 0; p < alpha.data.size(); ++p) {
    const double d = alpha.data[p] - attention.data[p];
    sum += d * d;
    out.grad.data[p] = 2.0 * d * inv;
  }
  out.value = sum * inv;
  return out;
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json j{{"layout", layout}, {"masked_guidance", masked_guidance}, {"total", total},
                   {"weights", weights.to_json()}};
  if (localization) j["localization"] = *localization;
  return j;
}

NodeLoss node_objective(const RenderOutput& render, const Mask& mask, const GuidanceResponse& guidance,
                        const Image* attention, const LossWeights& w) {
  return node_objective(render, mask, mask, guidance, attention, w);
}

NodeLoss node_objective(const RenderOutput& render, const Mask& mask, const Mask& guidance_mask,
                        const GuidanceResponse& guidance, const Image* attention, const LossWeights& w) {
  const int width = render.alpha.width, height = render.alpha.height;
  if (!guidance.grad.same_shape(render.rgb)) throw ValidationError("node_objective: guidance grad shape mismatch");
  if (attention && (attention->pixel_count() == 0 || !attention->same_shape(render.alpha)))
    throw ValidationError("node_objective: attention map missing or mis-shaped");

  const ImageLoss lay = layout_loss(render.alpha, mask);
  const MaskedGuidance mg = masked_guidance(guidance.grad, guidance_mask);

  NodeLoss out;
  out.breakdown.weights = w;
  out.breakdown.layout = lay.value;
  out.breakdown.masked_guidance = mg.surrogate;
  out.breakdown.total = w.guidance * mg.surrogate + w.layout * lay.value;

  const double scale = w.guidance / static_cast<double>(render.rgb.pixel_count());
  out.grads.rgb = Image(width, height, 3);
  for (std::size_t i = 0; i < mg.grad.data.size(); ++i) out.grads.rgb.data[i] = scale * mg.grad.data[i];
  out.grads.alpha = Image(width, height, 1);
  for (std::size_t p = 0; p < lay.grad.data.size(); ++p) out.grads.alpha.data[p] = w.layout * lay.grad.data[p];

  if (attention) {
    const ImageLoss loc = localization_loss(render.alpha, *attention);
    out.breakdown.localization = loc.value;
    out.breakdown.total += w.local * loc.value;
    for (std::size_t p = 0; p < loc.grad.data.size(); ++p) out.grads.alpha.data[p] += w.local * loc.grad.data[p];
  }
  return out;
}

nlohmann::json SuperLoss::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& b : members) m.push_back(b.to_json());
  return {{"union", union_branch.to_json()}, {"members", m}, {"total", total}};
}

SuperLoss supernode_objective(const RenderOutput& union_render, const Mask& union_mask,
                              const GuidanceResponse& union_guidance, std::span<const RenderOutput> member_renders,
                              std::span<const Mask> member_masks, std::span<const GuidanceResponse> member_guidance,
                              std::span<const Image* const> attentions, const LossWeights& w) {
  if (member_renders.size() != 2 || member_masks.size() != 2 || member_guidance.size() != 2 || attentions.size() != 2)
    throw ValidationError("supernode_objective needs exactly two members");
  SuperLoss out;
  NodeLoss u = node_objective(union_render, union_mask, union_guidance, nullptr, w);
  out.union_branch = u.breakdown;
  out.union_grads = std::move(u.grads);
  for (std::size_t k = 0; k < 2; ++k) {
    NodeLoss m = node_objective(member_renders[k], member_masks[k], member_guidance[k], attentions[k], w);
    out.members.push_back(m.breakdown);
    out.member_grads.push_back(std::move(m.grads));
  }
  // Member sum first so swapping members is exactly symmetric.
  out.total = out.union_branch.total + (out.members[0].total + out.members[1].total);
  return out;
}

}  // namespace grala
