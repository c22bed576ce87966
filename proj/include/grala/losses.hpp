#pragma once

#include <optional>
#include <span>
#include <vector>

#include "grala/guidance.hpp"
#include "grala/image.hpp"
#include "grala/splat_render.hpp"
#include "json.hpp"

namespace grala {

struct LossWeights {
  double guidance = 1.0;
  double layout = 10.0;
  double local = 1.0;

  nlohmann::json to_json() const { return {{"guidance", guidance}, {"layout", layout}, {"local", local}}; }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// A scalar image loss and its gradient with respect to the input image.
struct ImageLoss {
  double value = 0;
  Image grad;
};

/// mean(alpha * (1 - M)); d/d(alpha) = (1 - M) / (H W).
ImageLoss layout_loss(const Image& alpha, const Mask& mask);

struct MaskedGuidance {
  Image grad;              // grad * M, exactly +0 where M = 0
  double surrogate = 0;    // mean |grad * M|, for logging only
};
MaskedGuidance masked_guidance(const Image& grad, const Mask& mask);

/// mean((alpha - D)^2); d/d(alpha) = 2 (alpha - D) / (H W).
ImageLoss localization_loss(const Image& alpha, const Image& attention);

struct LossBreakdown {
  double layout = 0;
  double masked_guidance = 0;
  std::optional<double> localization;  // absent while the term is inactive
  double total = 0;
  LossWeights weights;

  nlohmann::json to_json() const;
};

struct NodeLoss {
  LossBreakdown breakdown;
  PixelGradients grads;
};

/// Single-node objective, or the object-branch objective when `attention`
/// is given. The guidance field enters the pixel gradient mean-normalized,
/// like the other image terms: lambda_g (grad * M) / (H W).
NodeLoss node_objective(const RenderOutput& render, const Mask& mask, const GuidanceResponse& guidance,
                        const Image* attention, const LossWeights& weights);
/// Same, with a separate mask for the guidance term (the unmasked-guidance
/// ablation passes an all-ones mask here).
NodeLoss node_objective(const RenderOutput& render, const Mask& layout_mask, const Mask& guidance_mask,
                        const GuidanceResponse& guidance, const Image* attention, const LossWeights& weights);

struct SuperLoss {
  LossBreakdown union_branch;
  std::vector<LossBreakdown> members;
  double total = 0;
  PixelGradients union_grads;                 // flow to both models through the union render
  std::vector<PixelGradients> member_grads;   // flow only to their own model

  nlohmann::json to_json() const;
};

/// Relation branch on the union plus one object branch per member. Throws
/// ValidationError unless there are exactly two members.
SuperLoss supernode_objective(const RenderOutput& union_render, const Mask& union_mask,
                              const GuidanceResponse& union_guidance, std::span<const RenderOutput> member_renders,
                              std::span<const Mask> member_masks, std::span<const GuidanceResponse> member_guidance,
                              std::span<const Image* const> attentions, const LossWeights& weights);

}  // namespace grala
