#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slotforge/decoder.hpp"
#include "slotforge/fusion.hpp"
#include "slotforge/metrics.hpp"
#include "slotforge/model.hpp"

namespace slotforge {

/// Where segmentation labels come from: decoder alphas or the final attention
/// weights of the fused slots.
enum class MaskSource { kAlpha, kAttention };

std::string to_string(MaskSource s);
MaskSource parse_mask_source(const std::string& text);

struct InferOptions {
  SimilarityMetric metric = SimilarityMetric::kCosine;
  Matcher matcher = Matcher::kHungarian;
  std::optional<std::size_t> reference;  // nullopt draws it from the rng
  MaskSource mask_source = MaskSource::kAlpha;
};

struct InferResult {
  std::vector<HeadResult> heads;
  std::size_t reference = 0;
  SlotSet fused;
  DecodedScene decoded;
  Tensor fused_weights;  // N × K attention weights of the fused slots
  SegmentationResult segmentation;
};

/// Inference path: every head on the unmasked tokens, fusion, decoding. Never
/// masks. Deterministic in `rng`.
InferResult infer_image(const FeatureMap& features, Model& model, const InferOptions& options,
                        const Rng& rng);

/// Throws ContractError naming both sides when the features do not fit the
/// model.
void check_compatible(const FeatureMap& features, const ModelConfig& config);

}  // namespace slotforge
