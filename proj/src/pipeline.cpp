#include "slotforge/pipeline.hpp"

#include "slotforge/errors.hpp"

namespace slotforge {

std::string to_string(MaskSource s) { return s == MaskSource::kAlpha ? "alpha" : "attention"; }

MaskSource parse_mask_source(const std::string& text) {
  if (text == "alpha") return MaskSource::kAlpha;
  if (text == "attention") return MaskSource::kAttention;
  throw UsageError("unknown mask source '" + text + "' (expected alpha|attention)");
}

void check_compatible(const FeatureMap& features, const ModelConfig& config) {
  features.validate();
  if (features.dim() != config.attention.feat_dim) {
    throw ContractError("feature D_feats=" + std::to_string(features.dim()) +
                        " but checkpoint D_feats=" + std::to_string(config.attention.feat_dim));
  }
  if (features.grid_h != config.grid_h || features.grid_w != config.grid_w) {
    throw ContractError("feature grid " + std::to_string(features.grid_h) + "x" +
                        std::to_string(features.grid_w) + " but checkpoint grid " +
                        std::to_string(config.grid_h) + "x" + std::to_string(config.grid_w));
  }
}

InferResult infer_image(const FeatureMap& features, Model& model, const InferOptions& options,
                        const Rng& rng) {
  check_compatible(features, model.config);
  const std::size_t h = model.bank.num_heads();
  InferResult r;
  r.heads = run_all_heads(features, model.bank, rng.split(0));
  if (options.reference) {
    if (*options.reference >= h) {
      throw UsageError("reference head " + std::to_string(*options.reference) + " out of range for " +
                       std::to_string(h) + " heads");
    }
    r.reference = *options.reference;
  } else {
    Rng pick = rng.split(1);
    r.reference = pick.index(h);
  }
  std::vector<SlotSet> sets;
  for (const HeadResult& hr : r.heads) sets.push_back(hr.slots);
  r.fused = fuse(sets, r.reference, options.metric, options.matcher);
  r.decoded = decode(r.fused, model.decoder);

  // One attention pass of the reference head over the fused slots.
  Tape tape(Tape::Mode::kInference);
  ProjectedFeatures projected = project_features(tape, model.bank, features.tokens);
  r.fused_weights = compute_attention(tape, projected, tape.constant(r.fused.slots), model.bank,
                                      r.reference)
                        .weights.value();

  const std::size_t gh = features.grid_h, gw = features.grid_w;
  if (options.mask_source == MaskSource::kAlpha) {
    r.segmentation = masks_from_alphas(r.decoded.alphas, gh, gw);
  } else {
    const Tensor& w = r.fused_weights;
    Tensor per_slot({w.cols(), w.rows()});
    for (std::size_t n = 0; n < w.rows(); ++n)
      for (std::size_t k = 0; k < w.cols(); ++k) per_slot(k, n) = w(n, k);
    r.segmentation = masks_from_alphas(per_slot, gh, gw);
  }
  return r;
}

}  // namespace slotforge
