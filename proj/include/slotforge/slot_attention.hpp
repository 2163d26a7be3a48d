#pragma once

#include <vector>

#include "slotforge/autograd.hpp"
#include "slotforge/feature_io.hpp"
#include "slotforge/nn.hpp"
#include "slotforge/rng.hpp"

namespace slotforge {

struct SlotAttentionConfig {
  std::size_t heads = 1;
  std::size_t slots = 6;       // K, per head
  std::size_t slot_dim = 64;   // D_slots
  std::size_t feat_dim = 384;  // D_feats of the input tokens
  std::size_t iterations = 3;  // T
  std::size_t mlp_hidden = 128;
  double epsilon = 1e-8;
  bool layer_norm = true;

  void validate() const;
};

/// Parameters owned by a single query head.
struct HeadParams {
  Parameter mu;         // D_slots
  Parameter log_sigma;  // D_slots
  Parameter q;          // D_slots × D_slots
  GruParams gru;
  Mlp mlp;
  LayerNormParams norm_slots;
  LayerNormParams norm_mlp;

  void register_parameters(ParameterRegistry& reg, bool with_layer_norm);
};

/// h query heads sharing one key and one value projection.
struct HeadBank {
  SlotAttentionConfig config;
  Parameter k;  // D_feats × D_slots
  Parameter v;  // D_feats × D_slots
  LayerNormParams norm_inputs;
  std::vector<HeadParams> heads;

  static HeadBank create(const SlotAttentionConfig& config, Rng& rng);
  void register_parameters(ParameterRegistry& reg);
  std::size_t num_heads() const { return heads.size(); }
};

struct SlotSet {
  Tensor slots;  // K × D_slots
  std::size_t head_index = 0;
};

struct AttentionState {
  Tensor logits;   // N × K
  Tensor attn;     // N × K, rows sum to 1
  Tensor weights;  // N × K, columns sum to 1
  Tensor updates;  // K × D_slots
};

struct HeadResult {
  SlotSet slots;
  AttentionState attention;
};

// ----- Recorded (differentiable) interface -----

struct ProjectedFeatures {
  Var keys;    // N × D_slots
  Var values;  // N × D_slots
};

struct AttentionTrace {
  Var logits;
  Var attn;
  Var weights;
  Var updates;
};

struct HeadTrace {
  Var slots;
  AttentionTrace attention;
};

/// Shared key/value projections; computed once per image.
ProjectedFeatures project_features(Tape& tape, HeadBank& bank, const Tensor& tokens);
Var init_slots(Tape& tape, HeadBank& bank, std::size_t head, Rng& rng);
AttentionTrace compute_attention(Tape& tape, const ProjectedFeatures& features, Var slots,
                                 HeadBank& bank, std::size_t head);
/// One refinement step: attention, GRU update, residual MLP.
HeadTrace attention_iteration(Tape& tape, const ProjectedFeatures& features, Var slots,
                              HeadBank& bank, std::size_t head);
/// T iterations from `initial`. With T = 0 the attention of the initial slots
/// is returned alongside them.
HeadTrace run_head(Tape& tape, const ProjectedFeatures& features, Var initial, HeadBank& bank,
                   std::size_t head);

// ----- Value interface (no gradient recording) -----

SlotSet init_slots(HeadBank& bank, std::size_t head, Rng& rng);
std::pair<SlotSet, AttentionState> attention_iteration(const Tensor& keys, const Tensor& values,
                                                       const SlotSet& slots, HeadBank& bank,
                                                       std::size_t head);
HeadResult run_head(const FeatureMap& features, HeadBank& bank, std::size_t head, Rng& rng);
/// Same as run_head but starting from caller-provided initial slots.
HeadResult run_head_from(const FeatureMap& features, HeadBank& bank, std::size_t head,
                         const SlotSet& initial);
/// Head j draws its initial slots from rng.split(j); projections are shared.
std::vector<HeadResult> run_all_heads(const FeatureMap& features, HeadBank& bank, const Rng& rng);

}  // namespace slotforge
