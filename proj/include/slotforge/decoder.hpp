#pragma once

#include <string>

#include "slotforge/autograd.hpp"
#include "slotforge/feature_io.hpp"
#include "slotforge/nn.hpp"
#include "slotforge/slot_attention.hpp"

namespace slotforge {

enum class PositionalEncoding { kLearned, kSinusoidal };

std::string to_string(PositionalEncoding p);
PositionalEncoding parse_positional_encoding(const std::string& text);

struct DecoderConfig {
  std::size_t num_patches = 196;
  std::size_t slot_dim = 64;
  std::size_t feat_dim = 384;
  std::size_t hidden = 1024;
  PositionalEncoding positional = PositionalEncoding::kLearned;
};

/// Spatial broadcast decoder: every slot is copied to all N patches, offset
/// by a positional encoding, and mapped through a 3-layer MLP to D_feats
/// features plus one alpha logit.
struct DecoderParams {
  DecoderConfig config;
  Parameter pos_embed;  // N × D_slots; fixed (non-trainable) when sinusoidal
  Mlp mlp;              // D_slots → hidden → hidden → D_feats + 1

  static DecoderParams create(const DecoderConfig& config, Rng& rng);
  void register_parameters(ParameterRegistry& reg);
};

/// Sinusoidal table over the flattened patch index, N × width.
Tensor sinusoidal_encoding(std::size_t n, std::size_t width);

struct DecodedScene {
  Tensor per_slot_feats;  // K × N × D_feats
  Tensor alphas;          // K × N, normalized over K for every patch
  Tensor reconstruction;  // N × D_feats
};

struct DecoderTrace {
  Var per_slot_feats;  // (K·N) × D_feats, slot-major
  Var alphas;          // K × N
  Var reconstruction;  // N × D_feats
};

DecoderTrace decode(Tape& tape, Var slots, DecoderParams& params);
DecodedScene decode(const SlotSet& slots, DecoderParams& params);

/// Mean squared error over all N·D_feats elements against the unmasked
/// tokens.
Var reconstruction_loss(Var reconstruction, const FeatureMap& target);
double reconstruction_loss(const DecodedScene& scene, const FeatureMap& target);

}  // namespace slotforge
