#include "slotforge/decoder.hpp"

#include <cmath>

#include "slotforge/errors.hpp"

namespace slotforge {

std::string to_string(PositionalEncoding p) {
  return p == PositionalEncoding::kLearned ? "learned" : "sinusoidal";
}

PositionalEncoding parse_positional_encoding(const std::string& text) {
  if (text == "learned") return PositionalEncoding::kLearned;
  if (text == "sinusoidal") return PositionalEncoding::kSinusoidal;
  throw UsageError("unknown positional encoding '" + text + "' (expected learned|sinusoidal)");
}

Tensor sinusoidal_encoding(std::size_t n, std::size_t width) {
  Tensor t({n, width});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(p) * freq;
      t(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

DecoderParams DecoderParams::create(const DecoderConfig& config, Rng& rng) {
  if (config.num_patches == 0 || config.slot_dim == 0 || config.feat_dim == 0 ||
      config.hidden == 0) {
    throw ContractError("decoder sizes must be positive");
  }
  DecoderParams d;
  d.config = config;
  if (config.positional == PositionalEncoding::kLearned) {
    Tensor pos({config.num_patches, config.slot_dim});
    for (double& v : pos.data()) v = 0.02 * rng.normal();
    d.pos_embed = Parameter("decoder.pos", std::move(pos));
  } else {
    d.pos_embed = Parameter("decoder.pos",
                            sinusoidal_encoding(config.num_patches, config.slot_dim), false);
  }
  d.mlp = Mlp::create("decoder.mlp",
                      {config.slot_dim, config.hidden, config.hidden, config.feat_dim + 1}, rng);
  return d;
}

void DecoderParams::register_parameters(ParameterRegistry& reg) {
  reg.add(pos_embed);
  mlp.register_parameters(reg);
}

DecoderTrace decode(Tape& tape, Var slots, DecoderParams& params) {
  const auto& cfg = params.config;
  if (slots.value().rank() != 2 || slots.value().cols() != cfg.slot_dim) {
    throw ContractError("decoder expects slots of width " + std::to_string(cfg.slot_dim) +
                        ", got " + shape_to_string(slots.shape()));
  }
  const std::size_t k = slots.value().rows(), n = cfg.num_patches, f = cfg.feat_dim;
  // Row s·N + p holds slot s at patch p.
  Var broadcast = repeat_rows(slots, n) + tile_rows(tape.param(params.pos_embed), k);
  Var out = params.mlp.forward(tape, broadcast);
  DecoderTrace t;
  t.per_slot_feats = slice_cols(out, 0, f);
  t.alphas = softmax(reshape(slice_cols(out, f, f + 1), {k, n}), 0);
  t.reconstruction = weighted_slot_sum(t.alphas, t.per_slot_feats);
  return t;
}

DecodedScene decode(const SlotSet& slots, DecoderParams& params) {
  Tape tape(Tape::Mode::kInference);
  DecoderTrace t = decode(tape, tape.constant(slots.slots), params);
  const std::size_t k = slots.slots.rows();
  return DecodedScene{
      t.per_slot_feats.value().reshaped({k, params.config.num_patches, params.config.feat_dim}),
      t.alphas.value(), t.reconstruction.value()};
}

Var reconstruction_loss(Var reconstruction, const FeatureMap& target) {
  if (reconstruction.shape() != target.tokens.shape()) {
    throw ContractError("reconstruction " + shape_to_string(reconstruction.shape()) +
                        " vs target " + shape_to_string(target.tokens.shape()));
  }
  return mse(reconstruction, target.tokens);
}

double reconstruction_loss(const DecodedScene& scene, const FeatureMap& target) {
  Tape tape(Tape::Mode::kInference);
  return reconstruction_loss(tape.constant(scene.reconstruction), target).value()[0];
}

}  // namespace slotforge
