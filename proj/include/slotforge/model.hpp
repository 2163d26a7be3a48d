#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "slotforge/checkpoint.hpp"
#include "slotforge/decoder.hpp"
#include "slotforge/slot_attention.hpp"

namespace slotforge {

struct ModelConfig {
  SlotAttentionConfig attention;
  std::size_t grid_h = 14;
  std::size_t grid_w = 14;
  std::size_t decoder_hidden = 1024;
  PositionalEncoding positional = PositionalEncoding::kLearned;

  std::size_t num_patches() const { return grid_h * grid_w; }
  DecoderConfig decoder_config() const;
  void validate() const;
};

/// Multi-query slot attention plus its decoder. Holds parameters by value;
/// registries built from it point into this object.
struct Model {
  ModelConfig config;
  HeadBank bank;
  DecoderParams decoder;

  static Model create(const ModelConfig& config, std::uint64_t seed);
  ParameterRegistry registry();
  /// Copy restricted to the first `heads` query heads.
  Model with_heads(std::size_t heads) const;
};

std::vector<CheckpointRecord> model_records(Model& model);
void save_model(const std::filesystem::path& path, Model& model);
Model model_from_records(const std::vector<CheckpointRecord>& records);
Model load_model(const std::filesystem::path& path);

}  // namespace slotforge
