#include "slotforge/model.hpp"

#include "slotforge/errors.hpp"

namespace slotforge {

namespace {
constexpr const char* kMetaName = "meta.model";
constexpr double kMetaVersion = 1.0;
}  // namespace

DecoderConfig ModelConfig::decoder_config() const {
  return DecoderConfig{num_patches(), attention.slot_dim, attention.feat_dim, decoder_hidden,
                       positional};
}

void ModelConfig::validate() const {
  attention.validate();
  if (grid_h == 0 || grid_w == 0) throw ContractError("model grid must be nonempty");
  if (decoder_hidden == 0) throw ContractError("decoder_hidden must be positive");
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng root(seed);
  Rng bank_rng = root.split(1);
  Rng dec_rng = root.split(2);
  return Model{config, HeadBank::create(config.attention, bank_rng),
               DecoderParams::create(config.decoder_config(), dec_rng)};
}

ParameterRegistry Model::registry() {
  ParameterRegistry reg;
  bank.register_parameters(reg);
  decoder.register_parameters(reg);
  return reg;
}

Model Model::with_heads(std::size_t heads) const {
  if (heads == 0 || heads > bank.heads.size()) {
    throw ContractError("requested " + std::to_string(heads) + " heads, checkpoint has " +
                        std::to_string(bank.heads.size()));
  }
  Model m = *this;
  m.bank.heads.resize(heads);
  m.config.attention.heads = heads;
  m.bank.config.heads = heads;
  return m;
}

std::vector<CheckpointRecord> model_records(Model& model) {
  const ModelConfig& c = model.config;
  const auto& a = c.attention;
  std::vector<CheckpointRecord> records;
  records.push_back(
      {kMetaName, Tensor({13}, {kMetaVersion, static_cast<double>(a.heads),
                                static_cast<double>(a.slots), static_cast<double>(a.slot_dim),
                                static_cast<double>(a.feat_dim), static_cast<double>(a.iterations),
                                static_cast<double>(a.mlp_hidden), a.epsilon,
                                a.layer_norm ? 1.0 : 0.0, static_cast<double>(c.grid_h),
                                static_cast<double>(c.grid_w), static_cast<double>(c.decoder_hidden),
                                c.positional == PositionalEncoding::kLearned ? 0.0 : 1.0})});
  auto params = snapshot(model.registry());
  records.insert(records.end(), params.begin(), params.end());
  return records;
}

void save_model(const std::filesystem::path& path, Model& model) {
  save_checkpoint(path, model_records(model));
}

Model model_from_records(const std::vector<CheckpointRecord>& records) {
  const CheckpointRecord* meta = nullptr;
  for (const auto& r : records)
    if (r.name == kMetaName) meta = &r;
  if (meta == nullptr || meta->value.size() != 13 || meta->value[0] != kMetaVersion) {
    throw FormatError("checkpoint has no usable 'meta.model' record");
  }
  const Tensor& m = meta->value;
  auto as_size = [&](std::size_t i) { return static_cast<std::size_t>(m[i]); };
  ModelConfig c;
  c.attention.heads = as_size(1);
  c.attention.slots = as_size(2);
  c.attention.slot_dim = as_size(3);
  c.attention.feat_dim = as_size(4);
  c.attention.iterations = as_size(5);
  c.attention.mlp_hidden = as_size(6);
  c.attention.epsilon = m[7];
  c.attention.layer_norm = m[8] != 0.0;
  c.grid_h = as_size(9);
  c.grid_w = as_size(10);
  c.decoder_hidden = as_size(11);
  c.positional = m[12] == 0.0 ? PositionalEncoding::kLearned : PositionalEncoding::kSinusoidal;
  Model model = Model::create(c, 0);
  auto reg = model.registry();
  restore(reg, records);
  return model;
}

Model load_model(const std::filesystem::path& path) {
  return model_from_records(load_checkpoint(path));
}

}  // namespace slotforge
