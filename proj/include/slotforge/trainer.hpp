#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slotforge/feature_io.hpp"
#include "slotforge/fusion.hpp"
#include "slotforge/masking.hpp"
#include "slotforge/model.hpp"

namespace slotforge {

enum class HeadSelection { kRandom, kFused };

std::string to_string(HeadSelection h);
HeadSelection parse_head_selection(const std::string& text);

struct TrainConfig {
  double lr_base = 4e-4;
  double warmup_frac = 0.02;
  double decay_rate = 0.5;
  /// Steps over which lr decays by decay_rate; 0 means all post-warmup steps.
  std::size_t decay_horizon = 0;
  std::size_t epochs = 500;
  std::size_t batch_size = 4;
  /// When nonzero, the run is exactly this many optimizer steps and epochs
  /// is ignored; otherwise epochs × batches per epoch.
  std::size_t max_steps = 0;
  MaskingConfig masking;
  HeadSelection head_select = HeadSelection::kRandom;
  /// Draw one head per batch instead of one per image.
  bool per_batch_head = false;
  SimilarityMetric fusion_metric = SimilarityMetric::kCosine;
  Matcher fusion_matcher = Matcher::kHungarian;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Worker threads for per-image passes; 0 defers to SLOTFORGE_THREADS.
  std::size_t threads = 0;

  void validate() const;
};

struct TrainState {
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  Rng shuffle_rng;
  Rng head_rng;
  Rng mask_rng;
  Rng init_rng;
  /// Times each head was drawn; diagnostics only.
  std::vector<std::size_t> head_counts;

  static TrainState create(Model& model, std::uint64_t seed);
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Linear warmup over W = round(warmup_frac·total) steps, then continuous
/// exponential decay: lr_base·decay_rate^((step − W)/horizon).
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

std::size_t total_steps(std::size_t dataset_size, const TrainConfig& cfg);

/// Single-image loss on a recording tape: mask, project, run the selected
/// head (or all heads fused), decode, L2 against the unmasked tokens.
/// Exposed for gradient checks.
Var image_loss(Tape& tape, const FeatureMap& image, Model& model, const TrainConfig& cfg,
               std::size_t head, std::uint64_t mask_seed, Rng& init_rng);

/// One optimizer step over `batch`; returns the mean batch loss.
double train_step(const std::vector<const FeatureMap*>& batch, Model& model, TrainState& state,
                  const TrainConfig& cfg, std::size_t total);

/// Adam update with the given learning rate using gradients already in the
/// registry; increments state.step.
void adam_update(ParameterRegistry& registry, TrainState& state, const TrainConfig& cfg,
                 double lr);

struct TrainResult {
  Model model;
  std::vector<LossRecord> curve;
};

struct TrainOutput {
  std::optional<std::filesystem::path> dir;  // checkpoints + loss.csv when set
  std::function<void(const LossRecord&)> on_step;
};

TrainResult train(const std::vector<FeatureMap>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_config, const TrainOutput& output = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace slotforge
