#include "slotforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "slotforge/decoder.hpp"
#include "slotforge/errors.hpp"
#include "slotforge/parallel.hpp"

namespace slotforge {

std::string to_string(HeadSelection h) {
  return h == HeadSelection::kRandom ? "random" : "fused";
}

HeadSelection parse_head_selection(const std::string& text) {
  if (text == "random") return HeadSelection::kRandom;
  if (text == "fused") return HeadSelection::kFused;
  throw UsageError("unknown head_select '" + text + "' (expected random|fused)");
}

void TrainConfig::validate() const {
  if (!(warmup_frac >= 0.0 && warmup_frac <= 1.0))
    throw ContractError("warmup_frac must lie in [0,1], got " + std::to_string(warmup_frac));
  if (!(lr_base >= 0.0)) throw ContractError("lr_base must be nonnegative");
  if (!(decay_rate > 0.0)) throw ContractError("decay_rate must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (epochs == 0 && max_steps == 0) throw ContractError("need epochs > 0 or max_steps > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("Adam betas must lie in [0,1)");
  masking.validate();
}

TrainState TrainState::create(Model& model, std::uint64_t seed) {
  Rng root(seed);
  TrainState s{0, {}, {}, root.split(10), root.split(11), root.split(12), root.split(13), {}};
  for (Parameter* p : model.registry()) {
    s.first_moment.emplace_back(p->value.shape());
    s.second_moment.emplace_back(p->value.shape());
  }
  s.head_counts.assign(model.bank.num_heads(), 0);
  return s;
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const auto warmup =
      static_cast<std::size_t>(std::floor(cfg.warmup_frac * static_cast<double>(total_steps) + 0.5));
  if (step < warmup) {
    return cfg.lr_base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const std::size_t horizon =
      cfg.decay_horizon > 0 ? cfg.decay_horizon : total_steps - std::min(warmup, total_steps);
  if (horizon == 0) return cfg.lr_base;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(horizon);
  return cfg.lr_base * std::pow(cfg.decay_rate, progress);
}

std::size_t total_steps(std::size_t dataset_size, const TrainConfig& cfg) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  const std::size_t per_epoch = (dataset_size + cfg.batch_size - 1) / cfg.batch_size;
  return per_epoch * cfg.epochs;
}

Var image_loss(Tape& tape, const FeatureMap& image, Model& model, const TrainConfig& cfg,
               std::size_t head, std::uint64_t mask_seed, Rng& init_rng) {
  MaskingConfig masking = cfg.masking;
  masking.seed = mask_seed;
  const FeatureMap* input = &image;
  FeatureMap masked;
  if (masking.strategy != MaskStrategy::kNone) {
    masked = apply_mask(image, build_mask_report(image, masking).masked_indices);
    input = &masked;
  }
  HeadBank& bank = model.bank;
  ProjectedFeatures features = project_features(tape, bank, input->tokens);
  Var slots;
  if (cfg.head_select == HeadSelection::kRandom) {
    Var initial = init_slots(tape, bank, head, init_rng);
    slots = run_head(tape, features, initial, bank, head).slots;
  } else {
    std::vector<Var> per_head;
    for (std::size_t j = 0; j < bank.num_heads(); ++j) {
      Rng head_rng = init_rng.split(j);
      Var initial = init_slots(tape, bank, j, head_rng);
      per_head.push_back(run_head(tape, features, initial, bank, j).slots);
    }
    // `head` names the reference head in fused mode.
    slots = fuse_for_training(per_head, head, cfg.fusion_metric, cfg.fusion_matcher);
  }
  DecoderTrace decoded = decode(tape, slots, model.decoder);
  return reconstruction_loss(decoded.reconstruction, image);
}

void adam_update(ParameterRegistry& registry, TrainState& state, const TrainConfig& cfg,
                 double lr) {
  if (state.first_moment.size() != registry.size()) {
    throw ContractError("optimizer state holds " + std::to_string(state.first_moment.size()) +
                        " moment buffers for " + std::to_string(registry.size()) + " parameters");
  }
  const double t = static_cast<double>(state.step + 1);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < registry.size(); ++i) {
    Parameter& p = registry[i];
    if (!p.trainable) continue;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    if (m.size() != value.size()) {
      throw ContractError("moment buffer shape mismatch for '" + p.name + "'");
    }
    for (std::size_t e = 0; e < value.size(); ++e) {
      m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * grad[e];
      v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * grad[e] * grad[e];
      const double m_hat = m[e] / bias1;
      const double v_hat = v[e] / bias2;
      value[e] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
  ++state.step;
}

double train_step(const std::vector<const FeatureMap*>& batch, Model& model, TrainState& state,
                  const TrainConfig& cfg, std::size_t total) {
  if (batch.empty()) throw ContractError("train_step needs a nonempty batch");
  const std::size_t h = model.bank.num_heads();
  const std::size_t b = batch.size();

  // All random choices are drawn up front, in image order, so the result does
  // not depend on how the workers interleave.
  std::vector<std::size_t> heads(b);
  std::vector<std::uint64_t> mask_seeds(b), init_seeds(b);
  const std::size_t batch_head = state.head_rng.index(h);
  for (std::size_t i = 0; i < b; ++i) {
    heads[i] = cfg.per_batch_head ? batch_head : state.head_rng.index(h);
    mask_seeds[i] = state.mask_rng.next_u64();
    init_seeds[i] = state.init_rng.next_u64();
    if (cfg.head_select == HeadSelection::kRandom) ++state.head_counts[heads[i]];
  }

  std::vector<GradientSet> grads(b);
  std::vector<double> losses(b);
  parallel_for(b, worker_count(cfg.threads), [&](std::size_t i) {
    Tape tape(Tape::Mode::kTrain);
    Rng init_rng(init_seeds[i]);
    Var loss = image_loss(tape, *batch[i], model, cfg, heads[i], mask_seeds[i], init_rng);
    losses[i] = loss.value()[0];
    if (!std::isfinite(losses[i])) {
      auto where = tape.first_non_finite();
      throw NumericError("non-finite training loss at step " + std::to_string(state.step) +
                         "; first bad value from " + where.value_or("unknown op"));
    }
    tape.compute_gradients(loss);
    grads[i] = tape.parameter_gradients();
  });

  ParameterRegistry registry = model.registry();
  registry.zero_grad();
  const double inv_b = 1.0 / static_cast<double>(b);
  for (const GradientSet& g : grads) accumulate(g, inv_b);
  adam_update(registry, state, cfg, lr_at(state.step, total, cfg));

  double mean = 0.0;
  for (double l : losses) mean += l;
  return mean * inv_b;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss curve to " + path.string());
  out.precision(17);
  out << "step,loss,lr\n";
  for (const LossRecord& r : curve) out << r.step << ',' << r.loss << ',' << r.lr << '\n';
  if (!out) throw IoError("failed writing loss curve to " + path.string());
}

TrainResult train(const std::vector<FeatureMap>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_config, const TrainOutput& output) {
  if (dataset.empty()) throw ContractError("training dataset is empty");
  cfg.validate();
  for (const FeatureMap& f : dataset) {
    f.validate();
    if (f.dim() != model_config.attention.feat_dim || f.num_patches() != model_config.num_patches()) {
      throw ContractError("training image is " + std::to_string(f.grid_h) + "x" +
                          std::to_string(f.grid_w) + " with D_feats=" + std::to_string(f.dim()) +
                          ", model expects " + std::to_string(model_config.grid_h) + "x" +
                          std::to_string(model_config.grid_w) +
                          " with D_feats=" + std::to_string(model_config.attention.feat_dim));
    }
  }
  if (output.dir) std::filesystem::create_directories(*output.dir);

  TrainResult result{Model::create(model_config, cfg.seed), {}};
  Model& model = result.model;
  TrainState state = TrainState::create(model, cfg.seed);
  const std::size_t total = total_steps(dataset.size(), cfg);

  std::vector<std::size_t> order(dataset.size());
  std::size_t epoch = 0;
  while (state.step < total) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.shuffle_rng.engine());
    for (std::size_t start = 0; start < order.size() && state.step < total;
         start += cfg.batch_size) {
      std::vector<const FeatureMap*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&dataset[order[i]]);
      const std::size_t step = state.step;
      const double lr = lr_at(step, total, cfg);
      const double loss = train_step(batch, model, state, cfg, total);
      result.curve.push_back({step, loss, lr});
      if (output.on_step) output.on_step(result.curve.back());
    }
    ++epoch;
    if (output.dir) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_epoch%04zu.sltf", epoch);
      save_model(*output.dir / name, model);
    }
  }
  if (output.dir) {
    save_model(*output.dir / "model.sltf", model);
    write_loss_csv(*output.dir / "loss.csv", result.curve);
  }
  return result;
}

}  // namespace slotforge
