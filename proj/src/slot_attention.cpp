#include "slotforge/slot_attention.hpp"

#include <cmath>

#include "slotforge/errors.hpp"

namespace slotforge {

void SlotAttentionConfig::validate() const {
  if (heads == 0 || slots == 0 || slot_dim == 0 || feat_dim == 0 || mlp_hidden == 0) {
    throw ContractError("slot attention sizes must be positive");
  }
  if (!(epsilon > 0.0)) throw ContractError("attention epsilon must be positive");
}

void HeadParams::register_parameters(ParameterRegistry& reg, bool with_layer_norm) {
  reg.add(mu);
  reg.add(log_sigma);
  reg.add(q);
  gru.register_parameters(reg);
  mlp.register_parameters(reg);
  if (with_layer_norm) {
    norm_slots.register_parameters(reg);
    norm_mlp.register_parameters(reg);
  }
}

HeadBank HeadBank::create(const SlotAttentionConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.slot_dim, f = config.feat_dim;
  auto uniform = [&](Shape shape, double limit) {
    Tensor t(std::move(shape));
    for (double& x : t.data()) x = rng.uniform(-limit, limit);
    return t;
  };
  const double proj_limit = std::sqrt(6.0 / static_cast<double>(f + d));
  const double slot_limit = std::sqrt(6.0 / static_cast<double>(1 + d));

  HeadBank bank;
  bank.config = config;
  bank.k = Parameter("shared.k", uniform({f, d}, proj_limit));
  bank.v = Parameter("shared.v", uniform({f, d}, proj_limit));
  bank.norm_inputs = LayerNormParams::create("shared.norm_inputs", f);
  for (std::size_t j = 0; j < config.heads; ++j) {
    const std::string p = "head" + std::to_string(j);
    Rng head_rng = rng.split(1000 + j);
    HeadParams h;
    h.mu = Parameter(p + ".mu", Tensor({d}));
    for (double& x : h.mu.value.data()) x = head_rng.uniform(-slot_limit, slot_limit);
    h.log_sigma = Parameter(p + ".log_sigma", Tensor({d}));
    for (double& x : h.log_sigma.value.data()) x = head_rng.uniform(-slot_limit, slot_limit);
    const double q_limit = std::sqrt(3.0 / static_cast<double>(d));
    h.q = Parameter(p + ".q", Tensor({d, d}));
    for (double& x : h.q.value.data()) x = head_rng.uniform(-q_limit, q_limit);
    h.gru = GruParams::create(p + ".gru", d, d, head_rng);
    h.mlp = Mlp::create(p + ".mlp", {d, config.mlp_hidden, d}, head_rng);
    h.norm_slots = LayerNormParams::create(p + ".norm_slots", d);
    h.norm_mlp = LayerNormParams::create(p + ".norm_mlp", d);
    bank.heads.push_back(std::move(h));
  }
  return bank;
}

void HeadBank::register_parameters(ParameterRegistry& reg) {
  reg.add(k);
  reg.add(v);
  if (config.layer_norm) norm_inputs.register_parameters(reg);
  for (auto& h : heads) h.register_parameters(reg, config.layer_norm);
}

namespace {

HeadParams& head_at(HeadBank& bank, std::size_t head) {
  if (head >= bank.heads.size()) {
    throw ContractError("head index " + std::to_string(head) + " out of range for " +
                        std::to_string(bank.heads.size()) + " heads");
  }
  return bank.heads[head];
}

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& x : t.data()) x = rng.normal();
  return t;
}

}  // namespace

ProjectedFeatures project_features(Tape& tape, HeadBank& bank, const Tensor& tokens) {
  if (tokens.rank() != 2 || tokens.cols() != bank.config.feat_dim) {
    throw ContractError("features " + shape_to_string(tokens.shape()) +
                        " do not match model D_feats " + std::to_string(bank.config.feat_dim));
  }
  Var x = tape.constant(tokens);
  if (bank.config.layer_norm) x = bank.norm_inputs.forward(tape, x);
  return {matmul(x, tape.param(bank.k)), matmul(x, tape.param(bank.v))};
}

Var init_slots(Tape& tape, HeadBank& bank, std::size_t head, Rng& rng) {
  HeadParams& h = head_at(bank, head);
  const std::size_t k = bank.config.slots, d = bank.config.slot_dim;
  Var mu = repeat_rows(reshape(tape.param(h.mu), {1, d}), k);
  Var sigma = repeat_rows(reshape(exp(tape.param(h.log_sigma)), {1, d}), k);
  return mu + sigma * tape.constant(standard_normal(k, d, rng));
}

AttentionTrace compute_attention(Tape& tape, const ProjectedFeatures& features, Var slots,
                                 HeadBank& bank, std::size_t head) {
  HeadParams& h = head_at(bank, head);
  Var normed = bank.config.layer_norm ? h.norm_slots.forward(tape, slots) : slots;
  Var q = matmul(normed, tape.param(h.q));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(bank.config.slot_dim));
  AttentionTrace t;
  t.logits = scale(matmul(features.keys, transpose(q)), inv_sqrt_d);
  // Slots compete for each patch; each slot then takes a weighted mean over
  // patches.
  t.attn = softmax(t.logits, 1);
  t.weights = normalize_axis(add_scalar(t.attn, bank.config.epsilon), 0);
  t.updates = matmul(transpose(t.weights), features.values);
  return t;
}

HeadTrace attention_iteration(Tape& tape, const ProjectedFeatures& features, Var slots,
                              HeadBank& bank, std::size_t head) {
  HeadParams& h = head_at(bank, head);
  HeadTrace out;
  out.attention = compute_attention(tape, features, slots, bank, head);
  Var next = gru_cell(tape, slots, out.attention.updates, h.gru);
  Var mlp_in = bank.config.layer_norm ? h.norm_mlp.forward(tape, next) : next;
  out.slots = next + h.mlp.forward(tape, mlp_in);
  return out;
}

HeadTrace run_head(Tape& tape, const ProjectedFeatures& features, Var initial, HeadBank& bank,
                   std::size_t head) {
  if (initial.shape() != Shape{bank.config.slots, bank.config.slot_dim}) {
    throw ContractError("initial slots " + shape_to_string(initial.shape()) + " expected [" +
                        std::to_string(bank.config.slots) + "x" +
                        std::to_string(bank.config.slot_dim) + "]");
  }
  if (bank.config.iterations == 0) {
    return HeadTrace{initial, compute_attention(tape, features, initial, bank, head)};
  }
  HeadTrace trace{initial, {}};
  for (std::size_t t = 0; t < bank.config.iterations; ++t) {
    trace = attention_iteration(tape, features, trace.slots, bank, head);
  }
  return trace;
}

// ---------------------------------------------------------------------------

namespace {

HeadResult to_result(const HeadTrace& trace, std::size_t head) {
  return HeadResult{SlotSet{trace.slots.value(), head},
                    AttentionState{trace.attention.logits.value(), trace.attention.attn.value(),
                                   trace.attention.weights.value(),
                                   trace.attention.updates.value()}};
}

}  // namespace

SlotSet init_slots(HeadBank& bank, std::size_t head, Rng& rng) {
  Tape tape(Tape::Mode::kInference);
  return SlotSet{init_slots(tape, bank, head, rng).value(), head};
}

std::pair<SlotSet, AttentionState> attention_iteration(const Tensor& keys, const Tensor& values,
                                                       const SlotSet& slots, HeadBank& bank,
                                                       std::size_t head) {
  Tape tape(Tape::Mode::kInference);
  ProjectedFeatures f{tape.constant(keys), tape.constant(values)};
  HeadResult r = to_result(attention_iteration(tape, f, tape.constant(slots.slots), bank, head),
                           head);
  return {std::move(r.slots), std::move(r.attention)};
}

HeadResult run_head(const FeatureMap& features, HeadBank& bank, std::size_t head, Rng& rng) {
  Tape tape(Tape::Mode::kInference);
  ProjectedFeatures f = project_features(tape, bank, features.tokens);
  Var init = init_slots(tape, bank, head, rng);
  return to_result(run_head(tape, f, init, bank, head), head);
}

HeadResult run_head_from(const FeatureMap& features, HeadBank& bank, std::size_t head,
                         const SlotSet& initial) {
  Tape tape(Tape::Mode::kInference);
  ProjectedFeatures f = project_features(tape, bank, features.tokens);
  return to_result(run_head(tape, f, tape.constant(initial.slots), bank, head), head);
}

std::vector<HeadResult> run_all_heads(const FeatureMap& features, HeadBank& bank, const Rng& rng) {
  Tape tape(Tape::Mode::kInference);
  ProjectedFeatures f = project_features(tape, bank, features.tokens);
  std::vector<HeadResult> out;
  out.reserve(bank.num_heads());
  for (std::size_t j = 0; j < bank.num_heads(); ++j) {
    Rng head_rng = rng.split(j);
    Var init = init_slots(tape, bank, j, head_rng);
    out.push_back(to_result(run_head(tape, f, init, bank, j), j));
  }
  return out;
}

}  // namespace slotforge
