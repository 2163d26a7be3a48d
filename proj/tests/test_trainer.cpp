#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "slotforge/errors.hpp"
#include "slotforge/trainer.hpp"
#include "test_support.hpp"

using namespace slotforge;

namespace {

ModelConfig tiny_model(std::size_t heads = 2) {
  ModelConfig m;
  m.attention.heads = heads;
  m.attention.slots = 2;
  m.attention.slot_dim = 4;
  m.attention.feat_dim = 3;
  m.attention.iterations = 2;
  m.attention.mlp_hidden = 5;
  m.grid_h = 2;
  m.grid_w = 2;
  m.decoder_hidden = 6;
  return m;
}

std::vector<FeatureMap> tiny_dataset(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureMap> out;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t({4, 3});
    for (double& v : t.data()) v = rng.uniform(-1, 1);
    out.push_back(FeatureMap{2, 2, t, TokenKind::kKey});
  }
  return out;
}

std::vector<const FeatureMap*> pointers(const std::vector<FeatureMap>& data) {
  std::vector<const FeatureMap*> out;
  for (const auto& f : data) out.push_back(&f);
  return out;
}

std::vector<Tensor> snapshot(Model& m) {
  std::vector<Tensor> out;
  ParameterRegistry reg = m.registry();
  for (std::size_t i = 0; i < reg.size(); ++i) out.push_back(reg[i].value);
  return out;
}

double grad_norm(const Parameter& p) {
  double s = 0;
  for (double v : p.grad.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST(LrSchedule, Examples) {
  TrainConfig cfg;
  cfg.lr_base = 4e-4;
  EXPECT_DOUBLE_EQ(lr_at(0, 5000, cfg), 4e-4 / 100);  // W = 100
  EXPECT_DOUBLE_EQ(lr_at(99, 5000, cfg), 4e-4);
  EXPECT_DOUBLE_EQ(lr_at(100, 5000, cfg), 4e-4);
  cfg.decay_rate = 0.1;
  EXPECT_DOUBLE_EQ(lr_at(5000, 5000, cfg), 4e-4 * 0.1);
  EXPECT_DOUBLE_EQ(lr_at(2550, 5000, cfg), 4e-4 * std::pow(0.1, 0.5));
  cfg.warmup_frac = 0.0;
  EXPECT_DOUBLE_EQ(lr_at(0, 10, cfg), 4e-4);
}

TEST(LrSchedule, WarmupRoundsHalfUp) {
  TrainConfig cfg;
  cfg.lr_base = 1.0;
  cfg.warmup_frac = 0.02;
  // 0.02 · 125 = 2.5 -> W = 3
  EXPECT_DOUBLE_EQ(lr_at(0, 125, cfg), 1.0 / 3);
  EXPECT_DOUBLE_EQ(lr_at(2, 125, cfg), 1.0);
}

TEST(LrSchedule, ContinuousAtBoundaryAndMonotoneAfter) {
  TrainConfig cfg;
  for (std::size_t total : {50u, 200u, 1000u}) {
    const auto w = static_cast<std::size_t>(std::floor(cfg.warmup_frac * total + 0.5));
    if (w > 0) {
      EXPECT_DOUBLE_EQ(lr_at(w - 1, total, cfg), cfg.lr_base);
    }
    EXPECT_DOUBLE_EQ(lr_at(w, total, cfg), cfg.lr_base);
    for (std::size_t s = w + 1; s <= total; ++s) EXPECT_LT(lr_at(s, total, cfg), lr_at(s - 1, total, cfg));
  }
}

TEST(TotalSteps, EpochsOrMaxSteps) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  EXPECT_EQ(total_steps(10, cfg), 9u);
  cfg.max_steps = 7;
  EXPECT_EQ(total_steps(10, cfg), 7u);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.warmup_frac = 1.5;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  EXPECT_EQ(parse_head_selection("fused"), HeadSelection::kFused);
  EXPECT_THROW(parse_head_selection("all"), UsageError);
}

TEST(Adam, MatchesStraightLineSteps) {
  Parameter p("w", Tensor::matrix({{0.5, -1.0}}));
  ParameterRegistry reg;
  reg.add(p);
  TrainState state;
  state.first_moment = {Tensor({1, 2})};
  state.second_moment = {Tensor({1, 2})};
  TrainConfig cfg;
  const double grads[2][2] = {{0.2, -3.0}, {-0.1, 0.5}};
  double w[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double lr = 0.01;
  for (int t = 1; t <= 2; ++t) {
    p.grad = Tensor::matrix({{grads[t - 1][0], grads[t - 1][1]}});
    adam_update(reg, state, cfg, lr);
    for (int e = 0; e < 2; ++e) {
      const double g = grads[t - 1][e];
      m[e] = 0.9 * m[e] + 0.1 * g;
      v[e] = 0.999 * v[e] + 0.001 * g * g;
      const double mh = m[e] / (1 - std::pow(0.9, t)), vh = v[e] / (1 - std::pow(0.999, t));
      w[e] -= lr * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.value(0, e), w[e], 1e-15);
    }
  }
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, SkipsFrozenParameters) {
  Parameter p("fixed", Tensor::matrix({{1.0}}), false);
  ParameterRegistry reg;
  reg.add(p);
  TrainState state;
  state.first_moment = {Tensor({1, 1})};
  state.second_moment = {Tensor({1, 1})};
  p.grad = Tensor::matrix({{5.0}});
  adam_update(reg, state, TrainConfig{}, 0.1);
  EXPECT_EQ(p.value(0, 0), 1.0);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  Model model = Model::create(tiny_model(), 1);
  TrainState state = TrainState::create(model, 1);
  TrainConfig cfg;
  cfg.lr_base = 0.0;
  auto data = tiny_dataset(3, 2);
  auto before = snapshot(model);
  const double loss = train_step(pointers(data), model, state, cfg, 10);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(snapshot(model), before);
  EXPECT_EQ(state.step, 1u);
}

TEST(TrainStep, HeadsDrawnUniformly) {
  Model model = Model::create(tiny_model(4), 3);
  TrainState state = TrainState::create(model, 3);
  TrainConfig cfg;
  cfg.lr_base = 0.0;
  cfg.masking.strategy = MaskStrategy::kNone;
  auto data = tiny_dataset(1, 4);
  for (int s = 0; s < 4000; ++s) train_step(pointers(data), model, state, cfg, 4000);
  ASSERT_EQ(state.head_counts.size(), 4u);
  for (std::size_t c : state.head_counts) {
    EXPECT_GE(c, 900u);
    EXPECT_LE(c, 1100u);
  }
}

TEST(ImageLoss, RandomHeadGradientsAreSparse) {
  Model model = Model::create(tiny_model(3), 5);
  ParameterRegistry reg = model.registry();
  auto data = tiny_dataset(1, 6);
  TrainConfig cfg;
  for (std::size_t head = 0; head < 3; ++head) {
    reg.zero_grad();
    Tape tape;
    Rng init(9);
    tape.backward(image_loss(tape, data[0], model, cfg, head, 0, init));
    const std::string mine = "head" + std::to_string(head) + ".";
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const Parameter& p = reg[i];
      if (p.name.rfind("head", 0) == 0 && p.name.rfind(mine, 0) != 0) {
        EXPECT_EQ(grad_norm(p), 0.0) << p.name;
      }
    }
    EXPECT_GT(grad_norm(*reg.find(mine + "q")), 0.0);
    EXPECT_GT(grad_norm(*reg.find("shared.k")), 0.0);
    EXPECT_GT(grad_norm(*reg.find("decoder.pos")), 0.0);
  }
}

TEST(ImageLoss, FusedTrainingReachesEveryHead) {
  Model model = Model::create(tiny_model(3), 7);
  ParameterRegistry reg = model.registry();
  auto data = tiny_dataset(1, 8);
  TrainConfig cfg;
  cfg.head_select = HeadSelection::kFused;
  reg.zero_grad();
  Tape tape;
  Rng init(2);
  tape.backward(image_loss(tape, data[0], model, cfg, 1, 0, init));
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_GT(grad_norm(*reg.find("head" + std::to_string(j) + ".q")), 0.0) << j;
}

TEST(ImageLoss, TargetIsTheUnmaskedInput) {
  Model model = Model::create(tiny_model(1), 9);
  auto data = tiny_dataset(1, 10);
  TrainConfig masked;
  masked.masking.m_percent = 100.0;
  Tape tape(Tape::Mode::kInference);
  Rng init(1);
  const double loss = image_loss(tape, data[0], model, masked, 0, 0, init).value()[0];
  // Every token masked: the model sees zeros yet is scored against the
  // original tokens.
  FeatureMap zeros = data[0];
  zeros.tokens.fill(0.0);
  TrainConfig none;
  none.masking.strategy = MaskStrategy::kNone;
  Tape tape2(Tape::Mode::kInference);
  Rng init2(1);
  Model copy = model;
  Var decoded_on_zeros = image_loss(tape2, zeros, copy, none, 0, 0, init2);
  EXPECT_NE(loss, decoded_on_zeros.value()[0]);
  EXPECT_TRUE(std::isfinite(loss));
}

TEST(TrainStep, NonFiniteLossNamesTheOp) {
  Model model = Model::create(tiny_model(1), 11);
  TrainState state = TrainState::create(model, 11);
  model.decoder.mlp.layers[2].bias->value[0] = std::numeric_limits<double>::quiet_NaN();
  auto data = tiny_dataset(2, 12);
  try {
    train_step(pointers(data), model, state, TrainConfig{}, 10);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("node"), std::string::npos) << msg;
  }
}

TEST(Train, DeterministicAcrossThreadCounts) {
  auto data = tiny_dataset(6, 13);
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.max_steps = 6;
  cfg.seed = 4;
  cfg.lr_base = 1e-2;
  cfg.threads = 1;
  TrainResult a = train(data, cfg, tiny_model());
  cfg.threads = 3;
  TrainResult b = train(data, cfg, tiny_model());
  ASSERT_EQ(a.curve.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
  auto ra = model_records(a.model), rb = model_records(b.model);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].value, rb[i].value) << ra[i].name;
  cfg.seed = 5;
  TrainResult c = train(data, cfg, tiny_model());
  EXPECT_NE(c.curve.back().loss, a.curve.back().loss);
}

TEST(Train, ZeroLrSingleImageKeepsInitialParameters) {
  auto data = tiny_dataset(1, 14);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_base = 0.0;
  cfg.seed = 8;
  TrainResult r = train(data, cfg, tiny_model());
  Model fresh = Model::create(tiny_model(), 8);
  EXPECT_EQ(snapshot(r.model), snapshot(fresh));
  EXPECT_EQ(r.curve.size(), 1u);
}

TEST(Train, WritesCheckpointsAndLossCurve) {
  const auto dir = slotforge::testing::scratch_dir("trainer_out");
  auto data = tiny_dataset(4, 15);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  std::size_t calls = 0;
  train(data, cfg, tiny_model(), TrainOutput{dir, [&](const LossRecord&) { ++calls; }});
  EXPECT_EQ(calls, 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_epoch0001.sltf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_epoch0002.sltf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "model.sltf"));
  const auto bytes = slotforge::testing::file_bytes(dir / "loss.csv");
  const std::string csv(bytes.begin(), bytes.end());
  EXPECT_EQ(csv.rfind("step,loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Train, RejectsMismatchedData) {
  auto data = tiny_dataset(2, 16);
  data[1].tokens = Tensor({4, 5});
  TrainConfig cfg;
  cfg.max_steps = 1;
  EXPECT_THROW(train(data, cfg, tiny_model()), ContractError);
  EXPECT_THROW(train({}, cfg, tiny_model()), ContractError);
}
