#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "slotforge/nn.hpp"

using namespace slotforge;
using slotforge::testing::check_parameter_gradients;

namespace {

void fill(Parameter& p, double v) { p.value.fill(v); }

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

Tensor gru_value(GruParams& g, const Tensor& state, const Tensor& input) {
  Tape tape(Tape::Mode::kInference);
  return gru_cell(tape, tape.constant(state), tape.constant(input), g).value();
}

}  // namespace

TEST(Gru, ZeroWeightsHalveTheState) {
  Rng rng(1);
  GruParams g = GruParams::create("gru", 4, 4, rng);
  for (Parameter* p : {&g.w_ih, &g.w_hh, &g.b_ih, &g.b_hh}) fill(*p, 0.0);
  Tensor state = random_tensor({3, 4}, rng), input = random_tensor({3, 4}, rng);
  Tensor out = gru_value(g, state, input);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * state[i]);
}

TEST(Gru, SaturatedUpdateGateKeepsState) {
  Rng rng(2);
  GruParams g = GruParams::create("gru", 5, 5, rng);
  // Update gate occupies the middle block of the packed biases.
  for (std::size_t i = 5; i < 10; ++i) g.b_ih.value[i] = 1e3;
  Tensor state = random_tensor({3, 5}, rng), input = random_tensor({3, 5}, rng);
  const Tensor out = gru_value(g, state, input);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.data()[i], state.data()[i], 1e-12);
}

TEST(Gru, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  GruParams g = GruParams::create("gru", 8, 8, rng);
  ParameterRegistry reg;
  g.register_parameters(reg);
  const Tensor state = random_tensor({3, 8}, rng), input = random_tensor({3, 8}, rng);
  const Tensor probe = random_tensor({3, 8}, rng);
  auto reports = check_parameter_gradients(reg, [&](Tape& tape) {
    return dot(gru_cell(tape, tape.constant(state), tape.constant(input), g), probe);
  });
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) EXPECT_LT(r.rel_err, 1e-4) << r.name;
}

TEST(Gru, GradientsReachStateAndInput) {
  Rng rng(4);
  GruParams g = GruParams::create("gru", 3, 3, rng);
  auto errs = slotforge::testing::check_input_gradients(
      {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [&](Tape& tape, const std::vector<Var>& v) { return sum(gru_cell(tape, v[0], v[1], g)); });
  for (double e : errs) EXPECT_LT(e, 1e-4);
}

TEST(Linear, ShapesAndNames) {
  Rng rng(5);
  Linear l = Linear::create("proj", 3, 7, true, rng);
  EXPECT_EQ(l.weight.name, "proj.weight");
  ASSERT_TRUE(l.bias.has_value());
  EXPECT_EQ(l.bias->name, "proj.bias");
  Tape tape(Tape::Mode::kInference);
  EXPECT_EQ(l.forward(tape, tape.constant(Tensor({4, 3}))).shape(), (Shape{4, 7}));
  // Zero input gives the (zero-initialized) bias.
  for (double v : l.forward(tape, tape.constant(Tensor({2, 3}))).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, ReluBetweenLayersOnly) {
  Rng rng(6);
  Mlp m = Mlp::create("mlp", {1, 1, 1}, rng);
  m.layers[0].weight.value[0] = 1.0;
  m.layers[1].weight.value[0] = 1.0;
  m.layers[1].bias->value[0] = -5.0;
  Tape tape(Tape::Mode::kInference);
  // Negative input clipped by the hidden relu; the output layer is linear.
  EXPECT_EQ(m.forward(tape, tape.constant(Tensor::matrix({{-3.0}}))).value()[0], -5.0);
  EXPECT_EQ(m.forward(tape, tape.constant(Tensor::matrix({{2.0}}))).value()[0], -3.0);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Mlp m = Mlp::create("mlp", {4, 6, 3}, rng);
  for (auto& l : m.layers)
    for (double& b : l.bias->value.data()) b = rng.uniform(-0.5, 0.5);
  ParameterRegistry reg;
  m.register_parameters(reg);
  const Tensor x = random_tensor({5, 4}, rng), probe = random_tensor({5, 3}, rng);
  for (const auto& r : check_parameter_gradients(reg, [&](Tape& tape) {
         return dot(m.forward(tape, tape.constant(x)), probe);
       }))
    EXPECT_LT(r.rel_err, 1e-4) << r.name;
}

TEST(LayerNormParams, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  LayerNormParams ln = LayerNormParams::create("ln", 5);
  for (double& v : ln.gain.value.data()) v = rng.uniform(0.5, 1.5);
  ParameterRegistry reg;
  ln.register_parameters(reg);
  const Tensor x = random_tensor({4, 5}, rng), probe = random_tensor({4, 5}, rng);
  for (const auto& r : check_parameter_gradients(reg, [&](Tape& tape) {
         return dot(ln.forward(tape, tape.constant(x)), probe);
       }))
    EXPECT_LT(r.rel_err, 1e-4) << r.name;
}
