#include "slotforge/nn.hpp"

#include <cmath>

#include "slotforge/errors.hpp"

namespace slotforge {

namespace {

Tensor uniform_tensor(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Linear Linear::create(const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                      Rng& rng) {
  Linear l;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  l.weight = Parameter(name + ".weight", uniform_tensor({in, out}, limit, rng));
  if (with_bias) l.bias = Parameter(name + ".bias", Tensor({out}));
  return l;
}

Var Linear::forward(Tape& tape, Var x) {
  Var y = matmul(x, tape.param(weight));
  if (bias) y = add_bias(y, tape.param(*bias));
  return y;
}

void Linear::register_parameters(ParameterRegistry& reg) {
  reg.add(weight);
  if (bias) reg.add(*bias);
}

LayerNormParams LayerNormParams::create(const std::string& name, std::size_t width) {
  return LayerNormParams{Parameter(name + ".gain", Tensor::full({width}, 1.0)),
                         Parameter(name + ".bias", Tensor({width}))};
}

Var LayerNormParams::forward(Tape& tape, Var x) {
  return layer_norm(x, tape.param(gain), tape.param(bias));
}

void LayerNormParams::register_parameters(ParameterRegistry& reg) {
  reg.add(gain);
  reg.add(bias);
}

Mlp Mlp::create(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw ContractError("mlp needs at least input and output widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    m.layers.push_back(
        Linear::create(name + "." + std::to_string(i), widths[i], widths[i + 1], true, rng));
  }
  return m;
}

Var Mlp::forward(Tape& tape, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].forward(tape, x);
    if (i + 1 < layers.size()) x = relu(x);
  }
  return x;
}

void Mlp::register_parameters(ParameterRegistry& reg) {
  for (auto& l : layers) l.register_parameters(reg);
}

GruParams GruParams::create(const std::string& name, std::size_t input, std::size_t hidden,
                            Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruParams g;
  g.w_ih = Parameter(name + ".w_ih", uniform_tensor({input, 3 * hidden}, limit, rng));
  g.w_hh = Parameter(name + ".w_hh", uniform_tensor({hidden, 3 * hidden}, limit, rng));
  g.b_ih = Parameter(name + ".b_ih", uniform_tensor({3 * hidden}, limit, rng));
  g.b_hh = Parameter(name + ".b_hh", uniform_tensor({3 * hidden}, limit, rng));
  return g;
}

void GruParams::register_parameters(ParameterRegistry& reg) {
  reg.add(w_ih);
  reg.add(w_hh);
  reg.add(b_ih);
  reg.add(b_hh);
}

Var gru_cell(Tape& tape, Var state, Var input, GruParams& params) {
  if (state.shape() != input.shape()) {
    throw ContractError("gru_cell state " + shape_to_string(state.shape()) + " vs input " +
                        shape_to_string(input.shape()));
  }
  const std::size_t h = params.hidden();
  Var gx = add_bias(matmul(input, tape.param(params.w_ih)), tape.param(params.b_ih));
  Var gh = add_bias(matmul(state, tape.param(params.w_hh)), tape.param(params.b_hh));
  Var r = sigmoid(slice_cols(gx, 0, h) + slice_cols(gh, 0, h));
  Var z = sigmoid(slice_cols(gx, h, 2 * h) + slice_cols(gh, h, 2 * h));
  Var n = tanh(slice_cols(gx, 2 * h, 3 * h) + r * slice_cols(gh, 2 * h, 3 * h));
  // h' = n + z ⊙ (h − n)
  return n + z * (state - n);
}

}  // namespace slotforge
