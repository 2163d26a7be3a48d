#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slotforge/autograd.hpp"
#include "slotforge/rng.hpp"

namespace slotforge {

struct Linear {
  Parameter weight;  // in × out
  std::optional<Parameter> bias;

  static Linear create(const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                       Rng& rng);
  Var forward(Tape& tape, Var x);
  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }
  void register_parameters(ParameterRegistry& reg);
};

struct LayerNormParams {
  Parameter gain;
  Parameter bias;

  static LayerNormParams create(const std::string& name, std::size_t width);
  Var forward(Tape& tape, Var x);
  void register_parameters(ParameterRegistry& reg);
};

/// Stacked linear layers with ReLU between them and no activation on the
/// output.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng);
  Var forward(Tape& tape, Var x);
  void register_parameters(ParameterRegistry& reg);
};

/// Gate-packed GRU weights, column blocks ordered (reset, update, candidate).
struct GruParams {
  Parameter w_ih;  // in × 3H
  Parameter w_hh;  // H × 3H
  Parameter b_ih;  // 3H
  Parameter b_hh;  // 3H

  static GruParams create(const std::string& name, std::size_t input, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return w_hh.value.rows(); }
  void register_parameters(ParameterRegistry& reg);
};

/// One GRU step applied independently to every row:
///   r = σ(x·W_ir + b_ir + h·W_hr + b_hr)
///   z = σ(x·W_iz + b_iz + h·W_hz + b_hz)
///   n = tanh(x·W_in + b_in + r ⊙ (h·W_hn + b_hn))
///   h' = (1 − z) ⊙ n + z ⊙ h
Var gru_cell(Tape& tape, Var state, Var input, GruParams& params);

}  // namespace slotforge
