// Central finite-difference oracle shared by unit and acceptance tests.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slotforge/autograd.hpp"

namespace slotforge::testing {

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor). The floor keeps gradients that are zero
/// on both sides from dividing by zero.
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

struct GradReport {
  std::string name;
  double rel_err = 0.0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares tape gradients of `build`'s scalar loss against central
/// differences for every trainable parameter in `registry`.
inline std::vector<GradReport> check_parameter_gradients(
    ParameterRegistry& registry, const std::function<Var(Tape&)>& build, double step = 1e-5) {
  registry.zero_grad();
  {
    Tape tape;
    tape.backward(build(tape));
  }
  auto eval = [&] {
    Tape tape(Tape::Mode::kInference);
    return build(tape).value()[0];
  };
  std::vector<GradReport> out;
  for (Parameter* p : registry) {
    if (!p->trainable) continue;
    Tensor numeric(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = eval();
      p->value[i] = saved - step;
      const double down = eval();
      p->value[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    out.push_back({p->name, relative_error(p->grad, numeric), p->grad, numeric});
  }
  return out;
}

/// Same check for free input tensors bound as tape variables.
inline std::vector<double> check_input_gradients(
    std::vector<Tensor> inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var loss = build(tape, vars);
    tape.compute_gradients(loss);
    for (const Var& v : vars) analytic.push_back(v.grad());
  }
  auto eval = [&] {
    Tape tape(Tape::Mode::kInference);
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return build(tape, vars).value()[0];
  };
  std::vector<double> errors;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + step;
      const double up = eval();
      inputs[k][i] = saved - step;
      const double down = eval();
      inputs[k][i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    errors.push_back(relative_error(analytic[k], numeric));
  }
  return errors;
}

}  // namespace slotforge::testing
