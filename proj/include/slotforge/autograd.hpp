#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "slotforge/tensor.hpp"

namespace slotforge {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value once zero_grad() has run
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true);

  void zero_grad();
};

/// Ordered, name-unique view over parameters owned elsewhere.
class ParameterRegistry {
 public:
  void add(Parameter& p);
  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  Parameter* find(const std::string& name) const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  void zero_grad();

 private:
  std::vector<Parameter*> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape& tape() const { return *tape_; }
  std::uint32_t index() const noexcept { return index_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward; zeros if the node was not reached.
  Tensor grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

/// Per-parameter gradients produced by one tape, in first-use order.
struct GradientSet {
  std::vector<std::pair<Parameter*, Tensor>> entries;
};

/// Records one forward pass and replays it in reverse. A tape is
/// single-threaded; use one tape per image when running concurrently.
class Tape {
 public:
  enum class Mode { kTrain, kInference };

  explicit Tape(Mode mode = Mode::kTrain) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::kTrain; }

  Var constant(Tensor value);
  /// Differentiable leaf not tied to a Parameter (used by gradient checks).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; one node per parameter per tape.
  Var param(Parameter& p);

  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;
  Var push(const char* op, Tensor value, std::vector<std::uint32_t> inputs,
           BackwardFn backward);

  const Tensor& value(std::uint32_t i) const { return nodes_[i].value; }
  const Tensor* grad_if_any(std::uint32_t i) const;
  /// Gradient buffer of node i, allocated on first use.
  Tensor& grad(std::uint32_t i);
  bool requires_grad(std::uint32_t i) const { return nodes_[i].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Fills node gradients for d(loss)/d(node). Loss must hold exactly one
  /// element.
  void compute_gradients(Var loss);
  /// Snapshot of parameter gradients from the last compute_gradients call.
  GradientSet parameter_gradients() const;
  /// compute_gradients followed by accumulation into Parameter::grad.
  void backward(Var loss);

  /// Name and position of the first recorded node with a NaN/Inf value.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
};

/// Adds every entry of `grads`, scaled, into the owning Parameter::grad.
void accumulate(const GradientSet& grads, double scale = 1.0);

// Differentiable operations. All inputs must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a[M×N] + bias[N] broadcast over rows.
Var add_bias(Var a, Var bias);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var softmax(Var a, std::size_t axis);
/// Divides each slice along `axis` by its sum.
Var normalize_axis(Var a, std::size_t axis);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Row r of the input becomes rows r*times .. r*times+times-1.
Var repeat_rows(Var a, std::size_t times);
/// The whole matrix stacked `times` times.
Var tile_rows(Var a, std::size_t times);
Var reshape(Var a, Shape shape);
Var gather_rows(Var a, std::vector<std::size_t> rows);
/// out[n] = Σ_k alphas[k,n] · feats[k*N + n]; alphas K×N, feats (K·N)×F.
Var weighted_slot_sum(Var alphas, Var feats);
Var sum(Var a);
/// Mean squared error against a constant target, as a one-element tensor.
Var mse(Var a, const Tensor& target);
/// Σ a ⊙ weights with constant weights.
Var dot(Var a, const Tensor& weights);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Plain (non-recording) kernels shared with the ops above.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& t, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

}  // namespace slotforge
