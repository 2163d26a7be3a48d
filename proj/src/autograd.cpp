#include "slotforge/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cassert>
#include <cmath>

#include "slotforge/errors.hpp"

namespace slotforge {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractError(std::string(op) + " expects a rank-2 tensor, got " +
                        shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + " shape mismatch: " + shape_to_string(a.shape()) +
                        " vs " + shape_to_string(b.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

// Splits a shape around `axis` into (outer, length, inner) strides.
struct AxisView {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for " +
                        shape_to_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void add_into(Tensor& dst, const Tensor& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter / registry

Parameter::Parameter(std::string n, Tensor v, bool train)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

void ParameterRegistry::add(Parameter& p) {
  if (!index_.emplace(p.name, params_.size()).second) {
    throw ContractError("duplicate parameter name '" + p.name + "'");
  }
  params_.push_back(&p);
}

Parameter* ParameterRegistry::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second];
}

void ParameterRegistry::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(index_); }

Tensor Var::grad() const {
  if (const Tensor* g = tape_->grad_if_any(index_)) return *g;
  return Tensor(value().shape());
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().op = "variable";
  nodes_.back().requires_grad = recording();
  return v;
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = constant(p.value);
  Node& n = nodes_.back();
  n.op = "parameter";
  n.param = &p;
  n.requires_grad = recording() && p.trainable;
  param_nodes_.emplace(&p, v.index());
  return v;
}

Var Tape::push(const char* op, Tensor value, std::vector<std::uint32_t> inputs,
               BackwardFn backward) {
#ifndef NDEBUG
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
#endif
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (recording()) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [&](std::uint32_t i) { return nodes_[i].requires_grad; });
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor* Tape::grad_if_any(std::uint32_t i) const {
  return nodes_[i].has_grad ? &nodes_[i].grad : nullptr;
}

Tensor& Tape::grad(std::uint32_t i) {
  Node& n = nodes_[i];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::compute_gradients(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_to_string(loss.value().shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad(loss.index())[0] = 1.0;
  for (std::size_t k = loss.index() + 1; k-- > 0;) {
    const auto i = static_cast<std::uint32_t>(k);
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

GradientSet Tape::parameter_gradients() const {
  GradientSet out;
  for (const auto& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad) continue;
    out.entries.emplace_back(n.param, n.has_grad ? n.grad : Tensor(n.value.shape()));
  }
  return out;
}

void Tape::backward(Var loss) {
  compute_gradients(loss);
  accumulate(parameter_gradients());
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) {
      return std::string(nodes_[i].op) + " (node " + std::to_string(i) + ", shape " +
             shape_to_string(nodes_[i].value.shape()) + ")";
    }
  }
  return std::nullopt;
}

void accumulate(const GradientSet& grads, double scale) {
  for (const auto& [param, g] : grads.entries) {
    if (param->grad.shape() != param->value.shape()) param->zero_grad();
    add_into(param->grad, g, scale);
  }
}

// ---------------------------------------------------------------------------
// Plain kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ContractError("matmul dimension mismatch: " + shape_to_string(a.shape()) + " · " +
                        shape_to_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  if (c.size() == 0) return c;
  if (a.cols() == 0) return c;
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

Tensor softmax(const Tensor& t, std::size_t axis) {
  const AxisView v = axis_view(t.shape(), axis);
  Tensor out(t.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.length; ++k) mx = std::max(mx, t[base + k * v.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < v.length; ++k) {
        const double e = std::exp(t[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < v.length; ++k) out[base + k * v.inner] /= s;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) throw ContractError("layer_norm on rank-0 tensor");
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw ContractError("layer_norm width " + std::to_string(d) + " vs gain " +
                        shape_to_string(gain.shape()) + ", bias " + shape_to_string(bias.shape()));
  }
  Tensor out(x.shape());
  const std::size_t rows = d ? x.size() / d : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = gain[i] * (in[i] - mean) * inv + bias[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recorded operations

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = a.tape();
  return t.push("matmul", matmul(a.value(), b.value()), {a.index(), b.index()},
                [ia = a.index(), ib = b.index()](Tape& tp, std::uint32_t self) {
                  const Tensor& g = tp.grad(self);
                  if (tp.requires_grad(ia)) {
                    as_matrix(tp.grad(ia)).noalias() +=
                        as_matrix(g) * as_matrix(tp.value(ib)).transpose();
                  }
                  if (tp.requires_grad(ib)) {
                    as_matrix(tp.grad(ib)).noalias() +=
                        as_matrix(tp.value(ia)).transpose() * as_matrix(g);
                  }
                });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "transpose");
  Tensor out({x.cols(), x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  return a.tape().push("transpose", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t r = 0; r < ga.rows(); ++r)
                           for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(c, r);
                       });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return a.tape().push("add", std::move(out), {a.index(), b.index()},
                       [ia = a.index(), ib = b.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         if (tp.requires_grad(ia)) add_into(tp.grad(ia), g);
                         if (tp.requires_grad(ib)) add_into(tp.grad(ib), g);
                       });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  add_into(out, b.value(), -1.0);
  return a.tape().push("sub", std::move(out), {a.index(), b.index()},
                       [ia = a.index(), ib = b.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         if (tp.requires_grad(ia)) add_into(tp.grad(ia), g);
                         if (tp.requires_grad(ib)) add_into(tp.grad(ib), g, -1.0);
                       });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().push("mul", std::move(out), {a.index(), b.index()},
                       [ia = a.index(), ib = b.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         if (tp.requires_grad(ia)) {
                           Tensor& ga = tp.grad(ia);
                           const Tensor& vb = tp.value(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                         }
                         if (tp.requires_grad(ib)) {
                           Tensor& gb = tp.grad(ib);
                           const Tensor& va = tp.value(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                         }
                       });
}

Var add_bias(Var a, Var bias) {
  require_same_tape(a, bias);
  const Tensor& x = a.value();
  require_rank2(x, "add_bias");
  if (bias.value().size() != x.cols()) {
    throw ContractError("add_bias width mismatch: " + shape_to_string(x.shape()) + " + " +
                        shape_to_string(bias.value().shape()));
  }
  Tensor out = x;
  const Tensor& b = bias.value();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += b[c];
  return a.tape().push("add_bias", std::move(out), {a.index(), bias.index()},
                       [ia = a.index(), ib = bias.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         if (tp.requires_grad(ia)) add_into(tp.grad(ia), g);
                         if (tp.requires_grad(ib)) {
                           Tensor& gb = tp.grad(ib);
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                         }
                       });
}

Var scale(Var a, double c) {
  Tensor out = map_unary(a.value(), [c](double v) { return c * v; });
  return a.tape().push("scale", std::move(out), {a.index()},
                       [ia = a.index(), c](Tape& tp, std::uint32_t self) {
                         add_into(tp.grad(ia), tp.grad(self), c);
                       });
}

Var add_scalar(Var a, double c) {
  Tensor out = map_unary(a.value(), [c](double v) { return v + c; });
  return a.tape().push("add_scalar", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         add_into(tp.grad(ia), tp.grad(self));
                       });
}

Var sigmoid(Var a) {
  Tensor out = map_unary(a.value(), [](double v) {
    // Branches keep exp() from overflowing for large |v|.
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return a.tape().push("sigmoid", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         const Tensor& y = tp.value(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i] * y[i] * (1.0 - y[i]);
                       });
}

Var tanh(Var a) {
  Tensor out = map_unary(a.value(), [](double v) { return std::tanh(v); });
  return a.tape().push("tanh", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         const Tensor& y = tp.value(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i] * (1.0 - y[i] * y[i]);
                       });
}

Var relu(Var a) {
  Tensor out = map_unary(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return a.tape().push("relu", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         const Tensor& x = tp.value(ia);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           if (x[i] > 0.0) ga[i] += g[i];
                       });
}

Var exp(Var a) {
  Tensor out = map_unary(a.value(), [](double v) { return std::exp(v); });
  return a.tape().push("exp", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         const Tensor& y = tp.value(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                       });
}

Var softmax(Var a, std::size_t axis) {
  Tensor out = softmax(a.value(), axis);
  return a.tape().push(
      "softmax", std::move(out), {a.index()},
      [ia = a.index(), axis](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad(ia);
        const AxisView v = axis_view(y.shape(), axis);
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.length * v.inner + in;
            double s = 0.0;
            for (std::size_t k = 0; k < v.length; ++k) {
              const std::size_t i = base + k * v.inner;
              s += g[i] * y[i];
            }
            for (std::size_t k = 0; k < v.length; ++k) {
              const std::size_t i = base + k * v.inner;
              ga[i] += y[i] * (g[i] - s);
            }
          }
        }
      });
}

Var normalize_axis(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisView v = axis_view(x.shape(), axis);
  Tensor out(x.shape());
  Tensor sums({v.outer * v.inner});
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.length * v.inner + in;
      double s = 0.0;
      for (std::size_t k = 0; k < v.length; ++k) s += x[base + k * v.inner];
      sums[o * v.inner + in] = s;
      for (std::size_t k = 0; k < v.length; ++k) out[base + k * v.inner] = x[base + k * v.inner] / s;
    }
  }
  return a.tape().push(
      "normalize_axis", std::move(out), {a.index()},
      [ia = a.index(), axis, sums = std::move(sums)](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad(ia);
        const AxisView v = axis_view(y.shape(), axis);
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.length * v.inner + in;
            double gy = 0.0;
            for (std::size_t k = 0; k < v.length; ++k) {
              const std::size_t i = base + k * v.inner;
              gy += g[i] * y[i];
            }
            const double s = sums[o * v.inner + in];
            for (std::size_t k = 0; k < v.length; ++k) {
              const std::size_t i = base + k * v.inner;
              ga[i] += (g[i] - gy) / s;
            }
          }
        }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  Tensor out = layer_norm(x.value(), gain.value(), bias.value(), eps);
  return x.tape().push(
      "layer_norm", std::move(out), {x.index(), gain.index(), bias.index()},
      [ix = x.index(), ig = gain.index(), ib = bias.index(), eps](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.value(ix);
        const Tensor& gv = tp.value(ig);
        const std::size_t d = xv.shape().back();
        const std::size_t rows = xv.size() / d;
        std::vector<double> xhat(d), gh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = xv.data().data() + r * d;
          const double* gr = g.data().data() + r * d;
          double mean = 0.0;
          for (std::size_t i = 0; i < d; ++i) mean += in[i];
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double mg = 0.0, mgx = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            xhat[i] = (in[i] - mean) * inv;
            gh[i] = gr[i] * gv[i];
            mg += gh[i];
            mgx += gh[i] * xhat[i];
          }
          mg /= static_cast<double>(d);
          mgx /= static_cast<double>(d);
          if (tp.requires_grad(ix)) {
            Tensor& gx = tp.grad(ix);
            for (std::size_t i = 0; i < d; ++i)
              gx[r * d + i] += inv * (gh[i] - mg - xhat[i] * mgx);
          }
          if (tp.requires_grad(ig)) {
            Tensor& gg = tp.grad(ig);
            for (std::size_t i = 0; i < d; ++i) gg[i] += gr[i] * xhat[i];
          }
          if (tp.requires_grad(ib)) {
            Tensor& gb = tp.grad(ib);
            for (std::size_t i = 0; i < d; ++i) gb[i] += gr[i];
          }
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_rank2(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw ContractError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") out of range for " + shape_to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({x.rows(), w});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = x(r, begin + c);
  return a.tape().push("slice_cols", std::move(out), {a.index()},
                       [ia = a.index(), begin](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
                       });
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& x = a.value();
  require_rank2(x, "repeat_rows");
  Tensor out({x.rows() * times, x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < times; ++t)
      std::copy(x.row(r).begin(), x.row(r).end(), out.row(r * times + t).begin());
  return a.tape().push("repeat_rows", std::move(out), {a.index()},
                       [ia = a.index(), times](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t r = 0; r < ga.rows(); ++r)
                           for (std::size_t t = 0; t < times; ++t)
                             for (std::size_t c = 0; c < ga.cols(); ++c)
                               ga(r, c) += g(r * times + t, c);
                       });
}

Var tile_rows(Var a, std::size_t times) {
  const Tensor& x = a.value();
  require_rank2(x, "tile_rows");
  Tensor out({x.rows() * times, x.cols()});
  for (std::size_t t = 0; t < times; ++t)
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + t * x.size());
  return a.tape().push("tile_rows", std::move(out), {a.index()},
                       [ia = a.index(), times](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t t = 0; t < times; ++t)
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[t * ga.size() + i];
                       });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().push("reshape", std::move(out), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         add_into(tp.grad(ia), tp.grad(self));
                       });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor& x = a.value();
  require_rank2(x, "gather_rows");
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) {
      throw ContractError("gather_rows index " + std::to_string(rows[i]) + " out of range for " +
                          shape_to_string(x.shape()));
    }
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return a.tape().push("gather_rows", std::move(out), {a.index()},
                       [ia = a.index(), rows = std::move(rows)](Tape& tp, std::uint32_t self) {
                         const Tensor& g = tp.grad(self);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < rows.size(); ++i)
                           for (std::size_t c = 0; c < g.cols(); ++c) ga(rows[i], c) += g(i, c);
                       });
}

Var weighted_slot_sum(Var alphas, Var feats) {
  require_same_tape(alphas, feats);
  const Tensor& al = alphas.value();
  const Tensor& f = feats.value();
  require_rank2(al, "weighted_slot_sum");
  require_rank2(f, "weighted_slot_sum");
  const std::size_t k = al.rows(), n = al.cols(), width = f.cols();
  if (f.rows() != k * n) {
    throw ContractError("weighted_slot_sum: alphas " + shape_to_string(al.shape()) +
                        " incompatible with features " + shape_to_string(f.shape()));
  }
  Tensor out({n, width});
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t p = 0; p < n; ++p) {
      const double w = al(s, p);
      for (std::size_t c = 0; c < width; ++c) out(p, c) += w * f(s * n + p, c);
    }
  return alphas.tape().push(
      "weighted_slot_sum", std::move(out), {alphas.index(), feats.index()},
      [ia = alphas.index(), iff = feats.index()](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& al = tp.value(ia);
        const Tensor& f = tp.value(iff);
        const std::size_t k = al.rows(), n = al.cols(), width = f.cols();
        if (tp.requires_grad(ia)) {
          Tensor& ga = tp.grad(ia);
          for (std::size_t s = 0; s < k; ++s)
            for (std::size_t p = 0; p < n; ++p) {
              double acc = 0.0;
              for (std::size_t c = 0; c < width; ++c) acc += g(p, c) * f(s * n + p, c);
              ga(s, p) += acc;
            }
        }
        if (tp.requires_grad(iff)) {
          Tensor& gf = tp.grad(iff);
          for (std::size_t s = 0; s < k; ++s)
            for (std::size_t p = 0; p < n; ++p)
              for (std::size_t c = 0; c < width; ++c) gf(s * n + p, c) += al(s, p) * g(p, c);
        }
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().push("sum", Tensor::scalar(s), {a.index()},
                       [ia = a.index()](Tape& tp, std::uint32_t self) {
                         const double g = tp.grad(self)[0];
                         for (double& v : tp.grad(ia).data()) v += g;
                       });
}

Var mse(Var a, const Tensor& target) {
  require_same_shape(a.value(), target, "mse");
  const Tensor& x = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - target[i]) * (x[i] - target[i]);
  const double n = static_cast<double>(x.size());
  return a.tape().push("mse", Tensor::scalar(s / n), {a.index()},
                       [ia = a.index(), target, n](Tape& tp, std::uint32_t self) {
                         const double g = tp.grad(self)[0];
                         const Tensor& x = tp.value(ia);
                         Tensor& ga = tp.grad(ia);
                         for (std::size_t i = 0; i < x.size(); ++i)
                           ga[i] += g * 2.0 * (x[i] - target[i]) / n;
                       });
}

Var dot(Var a, const Tensor& weights) {
  require_same_shape(a.value(), weights, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.value()[i] * weights[i];
  return a.tape().push("dot", Tensor::scalar(s), {a.index()},
                       [ia = a.index(), weights](Tape& tp, std::uint32_t self) {
                         add_into(tp.grad(ia), weights, tp.grad(self)[0]);
                       });
}

}  // namespace slotforge
