#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gsid/num/tensor.hpp"

namespace gsid::num {

class Tape;

/// Handle to a tensor recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

/// Records primitive operations in creation order; backward() replays them
/// in reverse, once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}, "constant"); }
  Var variable(Tensor value) { return push(std::move(value), true, {}, "variable"); }

  /// Appends an op output. `fn` is kept only if some input needs gradients.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
    bool needs = false;
    for (Var v : inputs) needs = needs || node(v).requires_grad;
    if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, op);
  }

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  const Tensor& grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) throw UsageError("gradient requested for a tensor that does not require one");
    if (!backward_done_) throw UsageError("gradient requested before backward()");
    if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  }

  /// Gradient buffer of node `id`, zero-initialized on first use.
  Tensor& grad_buffer(int id) {
    Node& n = nodes_[id];
    if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].grad.shape == nodes_[id].value.shape; }
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }

  void backward(Var loss) {
    const Node& l = node(loss);
    if (backward_done_) throw UsageError("backward() already ran on this tape");
    if (l.value.size() != 1) throw UsageError("backward() needs a scalar loss, got " + l.value.shape_string());
    if (!l.requires_grad) throw UsageError("loss does not depend on any variable");
    backward_done_ = true;
    grad_buffer(loss.id).values[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && has_grad(id)) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    mutable Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn, const char* op) {
    nodes_.push_back({std::move(value), Tensor{}, requires_grad, std::move(fn), op});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(Var v) const {
    if (v.tape != this) throw UsageError("tensor is not recorded on this tape");
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw UsageError("invalid tensor handle");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

using TensorMap = std::map<std::string, Tensor>;
using ParameterSet = TensorMap;
using Gradients = TensorMap;
using Bindings = std::map<std::string, Var>;

/// Places every parameter on the tape as a differentiable leaf.
inline Bindings bind_parameters(Tape& tape, const ParameterSet& params) {
  Bindings b;
  for (const auto& [name, t] : params) b.emplace(name, tape.variable(t));
  return b;
}

inline Gradients collect_gradients(const Tape& tape, const Bindings& b) {
  Gradients g;
  for (const auto& [name, v] : b) g.emplace(name, tape.grad(v));
  return g;
}

inline void accumulate(Gradients& into, const Gradients& g, double scale = 1.0) {
  for (const auto& [name, t] : g) {
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor s = t;
      for (double& v : s.values) v *= scale;
      into.emplace(name, std::move(s));
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) it->second.values[i] += scale * t.values[i];
    }
  }
}

}  // namespace gsid::num
