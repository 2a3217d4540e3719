#pragma once

// Reverse-mode differentiation tape.
//
// Nodes are appended in evaluation order, so a node's inputs always carry
// smaller ids. backward() walks ids from the loss down to 0, visiting each
// node once; within a node, adjoints are added into its inputs in input
// order. Gradients accumulate in the tensor's own dtype. The resulting
// order is fixed, so gradients are bit-reproducible.

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrf/tensor.hpp"

namespace vrf {

enum class OpKind {
  leaf,
  constant,
  add,
  hadamard,
  scale,
  conv2d,
  relu,
  sigmoid,
  sigmoid_gate,
  reduce_avg,
  reduce_max,
  concat,
  slice,
  global_avg_pool,
  batch_norm,
  dropout,
  sum,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::hadamard: return "hadamard";
    case OpKind::scale: return "scale";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::sigmoid_gate: return "sigmoid_gate";
    case OpKind::reduce_avg: return "reduce_avg";
    case OpKind::reduce_max: return "reduce_max";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::batch_norm: return "batch_norm";
    case OpKind::dropout: return "dropout";
    case OpKind::sum: return "sum";
  }
  return "?";
}

inline std::optional<OpKind> op_from_name(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(OpKind::sum); ++k) {
    if (name == op_name(static_cast<OpKind>(k))) return static_cast<OpKind>(k);
  }
  return std::nullopt;
}

struct Var {
  std::size_t id = 0;
};

template <Scalar T>
class Gradients;

template <Scalar T>
class Tape {
 public:
  /// Receives the output adjoint and one slot per input; a slot is null when
  /// that input does not need a gradient. Implementations add into slots.
  using Adjoint = std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in)>;

  using value_type = T;

  Tape() = default;
  // Recorded adjoints refer back to the tape, so it stays put.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    Adjoint adjoint;
    bool requires_grad = false;
    const Tensor<T>* source = nullptr;  // parameter a leaf was read from
  };

  /// Differentiable leaf. `source`, when given, lets gradients be looked up
  /// by the parameter tensor they belong to.
  Var leaf(Tensor<T> value, const Tensor<T>* source = nullptr) {
    nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), {}, true, source});
    return Var{nodes_.size() - 1};
  }

  Var param(const Tensor<T>& p) { return leaf(p, &p); }

  Var constant(Tensor<T> value) {
    nodes_.push_back(Node{OpKind::constant, {}, std::move(value), {}, false, nullptr});
    return Var{nodes_.size() - 1};
  }

  Var record(OpKind kind, std::vector<Var> inputs, Tensor<T> value, Adjoint adjoint) {
    debug_check_finite(value);
    Node node{kind, {}, std::move(value), std::move(adjoint), false, nullptr};
    node.inputs.reserve(inputs.size());
    for (Var v : inputs) {
      if (v.id >= nodes_.size()) throw std::logic_error("tape: input does not precede node");
      node.inputs.push_back(v.id);
      node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const Node& node(Var v) const { return nodes_.at(v.id); }
  std::size_t size() const { return nodes_.size(); }

  /// Scales the output adjoint fed into every node of `kind` by `factor`.
  /// Used to confirm that gradient checks catch broken adjoint rules.
  void inject_adjoint_fault(OpKind kind, T factor) { fault_ = std::pair{kind, factor}; }

  Gradients<T> backward(Var loss) const;

 private:
  std::vector<Node> nodes_;
  std::optional<std::pair<OpKind, T>> fault_;
};

template <Scalar T>
class Gradients {
 public:
  struct Entry {
    Var var;
    const Tensor<T>* source;
    Tensor<T> grad;
  };

  /// Gradient for a leaf; zeros when the leaf is not connected to the loss.
  const Tensor<T>& of(Var v) const {
    for (const auto& e : leaves_) {
      if (e.var.id == v.id) return e.grad;
    }
    throw std::out_of_range("gradients: var " + std::to_string(v.id) + " is not a leaf");
  }

  /// Gradient for a parameter tensor, summed over every leaf read from it.
  Tensor<T> of(const Tensor<T>& param) const {
    std::optional<Tensor<T>> acc;
    for (const auto& e : leaves_) {
      if (e.source != &param) continue;
      if (!acc) acc = e.grad;
      else
        for (std::size_t i = 0; i < acc->numel(); ++i) (*acc)[i] += e.grad[i];
    }
    if (!acc) throw std::out_of_range("gradients: parameter was not read on this tape");
    return *acc;
  }

  const std::vector<Entry>& leaves() const { return leaves_; }

 private:
  friend class Tape<T>;
  std::vector<Entry> leaves_;
};

template <Scalar T>
Gradients<T> Tape<T>::backward(Var loss) const {
  if (loss.id >= nodes_.size()) throw std::out_of_range("backward: unknown loss node");
  if (nodes_[loss.id].value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + nodes_[loss.id].value.shape().str());
  }
  std::vector<std::optional<Tensor<T>>> grads(loss.id + 1);
  grads[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T{1});

  std::vector<Tensor<T>*> slots;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!grads[id] || !node.requires_grad || node.kind == OpKind::leaf) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor<T>::zeros_like(nodes_[in].value);
      slots[k] = &*grads[in];
    }
    if (fault_ && fault_->first == node.kind) {
      node.adjoint(scale(*grads[id], fault_->second), slots);
    } else {
      node.adjoint(*grads[id], slots);
    }
    grads[id].reset();
  }

  Gradients<T> out;
  for (std::size_t id = 0; id <= loss.id; ++id) {
    const Node& node = nodes_[id];
    if (node.kind != OpKind::leaf) continue;
    out.leaves_.push_back({Var{id}, node.source, grads[id] ? *grads[id] : Tensor<T>::zeros_like(node.value)});
  }
  return out;
}

}  // namespace vrf
