#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "tfz/numerics/tensor.hpp"

namespace tfz {

class Tape;
class GradBuffer;
class Gradients;

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  Tape* tape = nullptr;
  std::size_t id = kNone;

  bool valid() const noexcept { return tape != nullptr && id != kNone; }
  const Tensor& value() const;
  const Shape& shape() const;
};

Gradients backward(const Tape& tape, Var loss);

/// Receives the upstream gradient of one node and pushes gradients into its inputs.
using BackwardFn = std::function<void(const Tensor& grad_out, GradBuffer& grads)>;

/// Records operations in execution order. Nodes only ever reference earlier
/// nodes, so the recording order is already topological.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an operation node. The backward closure is kept only when at
  /// least one input requires a gradient.
  Var record(std::string_view kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string_view kind, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::string_view kind(Var v) const { return nodes_.at(v.id).kind; }
  const std::vector<std::size_t>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, Var loss);

  struct Node {
    std::string_view kind;
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  // deque: values stay addressable while later nodes are appended.
  std::deque<Node> nodes_;
};

/// Gradient accumulator used while walking the tape backwards.
class GradBuffer {
 public:
  explicit GradBuffer(const Tape& tape);

  /// False when `v` does not need a gradient; callers may skip the work.
  bool wants(Var v) const { return tape_.requires_grad(v); }
  void accumulate(Var v, const Tensor& grad);
  void accumulate(Var v, Tensor&& grad);

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  friend class Gradients;

  const Tape& tape_;
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

class Gradients {
 public:
  /// Gradient of the loss w.r.t. `v`; zeros when `v` is not on a path to the loss.
  Tensor operator[](Var v) const;
  bool reached(Var v) const { return present_.at(v.id); }

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  Gradients(const Tape& tape, std::vector<Tensor> grads, std::vector<bool> present)
      : tape_(&tape), grads_(std::move(grads)), present_(std::move(present)) {}

  const Tape* tape_;
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

/// Reverse sweep from a scalar loss; visits each node at most once.
Gradients backward(const Tape& tape, Var loss);

}  // namespace tfz
