#include "tfz/numerics/tape.hpp"

#include "tfz/errors.hpp"

namespace tfz {

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{"leaf", std::move(value), requires_grad, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(kind, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(std::string_view kind, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
#ifndef NDEBUG
  if (!value.all_finite()) throw Error(ErrorKind::DivergedLoss, "non-finite output from " + std::string(kind));
#endif
  Node node{kind, std::move(value), false, {}, {}};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape != this) throw Error(ErrorKind::InvalidArgument, "operand recorded on a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

GradBuffer::GradBuffer(const Tape& tape) : tape_(tape), grads_(tape.size()), present_(tape.size(), false) {}

void GradBuffer::accumulate(Var v, const Tensor& grad) {
  if (!wants(v)) return;
  if (!present_[v.id]) {
    grads_[v.id] = grad;
    present_[v.id] = true;
    return;
  }
  Tensor& acc = grads_[v.id];
  if (acc.shape() != grad.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient " + shape_str(grad.shape()) + " for value " + shape_str(acc.shape()));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
}

void GradBuffer::accumulate(Var v, Tensor&& grad) {
  if (!wants(v)) return;
  if (!present_[v.id]) {
    grads_[v.id] = std::move(grad);
    present_[v.id] = true;
    return;
  }
  accumulate(v, static_cast<const Tensor&>(grad));
}

Tensor Gradients::operator[](Var v) const {
  if (v.id < present_.size() && present_[v.id]) return grads_[v.id];
  return Tensor::zeros(tape_->value(v).shape());
}

Gradients backward(const Tape& tape, Var loss) {
  const Tensor& lv = tape.value(loss);
  if (lv.size() != 1) throw Error(ErrorKind::NotScalarLoss, "loss has shape " + shape_str(lv.shape()));

  GradBuffer buf(tape);
  if (tape.requires_grad(loss)) {
    buf.grads_[loss.id] = Tensor::full(lv.shape(), 1.0);
    buf.present_[loss.id] = true;
  }
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!buf.present_[id]) continue;
    const auto& node = tape.nodes_[id];
    if (!node.backward) continue;
    node.backward(buf.grads_[id], buf);
    // Interior gradients are no longer needed once propagated; leaves are kept.
    if (!node.inputs.empty()) {
      buf.grads_[id] = Tensor();
      buf.present_[id] = false;
    }
  }
  return Gradients(tape, std::move(buf.grads_), std::move(buf.present_));
}

}  // namespace tfz
