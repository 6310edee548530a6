#include "bnnr/tape.hpp"

#include <algorithm>

namespace bnnr {

const Tensor& Var::value() const {
  if (tape == nullptr) throw TapeError("value() on an unbound Var");
  return tape->value(*this);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw TapeError("cannot record '" + op + "' on a tape that already ran backward");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw TapeError("input of '" + n.op + "' belongs to a different tape");
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw TapeError("Var does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size()) throw TapeError("Var does not belong to this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
const std::string& Tape::op(Var v) const { return node(v).op; }

std::size_t Tape::backward_nodes() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return static_cast<bool>(n.backward); }));
}

void Tape::backward(Var loss) {
  Node& root = node(loss);
  if (consumed_) throw TapeError("backward called twice on the same tape");
  if (root.value.size() != 1) {
    throw TapeError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  if (!root.requires_grad) throw TapeError("loss does not depend on any tensor requiring a gradient");
  consumed_ = true;
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    // Copy: the rule may append to other gradient buffers but never to its own.
    const Tensor out_grad = *n.grad;
    n.backward(*this, out_grad);
  }
}

bool Tape::has_grad(Var v) const { return node(v).grad.has_value(); }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad) {
    throw TapeError(n.requires_grad ? "node '" + n.op + "' is not connected to the loss"
                                    : "node '" + n.op + "' does not require a gradient");
  }
  return *n.grad;
}

void Tape::accumulate(Var v, const Tensor& delta) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (delta.shape() != n.value.shape()) {
    throw ShapeError("gradient shape " + shape_string(delta.shape()) + " does not match value shape " +
                     shape_string(n.value.shape()) + " for '" + n.op + "'");
  }
  if (!n.grad) {
    n.grad = delta;
    return;
  }
  auto dst = n.grad->data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace bnnr
