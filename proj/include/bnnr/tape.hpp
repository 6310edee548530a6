#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bnnr/tensor.hpp"

namespace bnnr {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Records values and backward rules in creation order. Inputs of a node
// always have smaller ids than the node, so reverse id order is a valid
// topological order for backpropagation. A tape supports a single backward.
class Tape {
 public:
  // Receives the gradient flowing into a node's output and pushes
  // contributions to its inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an operation result. The backward rule is kept only when at
  // least one input requires a gradient.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  const std::string& op(Var v) const;

  // Backpropagates from a scalar node. Calling it twice is an error.
  void backward(Var loss);

  bool has_grad(Var v) const;
  // Throws when the node received no gradient (detached or not requiring one).
  const Tensor& grad(Var v) const;

  // Adds delta to the gradient buffer of v; ignored for nodes without requires_grad.
  void accumulate(Var v, const Tensor& delta);
  bool wants_grad(Var v) const { return requires_grad(v); }

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_nodes() const;
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<Tensor> grad;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace bnnr
