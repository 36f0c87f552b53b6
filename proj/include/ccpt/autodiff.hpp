#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "ccpt/tensor.hpp"

namespace ccpt {

enum class OpKind {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Subtract,
  Mul,
  ScalarMul,
  AddRowBroadcast,
  DivByScalar,
  Tanh,
  Relu,
  Log,
  Exp,
  L2NormalizeRows,
  RowSoftmax,
  RowLogSoftmax,
  Diagonal,
  Sum,
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  /// Accumulated gradient; empty until backward reaches this node.
  const Tensor& grad() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of a forward computation. Node ids are assigned in
/// creation order, which is a topological order, so backward is a single
/// reverse sweep.
class Tape {
 public:
  /// Receives the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node that
  /// requires a gradient. The loss must be 1x1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  OpKind op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `contribution` into the gradient accumulator of node `id`.
  void accumulate(std::size_t id, const Tensor& contribution);

  Var record(OpKind op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// Differentiable operations. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
Var scalar_mul(Var a, double c);
/// x[n x m] + bias[1 x m] added to every row.
Var add_row_broadcast(Var x, Var bias);
/// x / s where s is 1x1.
Var div_by_scalar(Var x, Var s);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);
Var exp(Var a);
Var l2_normalize_rows(Var x);
Var row_softmax(Var x, double temperature);
Var row_log_softmax(Var x);
/// Diagonal of a square matrix as an n x 1 column.
Var diagonal(Var x);
Var sum(Var a);
Var mean(Var a);

inline constexpr double kNormEpsilon = 1e-12;

}  // namespace ccpt
