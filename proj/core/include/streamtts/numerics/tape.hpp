#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "streamtts/numerics/tensor.hpp"

namespace streamtts::num {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the tape that created it.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, which
/// is a topological order of the computation; backward() walks it in reverse
/// and visits every node that lies on a path to the loss exactly once.
///
/// A tape is single-threaded. Independent tapes share nothing.
class Tape {
 public:
  /// Propagates the adjoint of node `self` into its parents.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Non-owning constant; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  Var variable(Tensor value);
  /// Non-owning leaf that receives a gradient; `value` must outlive the tape.
  Var variable_ref(const Tensor& value);

  /// Records an operation result. `backward` is dropped when no parent needs
  /// a gradient.
  Var record(Tensor value, std::vector<std::size_t> parents, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Accumulated adjoint of a node, or a zero tensor of matching shape when
  /// nothing reached it.
  Tensor grad(Var v) const;
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const Tensor& grad_ref(std::size_t id) const { return nodes_[id].grad; }
  /// Mutable adjoint buffer of a node, zero-allocated on first use.
  Tensor& grad_buffer(std::size_t id);

  /// Runs the reverse sweep from a scalar loss with adjoint 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  /// Number of nodes whose backward closure ran in the last backward().
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    std::vector<std::size_t> parents;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Operations. Binary operations require both operands on the same tape.

Var matmul(Var a, Var b);
/// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; `b` may be a single row broadcast over `a`.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var abs(Var a);
Var square(Var a);
/// Elementwise clamp; the gradient is zero where the input was clipped.
Var clamp(Var a, double lo, double hi);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Stable log-sum-exp of each row, producing an [m x 1] column.
Var logsumexp_rows(Var a);

/// Sum of every entry, as a 1x1 tensor.
Var sum(Var a);
Var mean(Var a);
/// Sum over columns of each row, producing [m x 1].
Var sum_cols(Var a);

Var transpose(Var a);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Row gather: out[k] = table[index[k]]. Gradients scatter-add.
Var gather_rows(Var table, std::span<const std::size_t> index);
/// Picks single entries, producing an [n x 1] column.
Var pick(Var a, std::span<const std::pair<std::size_t, std::size_t>> at);

/// Row-wise layer normalisation with learned gain and bias rows.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

}  // namespace streamtts::num
