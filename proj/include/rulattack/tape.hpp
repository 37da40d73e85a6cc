#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rulattack/tensor.hpp"

namespace rulattack {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Views handed to a node's backward function. Input gradients are null
/// for operands that do not require a gradient.
struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> input_grads;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Single-owner recording of primitive operations in execution order.
/// Node ids are positions on the tape, so the order is topological.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that participates in differentiation.
  Var variable(Tensor value);
  /// Leaf treated as a constant.
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Reverse-mode gradients of a scalar loss with respect to `wrt`,
  /// returned in the same order.
  std::vector<Tensor> gradients(Var loss, std::span<const Var> wrt) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

std::vector<Tensor> grad(const Tape& tape, Var loss, std::span<const Var> wrt);

// Primitives. All check operand shapes and throw ShapeMismatch naming both
// shapes; results are checked for non-finite values.

/// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
/// [m,k] x [n,k]^T -> [m,n]; weights stored as (out, in).
Var matmul_nt(Var a, Var b);
/// Elementwise sum of equal shapes, or a bias vector [n] broadcast over
/// the last axis of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// 1 - a
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Concatenation along the last axis.
Var concat(std::span<const Var> parts);
Var concat(Var a, Var b);
/// Half-open range [begin, end) along `axis`; the axis is kept.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
/// x[:, t, :] of a rank-3 tensor, giving rank 2.
Var timestep(Var a, std::size_t t);
Var reshape(Var a, Shape shape);
/// Channel-last 1-D convolution (cross-correlation), stride 1.
/// input [B,T,Cin], kernel [Cout,K,Cin], bias [Cout] -> [B,T',Cout].
/// With same_padding the output length equals T and the input is
/// zero-padded by (K-1)/2 on the left.
Var conv1d(Var input, Var kernel, Var bias, bool same_padding = true);
/// Sum of all entries -> [1]
Var sum(Var a);
/// mean((pred - target)^2) -> [1]
Var mean_squared_error(Var pred, Var target);
/// sum((pred - target)^2) -> [1]
Var sum_squared_error(Var pred, Var target);

}  // namespace rulattack
