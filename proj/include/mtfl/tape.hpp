// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a linear tape of matrix-valued primitives.
//
// Every primitive appends one entry holding its output value, its input node
// ids and a backward rule. Inputs always precede their consumers, so a single
// reverse sweep visits each entry once. backward() keeps its accumulators
// local, which leaves the tape untouched and makes repeated calls identical.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtfl/matrix.hpp"
#include "mtfl/named_tensors.hpp"

namespace mtfl {

class Tape;

// Handle to a tape node. Cheap to copy; valid as long as its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,
  kSub,
  kHadamard,
  kAddRow,
  kScale,
  kAddScalar,
  kSigmoid,
  kRelu,
  kAbs,
  kSquare,
  kLog,
  kClamp,
  kSoftmaxRows,
  kTranspose,
  kSliceRows,
  kSliceCols,
  kConcatCols,
  kConv1dDepthwise,
  kReduce,
  kRowNorms,
  kTopkMean,
};

// What a backward rule sees for one entry. input_grads[i] is null when input
// i does not lead back to a parameter.
struct BackwardArgs {
  const Matrix& grad;
  const Matrix& output;
  std::span<const Matrix* const> inputs;
  std::span<Matrix* const> input_grads;
};

using BackwardRule = std::function<void(const BackwardArgs&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient backward() reports under `name`.
  Var parameter(std::string name, Matrix value);

  Var record(OpKind kind, Matrix value, std::vector<std::size_t> inputs, BackwardRule rule);

  // Gradients of the scalar `loss` for every parameter leaf on this tape, in
  // registration order. Parameters that do not reach the loss get zeros.
  NamedTensors backward(Var loss) const;

  const Matrix& value(std::size_t id) const { return entries_.at(id).value; }
  OpKind kind(std::size_t id) const { return entries_.at(id).kind; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    OpKind kind;
    Matrix value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool needs_grad = false;
  };

  std::vector<Entry> entries_;
  std::vector<std::pair<std::string, std::size_t>> parameters_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

}  // namespace mtfl
