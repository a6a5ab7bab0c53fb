// SPDX-License-Identifier: Apache-2.0
#include "mtfl/tape.hpp"

#include <optional>

#include "mtfl/error.hpp"

namespace mtfl {

Var Tape::constant(Matrix value) {
  entries_.push_back(Entry{OpKind::kConstant, std::move(value), {}, {}, false});
  return Var(this, entries_.size() - 1);
}

Var Tape::parameter(std::string name, Matrix value) {
  for (const auto& [existing, id] : parameters_) {
    if (existing == name) throw ValidationError("parameter '" + name + "' bound twice on one tape");
  }
  entries_.push_back(Entry{OpKind::kParameter, std::move(value), {}, {}, true});
  parameters_.emplace_back(std::move(name), entries_.size() - 1);
  return Var(this, entries_.size() - 1);
}

Var Tape::record(OpKind kind, Matrix value, std::vector<std::size_t> inputs, BackwardRule rule) {
  bool needs_grad = false;
  for (std::size_t in : inputs) {
    if (in >= entries_.size()) throw std::logic_error("tape input recorded out of order");
    needs_grad = needs_grad || entries_[in].needs_grad;
  }
  entries_.push_back(Entry{kind, std::move(value), std::move(inputs), std::move(rule), needs_grad});
  return Var(this, entries_.size() - 1);
}

NamedTensors Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw std::logic_error("backward: loss node belongs to another tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_of(lv));
  }

  std::vector<std::optional<Matrix>> grads(entries_.size());
  grads[loss.id()] = Matrix::scalar(1.0);

  std::vector<const Matrix*> in_values;
  std::vector<Matrix*> in_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Entry& e = entries_[i];
    if (!grads[i] || !e.needs_grad || !e.rule) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : e.inputs) {
      in_values.push_back(&entries_[in].value);
      if (entries_[in].needs_grad) {
        if (!grads[in]) grads[in].emplace(entries_[in].value.rows(), entries_[in].value.cols());
        in_grads.push_back(&*grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    e.rule(BackwardArgs{*grads[i], e.value, in_values, in_grads});
    if (i != loss.id()) grads[i].reset();
  }

  NamedTensors out;
  for (const auto& [name, id] : parameters_) {
    const Matrix& v = entries_[id].value;
    out.insert(name, grads[id] ? *grads[id] : Matrix(v.rows(), v.cols()));
  }
  return out;
}

}  // namespace mtfl
