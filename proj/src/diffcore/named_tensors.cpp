// SPDX-License-Identifier: Apache-2.0
#include "mtfl/named_tensors.hpp"

#include "mtfl/error.hpp"

namespace mtfl {

void NamedTensors::insert(std::string name, Matrix value) {
  if (index_.contains(name)) throw ValidationError("duplicate tensor name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool NamedTensors::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

const Matrix& NamedTensors::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("no tensor named '" + std::string(name) + "'");
  return tensors_[it->second];
}

Matrix& NamedTensors::at(std::string_view name) {
  return const_cast<Matrix&>(static_cast<const NamedTensors&>(*this).at(name));
}

std::size_t NamedTensors::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

NamedTensors NamedTensors::zeros_like() const {
  NamedTensors out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.insert(names_[i], Matrix(tensors_[i].rows(), tensors_[i].cols()));
  }
  return out;
}

bool NamedTensors::same_layout(const NamedTensors& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
  }
  return true;
}

}  // namespace mtfl
