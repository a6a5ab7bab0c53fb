// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtfl/matrix.hpp"

namespace mtfl {

// Ordered name -> matrix table. Used for model parameters, their gradients
// and optimizer moments; insertion order is the serialization order.
class NamedTensors {
 public:
  void insert(std::string name, Matrix value);

  bool contains(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& tensor(std::size_t i) const { return tensors_[i]; }
  Matrix& tensor(std::size_t i) { return tensors_[i]; }

  // Total number of scalar entries.
  std::size_t element_count() const noexcept;
  NamedTensors zeros_like() const;
  bool same_layout(const NamedTensors& other) const;

  friend bool operator==(const NamedTensors& a, const NamedTensors& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mtfl
