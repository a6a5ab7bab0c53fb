// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtfl/error.hpp"
#include "mtfl/matrix.hpp"

namespace mtfl {

enum class Label : int { kNormal = 0, kAbnormal = 1 };

// Snippet-level features of one video at the three tubelet lengths, each
// T x D. Rows are snippets in temporal order.
struct MultiScaleFeatures {
  Matrix short_scale;
  Matrix medium_scale;
  Matrix long_scale;

  std::size_t snippets() const noexcept { return short_scale.rows(); }
  std::size_t dim() const noexcept { return short_scale.cols(); }

  void validate() const {
    if (!short_scale.same_shape(medium_scale) || !short_scale.same_shape(long_scale)) {
      throw ShapeError("multi-scale features disagree in shape: short " + shape_of(short_scale) +
                       ", medium " + shape_of(medium_scale) + ", long " + shape_of(long_scale));
    }
    if (!short_scale.all_finite() || !medium_scale.all_finite() || !long_scale.all_finite()) {
      throw ValidationError("multi-scale features contain non-finite values");
    }
  }
};

}  // namespace mtfl
