// SPDX-License-Identifier: Apache-2.0
//
// Weakly-supervised training objective:
//   total = bce + lambda_fm * fm + lambda_sparsity * sparsity + lambda_smoothness * smoothness
// bce is the video-level cross-entropy of the top-k mean snippet score, fm a
// hinge on top-k feature magnitudes of paired abnormal/normal videos, and the
// last two regularize the scores of abnormal videos only.
#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "mtfl/features.hpp"
#include "mtfl/model.hpp"
#include "mtfl/tape.hpp"

namespace mtfl {

struct LossWeights {
  double lambda_fm = 1e-4;
  double lambda_sparsity = 8e-5;
  double lambda_smoothness = 8e-5;
  double margin = 100.0;
  std::size_t k = 3;

  void validate(std::size_t snippets) const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double bce = 0.0;
  double fm = 0.0;
  double sparsity = 0.0;
  double smoothness = 0.0;
  double total = 0.0;

  // The composition total_loss uses, in the same evaluation order.
  static double compose(const LossWeights& w, double bce, double fm, double sparsity,
                        double smoothness) {
    return ((bce + w.lambda_fm * fm) + w.lambda_sparsity * sparsity) +
           w.lambda_smoothness * smoothness;
  }
};

inline constexpr double kBceClamp = 1e-7;

// Mean over videos of -[y ln s + (1-y) ln(1-s)], s = clamped top-k mean score.
Var video_bce(std::span<const Var> scores, std::span<const Label> labels, std::size_t k);

// Mean over pairs i of max(0, margin - M(abnormal_i) + M(normal_i)), where M
// is the top-k mean of the row norms of the fused features.
Var feature_magnitude_loss(std::span<const Var> abnormal_fused, std::span<const Var> normal_fused,
                           std::size_t k, double margin);

struct TemporalTerms {
  Var sparsity;    // sum_t |s_t|
  Var smoothness;  // sum_{t>=1} (s_t - s_{t-1})^2
};

TemporalTerms temporal_regularizers(Var scores);

struct LossTerms {
  Var bce, fm, sparsity, smoothness, total;
  LossBreakdown values() const;
};

// Abnormal and normal videos are paired in batch order. Throws
// ValidationError on a single-class or unbalanced batch.
LossTerms total_loss(std::span<const ForwardOutput> batch, std::span<const Label> labels,
                     const LossWeights& weights);

}  // namespace mtfl
