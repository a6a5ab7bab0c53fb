// SPDX-License-Identifier: Apache-2.0
#include "mtfl/objective.hpp"

#include <string>
#include <vector>

#include "mtfl/error.hpp"
#include "mtfl/ops.hpp"

namespace mtfl {

void LossWeights::validate(std::size_t snippets) const {
  if (lambda_fm < 0.0 || lambda_sparsity < 0.0 || lambda_smoothness < 0.0 || margin < 0.0) {
    throw ValidationError("loss weights and margin must be nonnegative");
  }
  if (k < 1 || k > snippets) {
    throw ValidationError("top-k: k=" + std::to_string(k) + " must lie in [1, T=" +
                          std::to_string(snippets) + "]");
  }
}

Var video_bce(std::span<const Var> scores, std::span<const Label> labels, std::size_t k) {
  if (scores.empty()) throw ValidationError("video_bce: empty batch");
  if (scores.size() != labels.size()) {
    throw ValidationError("video_bce: " + std::to_string(scores.size()) + " score vectors but " +
                          std::to_string(labels.size()) + " labels");
  }
  Var total;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Var s = clamp(topk_mean(scores[i], k), kBceClamp, 1.0 - kBceClamp);
    Var term = labels[i] == Label::kAbnormal ? log(s) : log(add_scalar(scale(s, -1.0), 1.0));
    total = total.valid() ? add(total, term) : term;
  }
  return scale(total, -1.0 / static_cast<double>(scores.size()));
}

Var feature_magnitude_loss(std::span<const Var> abnormal_fused, std::span<const Var> normal_fused,
                           std::size_t k, double margin) {
  if (abnormal_fused.size() != normal_fused.size()) {
    throw ValidationError("feature_magnitude_loss: " + std::to_string(abnormal_fused.size()) +
                          " abnormal vs " + std::to_string(normal_fused.size()) +
                          " normal videos, pairs required");
  }
  if (abnormal_fused.empty()) throw ValidationError("feature_magnitude_loss: empty batch");
  Var total;
  for (std::size_t i = 0; i < abnormal_fused.size(); ++i) {
    Var pos = topk_mean(row_norms(abnormal_fused[i]), k);
    Var neg = topk_mean(row_norms(normal_fused[i]), k);
    Var hinge = relu(add_scalar(sub(neg, pos), margin));
    total = total.valid() ? add(total, hinge) : hinge;
  }
  return scale(total, 1.0 / static_cast<double>(abnormal_fused.size()));
}

TemporalTerms temporal_regularizers(Var scores) {
  const std::size_t len = scores.rows();
  if (scores.cols() != 1) {
    throw ShapeError("temporal_regularizers: expected a T x 1 score column, got " +
                     shape_of(scores.value()));
  }
  if (len < 2) throw ValidationError("temporal_regularizers: need T >= 2");
  Var sparsity = sum_all(abs(scores));
  Var diff = sub(slice_rows(scores, 1, len - 1), slice_rows(scores, 0, len - 1));
  return TemporalTerms{sparsity, sum_all(square(diff))};
}

LossBreakdown LossTerms::values() const {
  return LossBreakdown{bce.value()[0], fm.value()[0], sparsity.value()[0], smoothness.value()[0],
                       total.value()[0]};
}

LossTerms total_loss(std::span<const ForwardOutput> batch, std::span<const Label> labels,
                     const LossWeights& weights) {
  if (batch.size() != labels.size()) {
    throw ValidationError("total_loss: batch and label counts differ");
  }
  std::vector<Var> scores, abnormal_fused, normal_fused;
  std::vector<Var> sparsity_terms, smoothness_terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    scores.push_back(batch[i].scores);
    if (labels[i] == Label::kAbnormal) {
      abnormal_fused.push_back(batch[i].fused);
      auto reg = temporal_regularizers(batch[i].scores);
      sparsity_terms.push_back(reg.sparsity);
      smoothness_terms.push_back(reg.smoothness);
    } else {
      normal_fused.push_back(batch[i].fused);
    }
  }
  if (abnormal_fused.empty() || normal_fused.empty()) {
    throw ValidationError("total_loss: batch needs both normal and abnormal videos");
  }
  weights.validate(batch.front().scores.rows());

  auto mean_of = [](const std::vector<Var>& terms) {
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return scale(acc, 1.0 / static_cast<double>(terms.size()));
  };

  LossTerms t;
  t.bce = video_bce(scores, labels, weights.k);
  t.fm = feature_magnitude_loss(abnormal_fused, normal_fused, weights.k, weights.margin);
  t.sparsity = mean_of(sparsity_terms);
  t.smoothness = mean_of(smoothness_terms);
  t.total = add(add(add(t.bce, scale(t.fm, weights.lambda_fm)),
                    scale(t.sparsity, weights.lambda_sparsity)),
                scale(t.smoothness, weights.lambda_smoothness));
  return t;
}

}  // namespace mtfl
