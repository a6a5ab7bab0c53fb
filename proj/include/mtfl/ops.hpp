// SPDX-License-Identifier: Apache-2.0
//
// Recorded primitives. Each returns a new node on the tape of its first
// argument and registers the matching backward rule.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mtfl/matrix.hpp"
#include "mtfl/tape.hpp"

namespace mtfl {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
// x (m x n) + row (1 x n) broadcast over rows.
Var add_row(Var x, Var row);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);

Var sigmoid(Var x);
Var relu(Var x);
Var abs(Var x);
Var square(Var x);
Var log(Var x);
// Values clamped into [lo, hi]; the gradient is zero where clamping applied.
Var clamp(Var x, double lo, double hi);

Var softmax_rows(Var x);
Var transpose(Var x);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);

// Depthwise 3-tap temporal convolution along rows with "same" zero padding:
//   out[t][d] = bias[d] + sum_{j in -1,0,1} weight[d][j+1] * x[t + j*dilation][d]
// weight is D x 3, bias is 1 x D.
Var conv1d_depthwise(Var x, Var weight, Var bias, std::size_t dilation);

enum class ReduceAxis {
  kPerRow,  // one value per row: m x 1
  kPerCol,  // one value per column: 1 x n
  kAll,     // 1 x 1
};
enum class ReduceMode { kSum, kMean };

Var reduce(Var x, ReduceAxis axis, ReduceMode mode);
inline Var sum_all(Var x) { return reduce(x, ReduceAxis::kAll, ReduceMode::kSum); }
inline Var mean_all(Var x) { return reduce(x, ReduceAxis::kAll, ReduceMode::kMean); }

// Euclidean norm of each row: m x n -> m x 1. The gradient of a zero row is 0.
Var row_norms(Var x);

// Indices of the k largest entries, ties resolved toward the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k);

// Mean of the k largest entries of a vector-shaped node (m x 1 or 1 x n).
// Only the selected entries receive gradient, 1/k each.
Var topk_mean(Var v, std::size_t k, std::vector<std::size_t>* selected = nullptr);

// Plain kernels shared with tests and inference paths.
Matrix conv1d_depthwise(const Matrix& x, const Matrix& weight, const Matrix& bias,
                        std::size_t dilation);
double sigmoid(double x);

}  // namespace mtfl
