// SPDX-License-Identifier: Apache-2.0
#include "mtfl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mtfl/error.hpp"

namespace mtfl {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": nodes on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                     shape_of(b.value()));
  }
}

// Unary elementwise op whose derivative depends on input and output values.
template <typename Fwd, typename Deriv>
Var unary(Var x, OpKind kind, Fwd fwd, Deriv deriv) {
  Matrix out = x.value();
  for (auto& v : out.values()) v = fwd(v);
  return x.tape().record(kind, std::move(out), {x.id()}, [deriv](const BackwardArgs& a) {
    if (Matrix* gx = a.input_grads[0]) {
      const Matrix& in = *a.inputs[0];
      for (std::size_t i = 0; i < in.size(); ++i) {
        (*gx)[i] += a.grad[i] * deriv(in[i], a.output[i]);
      }
    }
  });
}

}  // namespace

// Kept strictly inside (0, 1) even where the exact value rounds to 0 or 1.
double sigmoid(double x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, lo, hi);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Matrix out = matmul(a.value(), b.value());
  return a.tape().record(OpKind::kMatmul, std::move(out), {a.id(), b.id()},
                         [](const BackwardArgs& g) {
                           if (Matrix* ga = g.input_grads[0]) add_into(*ga, matmul_nt(g.grad, *g.inputs[1]));
                           if (Matrix* gb = g.input_grads[1]) add_into(*gb, matmul_tn(*g.inputs[0], g.grad));
                         });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  return a.tape().record(OpKind::kAdd, add(a.value(), b.value()), {a.id(), b.id()},
                         [](const BackwardArgs& g) {
                           for (Matrix* gi : g.input_grads)
                             if (gi) add_into(*gi, g.grad);
                         });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  return a.tape().record(OpKind::kSub, sub(a.value(), b.value()), {a.id(), b.id()},
                         [](const BackwardArgs& g) {
                           if (Matrix* ga = g.input_grads[0]) add_into(*ga, g.grad);
                           if (Matrix* gb = g.input_grads[1]) axpy_into(*gb, -1.0, g.grad);
                         });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a, b, "hadamard");
  return a.tape().record(OpKind::kHadamard, hadamard(a.value(), b.value()), {a.id(), b.id()},
                         [](const BackwardArgs& g) {
                           if (Matrix* ga = g.input_grads[0]) add_into(*ga, hadamard(g.grad, *g.inputs[1]));
                           if (Matrix* gb = g.input_grads[1]) add_into(*gb, hadamard(g.grad, *g.inputs[0]));
                         });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row, "add_row");
  const Matrix& xv = x.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_row: cannot broadcast " + shape_of(rv) + " over " + shape_of(xv));
  }
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv[j];
  }
  return x.tape().record(OpKind::kAddRow, std::move(out), {x.id(), row.id()},
                         [](const BackwardArgs& g) {
                           if (Matrix* gx = g.input_grads[0]) add_into(*gx, g.grad);
                           if (Matrix* gr = g.input_grads[1]) {
                             for (std::size_t i = 0; i < g.grad.rows(); ++i) {
                               const auto r = g.grad.row(i);
                               for (std::size_t j = 0; j < r.size(); ++j) (*gr)[j] += r[j];
                             }
                           }
                         });
}

Var scale(Var x, double s) {
  return x.tape().record(OpKind::kScale, scale(x.value(), s), {x.id()},
                         [s](const BackwardArgs& g) {
                           if (Matrix* gx = g.input_grads[0]) axpy_into(*gx, s, g.grad);
                         });
}

Var add_scalar(Var x, double s) {
  Matrix out = x.value();
  for (auto& v : out.values()) v += s;
  return x.tape().record(OpKind::kAddScalar, std::move(out), {x.id()}, [](const BackwardArgs& g) {
    if (Matrix* gx = g.input_grads[0]) add_into(*gx, g.grad);
  });
}

Var sigmoid(Var x) {
  return unary(
      x, OpKind::kSigmoid, [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(
      x, OpKind::kRelu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var x) {
  return unary(
      x, OpKind::kAbs, [](double v) { return std::fabs(v); },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary(
      x, OpKind::kSquare, [](double v) { return v * v; },
      [](double in, double) { return 2.0 * in; });
}

Var log(Var x) {
  return unary(
      x, OpKind::kLog, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, OpKind::kClamp, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var x) {
  return x.tape().record(OpKind::kSoftmaxRows, softmax_rows(x.value()), {x.id()},
                         [](const BackwardArgs& g) {
                           Matrix* gx = g.input_grads[0];
                           if (!gx) return;
                           const Matrix& y = g.output;
                           for (std::size_t i = 0; i < y.rows(); ++i) {
                             const auto yr = y.row(i);
                             const auto gr = g.grad.row(i);
                             double dot = 0.0;
                             for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
                             auto out = gx->row(i);
                             for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot);
                           }
                         });
}

Var transpose(Var x) {
  return x.tape().record(OpKind::kTranspose, transpose(x.value()), {x.id()},
                         [](const BackwardArgs& g) {
                           if (Matrix* gx = g.input_grads[0]) add_into(*gx, transpose(g.grad));
                         });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = x.value();
  if (begin + count > xv.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_of(xv));
  }
  Matrix out(count, xv.cols());
  for (std::size_t i = 0; i < count; ++i) std::ranges::copy(xv.row(begin + i), out.row(i).begin());
  return x.tape().record(OpKind::kSliceRows, std::move(out), {x.id()},
                         [begin, count](const BackwardArgs& g) {
                           Matrix* gx = g.input_grads[0];
                           if (!gx) return;
                           for (std::size_t i = 0; i < count; ++i) {
                             auto dst = gx->row(begin + i);
                             const auto src = g.grad.row(i);
                             for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                           }
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = x.value();
  if (begin + count > xv.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_of(xv));
  }
  Matrix out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, begin + j);
  return x.tape().record(OpKind::kSliceCols, std::move(out), {x.id()},
                         [begin, count](const BackwardArgs& g) {
                           Matrix* gx = g.input_grads[0];
                           if (!gx) return;
                           for (std::size_t i = 0; i < g.grad.rows(); ++i)
                             for (std::size_t j = 0; j < count; ++j) (*gx)(i, begin + j) += g.grad(i, j);
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row count mismatch " + shape_of(parts.front().value()) +
                       " vs " + shape_of(p.value()));
    }
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offsets[k] + j) = pv(i, j);
  }
  return parts.front().tape().record(
      OpKind::kConcatCols, std::move(out), std::move(ids), [offsets](const BackwardArgs& g) {
        for (std::size_t k = 0; k < g.inputs.size(); ++k) {
          Matrix* gk = g.input_grads[k];
          if (!gk) continue;
          for (std::size_t i = 0; i < gk->rows(); ++i)
            for (std::size_t j = 0; j < gk->cols(); ++j) (*gk)(i, j) += g.grad(i, offsets[k] + j);
        }
      });
}

Matrix conv1d_depthwise(const Matrix& x, const Matrix& weight, const Matrix& bias,
                        std::size_t dilation) {
  if (dilation == 0) throw ValidationError("conv1d_depthwise: dilation must be >= 1");
  if (x.rows() == 0) throw ShapeError("conv1d_depthwise: empty sequence");
  const std::size_t len = x.rows(), channels = x.cols();
  if (weight.rows() != channels || weight.cols() != 3) {
    throw ShapeError("conv1d_depthwise: kernel " + shape_of(weight) + " does not match input " +
                     shape_of(x) + " (expected " + std::to_string(channels) + "x3)");
  }
  if (bias.rows() != 1 || bias.cols() != channels) {
    throw ShapeError("conv1d_depthwise: bias " + shape_of(bias) + " does not match input " +
                     shape_of(x));
  }
  Matrix out(len, channels);
  const auto signed_len = static_cast<std::ptrdiff_t>(len);
  const auto step = static_cast<std::ptrdiff_t>(dilation);
  for (std::ptrdiff_t t = 0; t < signed_len; ++t) {
    auto o = out.row(static_cast<std::size_t>(t));
    for (std::size_t d = 0; d < channels; ++d) o[d] = bias[d];
    for (std::ptrdiff_t j = -1; j <= 1; ++j) {
      const std::ptrdiff_t src = t + j * step;
      if (src < 0 || src >= signed_len) continue;
      const auto in = x.row(static_cast<std::size_t>(src));
      for (std::size_t d = 0; d < channels; ++d) o[d] += weight(d, static_cast<std::size_t>(j + 1)) * in[d];
    }
  }
  return out;
}

Var conv1d_depthwise(Var x, Var weight, Var bias, std::size_t dilation) {
  require_same_tape(x, weight, "conv1d_depthwise");
  require_same_tape(x, bias, "conv1d_depthwise");
  Matrix out = conv1d_depthwise(x.value(), weight.value(), bias.value(), dilation);
  return x.tape().record(
      OpKind::kConv1dDepthwise, std::move(out), {x.id(), weight.id(), bias.id()},
      [dilation](const BackwardArgs& g) {
        const Matrix& xv = *g.inputs[0];
        const Matrix& wv = *g.inputs[1];
        Matrix* gx = g.input_grads[0];
        Matrix* gw = g.input_grads[1];
        Matrix* gb = g.input_grads[2];
        const auto len = static_cast<std::ptrdiff_t>(xv.rows());
        const auto step = static_cast<std::ptrdiff_t>(dilation);
        const std::size_t channels = xv.cols();
        for (std::ptrdiff_t t = 0; t < len; ++t) {
          const auto go = g.grad.row(static_cast<std::size_t>(t));
          if (gb)
            for (std::size_t d = 0; d < channels; ++d) (*gb)[d] += go[d];
          for (std::ptrdiff_t j = -1; j <= 1; ++j) {
            const std::ptrdiff_t src = t + j * step;
            if (src < 0 || src >= len) continue;
            const auto tap = static_cast<std::size_t>(j + 1);
            const auto s = static_cast<std::size_t>(src);
            for (std::size_t d = 0; d < channels; ++d) {
              if (gx) (*gx)(s, d) += wv(d, tap) * go[d];
              if (gw) (*gw)(d, tap) += go[d] * xv(s, d);
            }
          }
        }
      });
}

Var reduce(Var x, ReduceAxis axis, ReduceMode mode) {
  const Matrix& xv = x.value();
  Matrix out;
  double divisor = 1.0;
  switch (axis) {
    case ReduceAxis::kPerRow:
      out = Matrix(xv.rows(), 1);
      for (std::size_t i = 0; i < xv.rows(); ++i)
        for (double v : xv.row(i)) out[i] += v;
      divisor = static_cast<double>(xv.cols());
      break;
    case ReduceAxis::kPerCol:
      out = Matrix(1, xv.cols());
      for (std::size_t i = 0; i < xv.rows(); ++i)
        for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
      divisor = static_cast<double>(xv.rows());
      break;
    case ReduceAxis::kAll:
      out = Matrix::scalar(sum(xv));
      divisor = static_cast<double>(xv.size());
      break;
  }
  const double factor = mode == ReduceMode::kMean ? 1.0 / divisor : 1.0;
  if (mode == ReduceMode::kMean) {
    for (auto& v : out.values()) v /= divisor;
  }
  return x.tape().record(OpKind::kReduce, std::move(out), {x.id()},
                         [axis, factor](const BackwardArgs& g) {
                           Matrix* gx = g.input_grads[0];
                           if (!gx) return;
                           for (std::size_t i = 0; i < gx->rows(); ++i) {
                             for (std::size_t j = 0; j < gx->cols(); ++j) {
                               const double up = axis == ReduceAxis::kPerRow   ? g.grad[i]
                                                 : axis == ReduceAxis::kPerCol ? g.grad[j]
                                                                               : g.grad[0];
                               (*gx)(i, j) += factor * up;
                             }
                           }
                         });
}

Var row_norms(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double ss = 0.0;
    for (double v : xv.row(i)) ss += v * v;
    out[i] = std::sqrt(ss);
  }
  return x.tape().record(OpKind::kRowNorms, std::move(out), {x.id()}, [](const BackwardArgs& g) {
    Matrix* gx = g.input_grads[0];
    if (!gx) return;
    const Matrix& xv = *g.inputs[0];
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      const double norm = g.output[i];
      if (norm == 0.0) continue;
      const double f = g.grad[i] / norm;
      const auto in = xv.row(i);
      auto dst = gx->row(i);
      for (std::size_t j = 0; j < in.size(); ++j) dst[j] += f * in[j];
    }
  });
}

std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size()) {
    throw ValidationError("top-k: k=" + std::to_string(k) + " out of range [1, " +
                          std::to_string(v.size()) + "]");
  }
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  order.resize(k);
  return order;
}

Var topk_mean(Var v, std::size_t k, std::vector<std::size_t>* selected) {
  const Matrix& vv = v.value();
  if (vv.rows() != 1 && vv.cols() != 1) {
    throw ShapeError("topk_mean: expected a vector, got " + shape_of(vv));
  }
  auto idx = topk_indices(vv.values(), k);
  double total = 0.0;
  for (std::size_t i : idx) total += vv[i];
  if (selected) *selected = idx;
  const double inv_k = 1.0 / static_cast<double>(k);
  return v.tape().record(OpKind::kTopkMean, Matrix::scalar(total / static_cast<double>(k)), {v.id()},
                         [idx = std::move(idx), inv_k](const BackwardArgs& g) {
                           Matrix* gv = g.input_grads[0];
                           if (!gv) return;
                           for (std::size_t i : idx) (*gv)[i] += g.grad[0] * inv_k;
                         });
}

}  // namespace mtfl
