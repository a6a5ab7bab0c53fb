// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mtfl/named_tensors.hpp"
#include "mtfl/tape.hpp"

namespace mtfl {

struct GradReport {
  double max_relative_error = 0.0;
  // "<tensor>[row,col]" of the worst coordinate, empty when nothing was checked.
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool pass = true;
};

// Builds a scalar loss on `tape`, binding every entry of `params` with
// Tape::parameter under its own name.
using LossBuilder = std::function<Var(Tape& tape, const NamedTensors& params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Above this many coordinates a seeded random subsample is checked instead.
  std::size_t full_check_limit = 10000;
  std::size_t subsample = 400;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients against central differences
//   (f(p + eps) - f(p - eps)) / (2 eps)
// with relative error |a - n| / max(|a|, |n|, 1e-8).
// Throws ValidationError when two builds at the same point disagree.
GradReport finite_diff_check(const LossBuilder& build, const NamedTensors& params,
                             const GradCheckOptions& options = {});

}  // namespace mtfl
