// SPDX-License-Identifier: Apache-2.0
#include "mtfl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "mtfl/error.hpp"

namespace mtfl {

namespace {

double evaluate(const LossBuilder& build, const NamedTensors& params) {
  Tape tape;
  Var loss = build(tape, params);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("gradcheck: loss must be scalar, got " + shape_of(loss.value()));
  }
  return loss.value()[0];
}

}  // namespace

GradReport finite_diff_check(const LossBuilder& build, const NamedTensors& params,
                             const GradCheckOptions& options) {
  NamedTensors analytic;
  double reference = 0.0;
  {
    Tape tape;
    Var loss = build(tape, params);
    analytic = tape.backward(loss);
    reference = loss.value()[0];
  }
  if (const double again = evaluate(build, params); again != reference) {
    throw ValidationError("gradcheck: loss builder is not deterministic (" +
                          std::to_string(reference) + " vs " + std::to_string(again) + ")");
  }

  // Flat (tensor, element) coordinate list.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t e = 0; e < params.tensor(t).size(); ++e) coords.emplace_back(t, e);
  if (coords.size() > options.full_check_limit) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::max<std::size_t>(options.subsample, 200));
    std::sort(coords.begin(), coords.end());
  }

  GradReport report;
  NamedTensors probe = params;
  for (const auto& [t, e] : coords) {
    if (!analytic.contains(params.name(t))) {
      throw ValidationError("gradcheck: builder did not bind parameter '" + params.name(t) + "'");
    }
    double& slot = probe.tensor(t)[e];
    const double original = slot;
    slot = original + options.eps;
    const double up = evaluate(build, probe);
    slot = original - options.eps;
    const double down = evaluate(build, probe);
    slot = original;

    const double numeric = (up - down) / (2.0 * options.eps);
    const double exact = analytic.at(params.name(t))[e];
    const double denom = std::max({std::fabs(exact), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(exact - numeric) / denom;
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || report.worst_coordinate.empty()) {
      const std::size_t cols = params.tensor(t).cols();
      report.max_relative_error = std::max(rel, report.max_relative_error);
      report.worst_coordinate = params.name(t) + "[" + std::to_string(e / cols) + "," +
                                std::to_string(e % cols) + "]";
      report.worst_analytic = exact;
      report.worst_numeric = numeric;
    }
  }
  report.pass = report.max_relative_error <= options.tol;
  return report;
}

}  // namespace mtfl
