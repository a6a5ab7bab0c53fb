// SPDX-License-Identifier: Apache-2.0
#include "mtfl/model_gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "mtfl/error.hpp"
#include "mtfl/ops.hpp"

namespace mtfl {

namespace {

// Distance a relu input, top-k boundary or hinge argument must keep from its
// kink. Central differences straddling a kink measure a one-sided slope.
constexpr double kKinkMargin = 1e-3;
constexpr std::size_t kMaxDraws = 64;

struct Draw {
  ModelParams params;
  std::vector<MultiScaleFeatures> videos;
  std::vector<Label> labels;
};

Draw make_draw(const ModelConfig& config, std::size_t videos, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Draw d;
  d.params = init_params(config, seed + 1);
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    // Twice the init scale keeps gradients of the early layers well above
    // the finite-difference noise floor; nonzero biases exercise every path.
    if (is_bias(d.params.name(i))) {
      for (auto& v : d.params.tensor(i).values()) v = 0.1 * gauss(rng);
    } else {
      for (auto& v : d.params.tensor(i).values()) v *= 2.0;
    }
  }
  for (std::size_t i = 0; i < videos; ++i) {
    auto random_matrix = [&] {
      Matrix m(config.snippets, config.feature_dim);
      for (auto& v : m.values()) v = gauss(rng);
      return m;
    };
    d.videos.push_back({random_matrix(), random_matrix(), random_matrix()});
    d.labels.push_back(i % 2 == 0 ? Label::kAbnormal : Label::kNormal);
  }
  return d;
}

double topk_gap(std::vector<double> v, std::size_t k) {
  if (k >= v.size()) return std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end(), std::greater<>());
  return v[k - 1] - v[k];
}

double min_abs(const Matrix& m) {
  double out = std::numeric_limits<double>::infinity();
  for (double v : m.values()) out = std::min(out, std::abs(v));
  return out;
}

double kink_distance(const Draw& d, const ModelConfig& config, const LossWeights& weights) {
  double dist = std::numeric_limits<double>::infinity();
  std::vector<double> magnitude;
  for (const auto& v : d.videos) {
    Tape tape;
    BoundParams bound(tape, d.params);
    ForwardTrace trace;
    ForwardOutput out = forward(bind_features(tape, v), bound, config, Mode::kEval, 0, &trace);
    dist = std::min({dist, min_abs(trace.hidden1), min_abs(trace.hidden2)});
    const auto scores = out.scores.value().values();
    dist = std::min(dist, topk_gap({scores.begin(), scores.end()}, weights.k));
    const Matrix norms = row_norms(out.fused).value();
    const auto nv = norms.values();
    dist = std::min(dist, topk_gap({nv.begin(), nv.end()}, weights.k));
    magnitude.push_back(topk_mean(row_norms(out.fused), weights.k).value()(0, 0));
  }
  for (std::size_t i = 0; i + 1 < magnitude.size(); i += 2) {
    dist = std::min(dist, std::abs(weights.margin - magnitude[i] + magnitude[i + 1]));
  }
  return dist;
}

}  // namespace

ModelGradcheckSetup ModelGradcheckSetup::tiny() {
  ModelGradcheckSetup s;
  s.model.snippets = 8;
  s.model.feature_dim = 8;
  s.model.heads = 2;
  s.model.hidden1 = 6;
  s.model.hidden2 = 4;
  s.model.dropout = 0.0;
  s.loss.k = 2;
  s.loss.margin = 10.0;
  s.loss.lambda_fm = 0.1;
  s.loss.lambda_sparsity = 0.2;
  s.loss.lambda_smoothness = 0.3;
  return s;
}

GradReport check_model_gradients(const ModelGradcheckSetup& setup) {
  ModelConfig config = setup.model;
  config.validate();
  const LossWeights weights = setup.loss;
  weights.validate(config.snippets);

  // Redraw until the point sits away from every kink of the loss.
  Draw draw;
  bool found = false;
  for (std::size_t attempt = 0; attempt < kMaxDraws && !found; ++attempt) {
    draw = make_draw(config, 2 * setup.pairs, setup.seed + attempt * 0x9e3779b97f4a7c15ULL);
    found = kink_distance(draw, config, weights) >= kKinkMargin;
  }
  if (!found) throw ValidationError("gradcheck: no kink-free test point found");

  LossBuilder build = [&](Tape& tape, const NamedTensors& p) {
    BoundParams bound(tape, p);
    std::vector<ForwardOutput> outputs;
    for (const auto& v : draw.videos) {
      outputs.push_back(forward(bind_features(tape, v), bound, config, Mode::kEval, 0));
    }
    return total_loss(outputs, draw.labels, weights).total;
  };
  GradCheckOptions options = setup.options;
  options.seed = setup.seed;
  return finite_diff_check(build, draw.params, options);
}

}  // namespace mtfl
