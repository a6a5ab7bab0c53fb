// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mtfl/error.hpp"
#include "mtfl/gradcheck.hpp"
#include "mtfl/objective.hpp"
#include "mtfl/ops.hpp"
#include "support/support.hpp"

using namespace mtfl;
using mtfl::test::random_matrix;

namespace {

double topk_mean_oracle(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += v[i];
  return s / static_cast<double>(k);
}

std::vector<double> norms_oracle(const Matrix& x) {
  std::vector<double> out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v * v;
    out.push_back(std::sqrt(s));
  }
  return out;
}

Matrix uniform_column(std::size_t n, std::mt19937_64& rng, double lo = 0.05, double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(n, 1);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate(32));
  w.k = 33;
  CHECK_THROWS_AS(w.validate(32), ValidationError);
  w.k = 0;
  CHECK_THROWS_AS(w.validate(32), ValidationError);
  w = LossWeights{};
  w.lambda_fm = -1.0;
  CHECK_THROWS_AS(w.validate(32), ValidationError);
}

TEST_CASE("video bce matches the hand formula with a clamped top-k mean") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    std::vector<Var> scores;
    std::vector<Label> labels;
    double oracle = 0.0;
    for (int v = 0; v < 4; ++v) {
      const Matrix s = uniform_column(8, rng);
      scores.push_back(tape.constant(s));
      const Label y = v % 2 == 0 ? Label::kAbnormal : Label::kNormal;
      labels.push_back(y);
      const double m = topk_mean_oracle({s.values().begin(), s.values().end()}, 3);
      oracle += y == Label::kAbnormal ? -std::log(m) : -std::log(1.0 - m);
    }
    oracle /= 4.0;
    CHECK(video_bce(scores, labels, 3).value()(0, 0) == doctest::Approx(oracle).epsilon(1e-14));
  }
}

TEST_CASE("video bce stays finite for saturated scores") {
  Tape tape;
  const std::vector<Var> scores = {tape.constant(Matrix(4, 1, 1.0))};
  const std::vector<Label> labels = {Label::kNormal};
  const double v = video_bce(scores, labels, 2).value()(0, 0);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(kBceClamp)).epsilon(1e-9));
}

TEST_CASE("feature magnitude hinge matches sorted row norms") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    std::vector<Var> ab, no;
    double oracle = 0.0;
    const double margin = 1.0 + static_cast<double>(rng() % 6);
    for (int p = 0; p < 3; ++p) {
      const Matrix a = random_matrix(8, 4, rng), n = random_matrix(8, 4, rng);
      ab.push_back(tape.constant(a));
      no.push_back(tape.constant(n));
      oracle += std::max(0.0, margin - topk_mean_oracle(norms_oracle(a), 3) +
                                  topk_mean_oracle(norms_oracle(n), 3));
    }
    oracle /= 3.0;
    CHECK(feature_magnitude_loss(ab, no, 3, margin).value()(0, 0) ==
          doctest::Approx(oracle).epsilon(1e-13));
  }
}

TEST_CASE("feature magnitude gradient flows only through the selected rows") {
  Tape tape;
  Matrix a(4, 2);
  a(0, 0) = 3.0;
  a(1, 0) = 1.0;
  a(2, 1) = 4.0;
  a(3, 1) = 0.5;
  Var av = tape.parameter("a", a);
  Var nv = tape.parameter("n", Matrix(4, 2, 0.1));
  const std::vector<Var> ab = {av}, no = {nv};
  const NamedTensors g = tape.backward(feature_magnitude_loss(ab, no, 2, 100.0));
  // Rows 0 and 2 are the top-2 norms; each gets -1/k times its unit direction.
  CHECK(g.at("a")(0, 0) == doctest::Approx(-0.5));
  CHECK(g.at("a")(2, 1) == doctest::Approx(-0.5));
  CHECK(g.at("a")(1, 0) == 0.0);
  CHECK(g.at("a")(3, 1) == 0.0);
}

TEST_CASE("constant scores: smoothness 0, sparsity T*c") {
  Tape tape;
  const TemporalTerms t = temporal_regularizers(tape.constant(Matrix(32, 1, 0.5)));
  CHECK(t.smoothness.value()(0, 0) == 0.0);
  CHECK(t.sparsity.value()(0, 0) == 16.0);
}

TEST_CASE("temporal regularizers match direct sums") {
  std::mt19937_64 rng(3);
  Tape tape;
  const Matrix s = uniform_column(16, rng);
  const TemporalTerms t = temporal_regularizers(tape.constant(s));
  double sp = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < 16; ++i) sp += std::abs(s[i]);
  for (std::size_t i = 1; i < 16; ++i) sm += (s[i] - s[i - 1]) * (s[i] - s[i - 1]);
  CHECK(t.sparsity.value()(0, 0) == doctest::Approx(sp).epsilon(1e-14));
  CHECK(t.smoothness.value()(0, 0) == doctest::Approx(sm).epsilon(1e-14));
  CHECK_THROWS_AS(temporal_regularizers(tape.constant(Matrix(4, 2))), ShapeError);
}

TEST_CASE("total loss composes its terms exactly") {
  std::mt19937_64 rng(4);
  Tape tape;
  std::vector<ForwardOutput> batch;
  std::vector<Label> labels;
  for (int v = 0; v < 4; ++v) {
    batch.push_back({tape.constant(random_matrix(8, 4, rng)), tape.constant(uniform_column(8, rng))});
    labels.push_back(v < 2 ? Label::kAbnormal : Label::kNormal);
  }
  LossWeights w;
  w.k = 2;
  w.margin = 5.0;
  const LossBreakdown b = total_loss(batch, labels, w).values();
  CHECK(b.total == LossBreakdown::compose(w, b.bce, b.fm, b.sparsity, b.smoothness));

  // Regularizers average over abnormal videos only.
  double sp = 0.0;
  for (int v = 0; v < 2; ++v)
    for (double s : batch[v].scores.value().values()) sp += s;
  CHECK(b.sparsity == doctest::Approx(sp / 2.0).epsilon(1e-14));

  w.lambda_fm = w.lambda_sparsity = w.lambda_smoothness = 0.0;
  const LossBreakdown z = total_loss(batch, labels, w).values();
  CHECK(z.total == z.bce);
}

TEST_CASE("total loss rejects single-class and unbalanced batches") {
  std::mt19937_64 rng(5);
  Tape tape;
  auto out = [&] { return ForwardOutput{tape.constant(random_matrix(8, 4, rng)), tape.constant(uniform_column(8, rng))}; };
  const std::vector<ForwardOutput> two = {out(), out()};
  const std::vector<Label> same = {Label::kAbnormal, Label::kAbnormal};
  CHECK_THROWS_AS(total_loss(two, same, LossWeights{}), ValidationError);
  const std::vector<ForwardOutput> three = {out(), out(), out()};
  const std::vector<Label> uneven = {Label::kAbnormal, Label::kNormal, Label::kNormal};
  CHECK_THROWS_AS(total_loss(three, uneven, LossWeights{}), ValidationError);
  const std::vector<Label> short_labels = {Label::kAbnormal};
  CHECK_THROWS_AS(total_loss(two, short_labels, LossWeights{}), ValidationError);
}

TEST_CASE("each loss term passes gradcheck on its own") {
  std::mt19937_64 rng(6);
  NamedTensors p;
  p.insert("a_fused", random_matrix(8, 4, rng));
  p.insert("n_fused", random_matrix(8, 4, rng, 0.5));
  p.insert("a_logit", random_matrix(8, 1, rng));
  p.insert("n_logit", random_matrix(8, 1, rng));
  const std::vector<Label> labels = {Label::kAbnormal, Label::kNormal};

  auto check = [&](const std::function<Var(const LossTerms&)>& pick, LossWeights w) {
    LossBuilder build = [&](Tape& tape, const NamedTensors& q) {
      const std::vector<ForwardOutput> batch = {
          {tape.parameter("a_fused", q.at("a_fused")), sigmoid(tape.parameter("a_logit", q.at("a_logit")))},
          {tape.parameter("n_fused", q.at("n_fused")), sigmoid(tape.parameter("n_logit", q.at("n_logit")))}};
      return pick(total_loss(batch, labels, w));
    };
    const GradReport r = finite_diff_check(build, p, {.eps = 1e-5, .tol = 1e-4});
    INFO(r.worst_coordinate << " " << r.max_relative_error);
    CHECK(r.pass);
  };
  LossWeights w;
  w.k = 3;
  w.margin = 10.0;
  check([](const LossTerms& t) { return t.bce; }, w);
  check([](const LossTerms& t) { return t.fm; }, w);
  check([](const LossTerms& t) { return t.sparsity; }, w);
  check([](const LossTerms& t) { return t.smoothness; }, w);
  w.lambda_fm = 0.1;
  w.lambda_sparsity = 0.2;
  w.lambda_smoothness = 0.3;
  check([](const LossTerms& t) { return t.total; }, w);
}
