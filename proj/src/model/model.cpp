// SPDX-License-Identifier: Apache-2.0
#include "mtfl/model.hpp"

#include <array>
#include <cmath>
#include <random>

#include "mtfl/error.hpp"
#include "mtfl/ops.hpp"

namespace mtfl {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("model config: " + why); };
  if (snippets < 2) fail("T must be >= 2");
  if (feature_dim < 2 || feature_dim % 2 != 0) {
    fail("D must be even and >= 2, got " + std::to_string(feature_dim));
  }
  if (heads == 0) fail("heads must be >= 1");
  if (feature_dim % heads != 0) {
    fail("D=" + std::to_string(feature_dim) + " not divisible by heads=" + std::to_string(heads));
  }
  if ((feature_dim / 2) % heads != 0) {
    fail("D/2=" + std::to_string(feature_dim / 2) + " not divisible by heads=" +
         std::to_string(heads));
  }
  if (hidden1 == 0 || hidden2 == 0) fail("classifier hidden sizes must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (dilations.long_medium == 0 || dilations.medium_short == 0 || dilations.short_long == 0) {
    fail("dilations must be >= 1");
  }
}

namespace {

constexpr std::array<std::string_view, 3> kPairNames = {"lm", "ms", "sl"};

void append_attention(std::vector<TensorShape>& out, const std::string& prefix, std::size_t dim) {
  out.push_back({prefix + ".query.weight", dim, dim});
  out.push_back({prefix + ".query.bias", 1, dim});
  out.push_back({prefix + ".key.weight", dim, dim});
  out.push_back({prefix + ".value.weight", dim, dim});
  out.push_back({prefix + ".value.bias", 1, dim});
  out.push_back({prefix + ".out.weight", dim, dim});
  out.push_back({prefix + ".out.bias", 1, dim});
}

void append_linear(std::vector<TensorShape>& out, const std::string& prefix, std::size_t in,
                   std::size_t outputs) {
  out.push_back({prefix + ".weight", in, outputs});
  out.push_back({prefix + ".bias", 1, outputs});
}

std::size_t attention_size(std::size_t dim) { return 4 * dim * dim + 3 * dim; }

Var linear(Var x, const BoundParams& params, const std::string& prefix) {
  return add_row(matmul(x, params[prefix + ".weight"]), params[prefix + ".bias"]);
}

Var mean_of_scales(const ScaleVars& s) {
  return scale(add(add(s.long_scale, s.medium_scale), s.short_scale), 1.0 / 3.0);
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double survivor_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (auto& v : mask.values()) v = keep(rng) ? survivor_scale : 0.0;
  return hadamard(x, x.tape().constant(std::move(mask)));
}

}  // namespace

std::vector<TensorShape> parameter_shapes(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.feature_dim;
  const std::size_t half = d / 2;
  const bool branches = !config.stages.all_disabled();
  std::vector<TensorShape> out;
  if (config.stages.pairwise) {
    for (auto pair : kPairNames) append_attention(out, "pfl." + std::string(pair), d);
  }
  if (config.stages.local) {
    for (auto pair : kPairNames) {
      out.push_back({"ltl.gate_" + std::string(pair) + ".weight", d, 3});
      out.push_back({"ltl.gate_" + std::string(pair) + ".bias", 1, d});
    }
  }
  if (branches) append_linear(out, "ltl.proj", d, half);
  if (branches) append_linear(out, "gtl.reduce", 3 * d, half);
  if (config.stages.global) append_attention(out, "gtl.attn", half);
  if (config.stages.fusion) append_linear(out, "ff.proj", d, d);
  append_linear(out, "classifier.fc1", d, config.hidden1);
  append_linear(out, "classifier.fc2", config.hidden1, config.hidden2);
  append_linear(out, "classifier.fc3", config.hidden2, 1);
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(config)) n += s.rows * s.cols;
  return n;
}

std::size_t stage_parameter_count(const ModelConfig& config, Stage stage) {
  const std::size_t d = config.feature_dim;
  switch (stage) {
    case Stage::kPairwise: return 3 * attention_size(d);
    case Stage::kLocal: return 3 * (3 * d + d);
    case Stage::kGlobal: return attention_size(d / 2);
    case Stage::kFusion: return d * d + d;
  }
  return 0;
}

bool is_bias(std::string_view name) { return name.ends_with(".bias"); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (const auto& shape : parameter_shapes(config)) {
    Matrix m(shape.rows, shape.cols);
    if (!is_bias(shape.name)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape.rows));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : m.values()) v = dist(rng);
    }
    params.insert(shape.name, std::move(m));
  }
  return params;
}

BoundParams::BoundParams(Tape& tape, const ModelParams& params) : tape_(&tape) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.emplace(params.name(i), tape.parameter(params.name(i), params.tensor(i)));
  }
}

Var BoundParams::operator[](std::string_view name) const {
  auto it = vars_.find(std::string(name));
  if (it == vars_.end()) {
    throw ValidationError("model parameter '" + std::string(name) + "' is missing");
  }
  return it->second;
}

bool BoundParams::contains(std::string_view name) const {
  return vars_.contains(std::string(name));
}

AttentionParams attention_params(const BoundParams& params, std::string_view prefix) {
  const std::string p(prefix);
  return AttentionParams{params[p + ".query.weight"], params[p + ".query.bias"],
                         params[p + ".key.weight"],   params[p + ".value.weight"],
                         params[p + ".value.bias"],   params[p + ".out.weight"],
                         params[p + ".out.bias"]};
}

Var cross_attention(Var query_source, Var kv_source, const AttentionParams& block,
                    std::size_t heads, ForwardTrace* trace) {
  const std::size_t dim = query_source.cols();
  if (kv_source.cols() != dim) {
    throw ShapeError("cross_attention: query source " + shape_of(query_source.value()) +
                     " and key/value source " + shape_of(kv_source.value()) + " differ in width");
  }
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("cross_attention: width " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var q = add_row(matmul(query_source, block.query_weight), block.query_bias);
  Var k = matmul(kv_source, block.key_weight);
  Var v = add_row(matmul(kv_source, block.value_weight), block.value_bias);

  std::vector<Var> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * head_dim;
    Var qh = slice_cols(q, c0, head_dim);
    Var kh = slice_cols(k, c0, head_dim);
    Var vh = slice_cols(v, c0, head_dim);
    Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (trace) trace->attention.push_back(weights.value());
    head_outputs.push_back(matmul(weights, vh));
  }
  Var merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
  return add_row(matmul(merged, block.out_weight), block.out_bias);
}

ScaleVars bind_features(Tape& tape, const MultiScaleFeatures& features) {
  features.validate();
  return ScaleVars{tape.constant(features.short_scale), tape.constant(features.medium_scale),
                   tape.constant(features.long_scale)};
}

PairwiseFeatures pfl_forward(const ScaleVars& s, const BoundParams& params,
                             const ModelConfig& config, ForwardTrace* trace) {
  PairwiseFeatures out;
  if (!config.stages.pairwise) {
    out = {s.long_scale, s.medium_scale, s.short_scale};
  } else {
    out.long_medium = cross_attention(s.long_scale, s.medium_scale,
                                      attention_params(params, "pfl.lm"), config.heads, trace);
    out.medium_short = cross_attention(s.medium_scale, s.short_scale,
                                       attention_params(params, "pfl.ms"), config.heads, trace);
    out.short_long = cross_attention(s.short_scale, s.long_scale,
                                     attention_params(params, "pfl.sl"), config.heads, trace);
  }
  if (trace) {
    trace->long_medium = out.long_medium.value();
    trace->medium_short = out.medium_short.value();
    trace->short_long = out.short_long.value();
  }
  return out;
}

Var ltl_forward(const PairwiseFeatures& pairs, const BoundParams& params,
                const ModelConfig& config) {
  auto gated = [&](Var p, std::string_view name, std::size_t dilation) {
    if (!config.stages.local) return p;
    const std::string prefix = "ltl.gate_" + std::string(name);
    Var gate = sigmoid(conv1d_depthwise(p, params[prefix + ".weight"], params[prefix + ".bias"],
                                        dilation));
    return hadamard(gate, p);
  };
  Var total = add(add(gated(pairs.long_medium, "lm", config.dilations.long_medium),
                       gated(pairs.medium_short, "ms", config.dilations.medium_short)),
                  gated(pairs.short_long, "sl", config.dilations.short_long));
  return linear(total, params, "ltl.proj");
}

Var gtl_forward(const ScaleVars& s, const BoundParams& params, const ModelConfig& config,
                ForwardTrace* trace) {
  const std::array<Var, 3> parts = {s.long_scale, s.medium_scale, s.short_scale};
  Var reduced = linear(concat_cols(parts), params, "gtl.reduce");
  if (!config.stages.global) return reduced;
  return cross_attention(reduced, reduced, attention_params(params, "gtl.attn"), config.heads,
                         trace);
}

Var ff_fuse(Var local, Var global, const ScaleVars& scales, const BoundParams& params,
            const ModelConfig& config) {
  if (local.rows() != global.rows() || local.cols() != global.cols()) {
    throw ShapeError("ff_fuse: local " + shape_of(local.value()) + " and global " +
                     shape_of(global.value()) + " branches differ");
  }
  const std::array<Var, 2> parts = {local, global};
  Var joined = concat_cols(parts);
  if (!config.stages.fusion) return joined;
  return add(linear(joined, params, "ff.proj"), mean_of_scales(scales));
}

Var classify(Var fused, const BoundParams& params, const ModelConfig& config, Mode mode,
             std::uint64_t seed, ForwardTrace* trace) {
  std::mt19937_64 rng(seed);
  const double rate = mode == Mode::kTrain ? config.dropout : 0.0;
  Var z1 = linear(fused, params, "classifier.fc1");
  Var h = dropout(relu(z1), rate, rng);
  Var z2 = linear(h, params, "classifier.fc2");
  h = dropout(relu(z2), rate, rng);
  if (trace) {
    trace->hidden1 = z1.value();
    trace->hidden2 = z2.value();
  }
  return sigmoid(linear(h, params, "classifier.fc3"));
}

ForwardOutput forward(const ScaleVars& scales, const BoundParams& params,
                      const ModelConfig& config, Mode mode, std::uint64_t seed,
                      ForwardTrace* trace) {
  if (scales.short_scale.rows() != config.snippets ||
      scales.short_scale.cols() != config.feature_dim) {
    throw ShapeError("forward: features are " + shape_of(scales.short_scale.value()) +
                     ", model expects " + std::to_string(config.snippets) + "x" +
                     std::to_string(config.feature_dim));
  }
  Var fused;
  if (config.stages.all_disabled()) {
    fused = mean_of_scales(scales);
  } else {
    PairwiseFeatures pairs = pfl_forward(scales, params, config, trace);
    Var local = ltl_forward(pairs, params, config);
    Var global = gtl_forward(scales, params, config, trace);
    if (trace) {
      trace->local = local.value();
      trace->global = global.value();
    }
    fused = ff_fuse(local, global, scales, params, config);
  }
  return ForwardOutput{fused, classify(fused, params, config, mode, seed, trace)};
}

std::vector<double> score_snippets(const MultiScaleFeatures& features, const ModelParams& params,
                                   const ModelConfig& config) {
  Tape tape;
  BoundParams bound(tape, params);
  ForwardOutput out = forward(bind_features(tape, features), bound, config, Mode::kEval, 0);
  const auto v = out.scores.value().values();
  return {v.begin(), v.end()};
}

}  // namespace mtfl
