// SPDX-License-Identifier: Apache-2.0
//
// Multi-timescale fusion network and snippet classifier.
//
//   short/medium/long (T x D each)
//     -> pairwise cross-attention         LM, MS, SL        (T x D)
//     -> local branch: dilated conv gates, sum, projection  (T x D/2)
//     -> global branch: concat, reduction, self-attention   (T x D/2)
//     -> fusion: concat, projection, mean-of-scales residual (T x D)
//     -> 3-layer classifier -> sigmoid scores                (T x 1)
//
// Each of the four fusion stages can be switched off; a disabled stage is an
// identity pass-through and owns no parameters.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtfl/features.hpp"
#include "mtfl/named_tensors.hpp"
#include "mtfl/tape.hpp"

namespace mtfl {

struct StageSwitches {
  bool pairwise = true;  // PFL
  bool local = true;     // LTL
  bool global = true;    // GTL
  bool fusion = true;    // FF

  bool all_disabled() const noexcept { return !pairwise && !local && !global && !fusion; }
  friend bool operator==(const StageSwitches&, const StageSwitches&) = default;
};

// Dilation of the gate convolution applied to each pairwise branch.
struct BranchDilations {
  std::size_t long_medium = 2;
  std::size_t medium_short = 1;
  std::size_t short_long = 4;
  friend bool operator==(const BranchDilations&, const BranchDilations&) = default;
};

struct ModelConfig {
  std::size_t snippets = 32;   // T
  std::size_t feature_dim = 0;  // D, taken from the data
  std::size_t heads = 4;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 128;
  double dropout = 0.7;
  BranchDilations dilations;
  StageSwitches stages;

  // Throws ValidationError naming the violated constraint.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Stage { kPairwise, kLocal, kGlobal, kFusion };

struct TensorShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

// Declared parameter tensors for a configuration, in initialization order.
std::vector<TensorShape> parameter_shapes(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);
// Number of parameters owned by one stage when it is enabled.
std::size_t stage_parameter_count(const ModelConfig& config, Stage stage);

using ModelParams = NamedTensors;

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in the row count of
// the tensor (3 for the gate kernels); biases zero.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

bool is_bias(std::string_view name);

// Parameters bound as leaves of one tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ModelParams& params);
  Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const;
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::unordered_map<std::string, Var> vars_;
};

struct AttentionParams {
  Var query_weight, query_bias;
  Var key_weight;
  Var value_weight, value_bias;
  Var out_weight, out_bias;
};

// Looks up "<prefix>.query.weight" etc.
AttentionParams attention_params(const BoundParams& params, std::string_view prefix);

// Optional capture of intermediate values for inspection.
struct ForwardTrace {
  std::vector<Matrix> attention;  // every head of every attention block
  Matrix long_medium, medium_short, short_long;
  Matrix local, global;
  Matrix hidden1, hidden2;  // classifier pre-activations
};

// Multi-head attention, heads split over contiguous column blocks. Keys carry
// no bias: a key bias shifts every logit of a row equally and cancels in the
// softmax. Self-attention is query_source == kv_source.
Var cross_attention(Var query_source, Var kv_source, const AttentionParams& block,
                    std::size_t heads, ForwardTrace* trace = nullptr);

struct ScaleVars {
  Var short_scale, medium_scale, long_scale;
};

struct PairwiseFeatures {
  Var long_medium, medium_short, short_long;
};

ScaleVars bind_features(Tape& tape, const MultiScaleFeatures& features);

PairwiseFeatures pfl_forward(const ScaleVars& scales, const BoundParams& params,
                             const ModelConfig& config, ForwardTrace* trace = nullptr);
Var ltl_forward(const PairwiseFeatures& pairs, const BoundParams& params,
                const ModelConfig& config);
Var gtl_forward(const ScaleVars& scales, const BoundParams& params, const ModelConfig& config,
                ForwardTrace* trace = nullptr);
Var ff_fuse(Var local, Var global, const ScaleVars& scales, const BoundParams& params,
            const ModelConfig& config);

enum class Mode { kTrain, kEval };

// T x D -> T x 1 probabilities. In train mode dropout masks are drawn from
// `seed`; survivors are scaled by 1/(1-p).
Var classify(Var fused, const BoundParams& params, const ModelConfig& config, Mode mode,
             std::uint64_t seed, ForwardTrace* trace = nullptr);

struct ForwardOutput {
  Var fused;   // X, T x D
  Var scores;  // T x 1
};

ForwardOutput forward(const ScaleVars& scales, const BoundParams& params,
                      const ModelConfig& config, Mode mode, std::uint64_t seed,
                      ForwardTrace* trace = nullptr);

// Eval-mode snippet scores without keeping the tape around.
std::vector<double> score_snippets(const MultiScaleFeatures& features, const ModelParams& params,
                                   const ModelConfig& config);

}  // namespace mtfl
