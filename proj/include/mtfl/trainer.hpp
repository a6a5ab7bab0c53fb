// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop: class-balanced batches, Adam with decoupled weight
// decay, per-step loss logging and checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "mtfl/dataio.hpp"
#include "mtfl/model.hpp"
#include "mtfl/objective.hpp"

namespace mtfl {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t normals_per_batch = 64;
  std::size_t abnormals_per_batch = 64;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  LossWeights loss;
  ModelConfig model;
  // Threads for the per-pair forward/backward. Does not change results.
  std::size_t workers = 1;
  // Write checkpoints/epoch_<n>.mtfc every this many epochs; 0 disables.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct AdamState {
  NamedTensors first_moment;
  NamedTensors second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const NamedTensors& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected Adam followed by p -= lr * wd * p on every non-bias tensor.
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state,
               const TrainConfig& config);

// Dataset indices of one batch. Pair i is (abnormal[i], normal[i]).
struct Batch {
  std::vector<std::size_t> normal;
  std::vector<std::size_t> abnormal;
};

// Draws each half without replacement when the class has enough videos and
// with replacement otherwise.
Batch sample_batch(const Dataset& dataset, std::size_t normals, std::size_t abnormals,
                   std::mt19937_64& rng);

// ceil(max(class sizes) / batch half)
std::size_t steps_per_epoch(const Dataset& dataset, const TrainConfig& config);

// Seed of the dropout masks of the video at `position` in the batch of `step`.
std::uint64_t dropout_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t position);

struct BatchGradients {
  NamedTensors grads;
  LossBreakdown loss;
};

// Forward + backward over a batch. Each (abnormal, normal) pair runs on its
// own tape; pair results are reduced in pair order regardless of `workers`.
BatchGradients batch_gradients(const ModelParams& params,
                               const std::vector<MultiScaleFeatures>& features,
                               const Batch& batch, const TrainConfig& config, std::uint64_t step);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  ModelParams params;
  AdamState optimizer;
  std::uint64_t seed = 0;
  std::uint32_t version = kCheckpointVersion;

  std::uint64_t step() const noexcept { return optimizer.step; }
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// "MTFC" | u32 version | body | u32 crc32(body), little-endian throughout.
std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& origin = "checkpoint");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StepLog {
  std::uint64_t step = 0;
  LossBreakdown loss;
};

// "step,bce,fm,sparsity,smoothness,total" with round-trippable reals.
std::string format_log_line(const StepLog& entry);
inline constexpr const char* kLossLogHeader = "step,bce,fm,sparsity,smoothness,total";

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

// Trains from init_params(config.model, seed). With `out_dir`, writes
// loss_log.csv, model.mtfc and periodic checkpoints there. Throws
// TrainingError on a non-finite loss, naming the step.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const std::function<void(const StepLog&)>& on_step = {});

}  // namespace mtfl
