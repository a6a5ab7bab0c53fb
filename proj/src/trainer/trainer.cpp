// SPDX-License-Identifier: Apache-2.0
#include "mtfl/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "mtfl/error.hpp"
#include "mtfl/ops.hpp"

namespace mtfl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kBatchStream = 0x62617463680aULL;

std::string format_real(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void pick(const std::vector<std::size_t>& pool, std::size_t count, std::mt19937_64& rng,
          std::vector<std::size_t>& out) {
  out.clear();
  if (pool.size() >= count) {
    std::vector<std::size_t> shuffled = pool;
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, shuffled.size() - 1);
      std::swap(shuffled[i], shuffled[dist(rng)]);
      out.push_back(shuffled[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pool[dist(rng)]);
  }
}

BatchGradients pair_gradients(const ModelParams& params,
                              const std::vector<MultiScaleFeatures>& features, const Batch& batch,
                              std::size_t pair, const TrainConfig& cfg, std::uint64_t step) {
  Tape tape;
  BoundParams bound(tape, params);
  const std::array<ForwardOutput, 2> outputs = {
      forward(bind_features(tape, features[batch.abnormal[pair]]), bound, cfg.model, Mode::kTrain,
              dropout_seed(cfg.seed, step, 2 * pair)),
      forward(bind_features(tape, features[batch.normal[pair]]), bound, cfg.model, Mode::kTrain,
              dropout_seed(cfg.seed, step, 2 * pair + 1)),
  };
  const std::array<Label, 2> labels = {Label::kAbnormal, Label::kNormal};
  LossTerms terms = total_loss(outputs, labels, cfg.loss);
  return BatchGradients{tape.backward(terms.total), terms.values()};
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("train config: " + why); };
  if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam eps must be > 0");
  if (normals_per_batch < 1 || abnormals_per_batch < 1) fail("batch halves must be >= 1");
  if (normals_per_batch != abnormals_per_batch) {
    fail("normal and abnormal batch halves must be equal (videos are paired)");
  }
  if (workers < 1) fail("workers must be >= 1");
  model.validate();
  loss.validate(model.snippets);
}

Batch sample_batch(const Dataset& dataset, std::size_t normals, std::size_t abnormals,
                   std::mt19937_64& rng) {
  std::vector<std::size_t> normal_pool, abnormal_pool;
  for (std::size_t i = 0; i < dataset.videos.size(); ++i) {
    (dataset.videos[i].label == Label::kAbnormal ? abnormal_pool : normal_pool).push_back(i);
  }
  if (normal_pool.empty() || abnormal_pool.empty()) {
    throw ValidationError("sample_batch: dataset lacks " +
                          std::string(normal_pool.empty() ? "normal" : "abnormal") + " videos");
  }
  Batch batch;
  pick(normal_pool, normals, rng, batch.normal);
  pick(abnormal_pool, abnormals, rng, batch.abnormal);
  return batch;
}

std::size_t steps_per_epoch(const Dataset& dataset, const TrainConfig& config) {
  const std::size_t largest = std::max(dataset.count(Label::kNormal), dataset.count(Label::kAbnormal));
  const std::size_t half = std::max(config.normals_per_batch, config.abnormals_per_batch);
  return std::max<std::size_t>(1, (largest + half - 1) / half);
}

std::uint64_t dropout_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t position) {
  return splitmix64(splitmix64(splitmix64(seed) ^ step) ^ position);
}

BatchGradients batch_gradients(const ModelParams& params,
                               const std::vector<MultiScaleFeatures>& features,
                               const Batch& batch, const TrainConfig& cfg, std::uint64_t step) {
  const std::size_t pairs = batch.abnormal.size();
  if (pairs == 0 || batch.normal.size() != pairs) {
    throw ValidationError("batch_gradients: batch must hold equal, nonzero class counts");
  }
  std::vector<BatchGradients> results(pairs);
  std::vector<std::exception_ptr> errors(pairs);
  auto run = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t i = worker; i < pairs; i += stride) {
      try {
        results[i] = pair_gradients(params, features, batch, i, cfg, step);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg.workers, pairs);
  if (workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, workers);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double inv = 1.0 / static_cast<double>(pairs);
  BatchGradients out{params.zeros_like(), {}};
  for (const auto& r : results) {
    for (std::size_t t = 0; t < out.grads.size(); ++t) axpy_into(out.grads.tensor(t), inv, r.grads.tensor(t));
    out.loss.bce += r.loss.bce;
    out.loss.fm += r.loss.fm;
    out.loss.sparsity += r.loss.sparsity;
    out.loss.smoothness += r.loss.smoothness;
  }
  out.loss.bce *= inv;
  out.loss.fm *= inv;
  out.loss.sparsity *= inv;
  out.loss.smoothness *= inv;
  out.loss.total = LossBreakdown::compose(cfg.loss, out.loss.bce, out.loss.fm, out.loss.sparsity,
                                          out.loss.smoothness);
  return out;
}

std::string format_log_line(const StepLog& e) {
  return std::to_string(e.step) + "," + format_real(e.loss.bce) + "," + format_real(e.loss.fm) +
         "," + format_real(e.loss.sparsity) + "," + format_real(e.loss.smoothness) + "," +
         format_real(e.loss.total);
}

TrainResult train(const Dataset& dataset, const TrainConfig& input_config,
                  const std::optional<std::filesystem::path>& out_dir,
                  const std::function<void(const StepLog&)>& on_step) {
  TrainConfig cfg = input_config;
  if (cfg.model.feature_dim == 0) cfg.model.feature_dim = dataset.dim();
  if (cfg.model.feature_dim != dataset.dim()) {
    throw ValidationError("model expects D=" + std::to_string(cfg.model.feature_dim) +
                          " but the dataset has D=" + std::to_string(dataset.dim()));
  }
  cfg.validate();
  dataset.validate();

  std::vector<MultiScaleFeatures> features;
  features.reserve(dataset.videos.size());
  for (const auto& v : dataset.videos) features.push_back(snippet_features(v, cfg.model.snippets));

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.model = cfg.model;
  ckpt.seed = cfg.seed;
  ckpt.params = init_params(cfg.model, cfg.seed);
  ckpt.optimizer = AdamState::zeros_like(ckpt.params);

  std::ofstream log_file;
  if (out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir->string() + ": " + ec.message());
    log_file.open(*out_dir / "loss_log.csv", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (*out_dir / "loss_log.csv").string());
    log_file << kLossLogHeader << '\n';
  }

  std::mt19937_64 batch_rng(splitmix64(cfg.seed ^ kBatchStream));
  const std::size_t steps = steps_per_epoch(dataset, cfg);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps; ++s) {
      const std::uint64_t step = ckpt.optimizer.step;
      const Batch batch = sample_batch(dataset, cfg.normals_per_batch, cfg.abnormals_per_batch, batch_rng);
      BatchGradients bg = batch_gradients(ckpt.params, features, batch, cfg, step);
      if (!std::isfinite(bg.loss.total)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step + 1) + " (epoch " +
                            std::to_string(epoch + 1) + ")");
      }
      adam_step(ckpt.params, bg.grads, ckpt.optimizer, cfg);
      StepLog entry{ckpt.optimizer.step, bg.loss};
      if (log_file.is_open()) log_file << format_log_line(entry) << '\n';
      if (on_step) on_step(entry);
      result.log.push_back(entry);
    }
    if (out_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(*out_dir / "checkpoints");
      save_checkpoint(ckpt, *out_dir / "checkpoints" / ("epoch_" + std::to_string(epoch + 1) + ".mtfc"));
    }
  }
  if (out_dir) {
    log_file.flush();
    if (!log_file) throw IoError("write failed: " + (*out_dir / "loss_log.csv").string());
    save_checkpoint(ckpt, *out_dir / "model.mtfc");
  }
  return result;
}

}  // namespace mtfl
