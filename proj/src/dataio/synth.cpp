// SPDX-License-Identifier: Apache-2.0
#include "mtfl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mtfl/error.hpp"

namespace mtfl {

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { throw ValidationError("synth config: " + why); };
  if (train_normal == 0 || train_abnormal == 0) fail("train counts must be >= 1");
  if (min_frames == 0 || min_frames > max_frames) fail("frame range must satisfy 1 <= min <= max");
  if (dim == 0) fail("dimension must be >= 1");
  if (!(boost > 0.0)) fail("boost must be > 0");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(min_anomaly_fraction > 0.0 && min_anomaly_fraction <= max_anomaly_fraction &&
        max_anomaly_fraction <= 1.0)) {
    fail("anomaly fraction range must satisfy 0 < min <= max <= 1");
  }
  for (std::size_t len : tubelets)
    if (len == 0) fail("tubelet lengths must be >= 1");
}

namespace {

constexpr std::array<const char*, 3> kScaleNames = {"short", "medium", "long"};

VideoRecord make_video(const SynthConfig& cfg, const std::vector<double>& u, std::string id,
                       Label label, std::mt19937_64& rng) {
  VideoRecord v;
  v.id = std::move(id);
  v.label = label;
  v.frames = std::uniform_int_distribution<std::size_t>(cfg.min_frames, cfg.max_frames)(rng);

  std::vector<double> indicator(v.frames, 0.0);
  if (label == Label::kAbnormal) {
    const double fraction =
        std::uniform_real_distribution<double>(cfg.min_anomaly_fraction, cfg.max_anomaly_fraction)(rng);
    const auto length = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(v.frames))), 1, v.frames);
    const auto start = std::uniform_int_distribution<std::size_t>(0, v.frames - length)(rng);
    v.intervals.push_back({start, start + length});
    for (std::size_t f = start; f < start + length; ++f) indicator[f] = 1.0;
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t len = cfg.tubelets[s];
    const std::size_t clips = (v.frames + len - 1) / len;
    Matrix m(clips, cfg.dim);
    for (std::size_t i = 0; i < clips; ++i) {
      const std::size_t f0 = i * len;
      const std::size_t f1 = std::min(v.frames, f0 + len);
      double z = 0.0;
      for (std::size_t f = f0; f < f1; ++f) z += indicator[f];
      z /= static_cast<double>(f1 - f0);
      auto row = m.row(i);
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        const double value = cfg.noise * gauss(rng) + cfg.boost * u[d] * z;
        row[d] = static_cast<double>(static_cast<float>(value));
      }
    }
    v.clips[s] = std::move(m);
    v.feature_paths[s] = "features/" + v.id + "_" + kScaleNames[s] + ".mtfb";
  }
  return v;
}

Dataset make_split(const SynthConfig& cfg, const std::vector<double>& u, Split split,
                   std::size_t normals, std::size_t abnormals, std::mt19937_64& rng) {
  Dataset ds;
  ds.split = split;
  const std::string prefix = split == Split::kTrain ? "train" : "test";
  for (std::size_t i = 0; i < normals; ++i) {
    ds.videos.push_back(make_video(cfg, u, prefix + "_normal_" + std::to_string(i), Label::kNormal, rng));
  }
  for (std::size_t i = 0; i < abnormals; ++i) {
    ds.videos.push_back(
        make_video(cfg, u, prefix + "_abnormal_" + std::to_string(i), Label::kAbnormal, rng));
  }
  return ds;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SynthDataset out;
  {
    std::mt19937_64 dir_rng(cfg.direction_seed.value_or(seed) ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    out.direction.resize(cfg.dim);
    double norm = 0.0;
    while (norm == 0.0) {
      for (auto& x : out.direction) x = gauss(dir_rng);
      norm = 0.0;
      for (double x : out.direction) norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : out.direction) x /= norm;
  }
  std::mt19937_64 rng(seed);
  out.train = make_split(cfg, out.direction, Split::kTrain, cfg.train_normal, cfg.train_abnormal, rng);
  out.test = make_split(cfg, out.direction, Split::kTest, cfg.test_normal, cfg.test_abnormal, rng);
  out.train.validate();
  out.test.validate();
  return out;
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "features", ec);
  if (ec) throw IoError("cannot create " + (dir / "features").string() + ": " + ec.message());
  for (const Dataset* ds : {&data.train, &data.test}) {
    for (const auto& v : ds->videos) {
      for (std::size_t s = 0; s < 3; ++s) write_feature_file(dir / v.feature_paths[s], v.clips[s]);
    }
  }
  write_manifest(dir / "train.csv", data.train.videos);
  write_manifest(dir / "test.csv", data.test.videos);
}

}  // namespace mtfl
