// SPDX-License-Identifier: Apache-2.0
//
// Synthetic clip-feature generator. Every clip feature is isotropic Gaussian
// noise plus `boost * u * (fraction of the clip's frames inside an anomaly)`
// for one unit direction u per dataset, so abnormal and normal videos are
// linearly separable in expectation along u.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "mtfl/dataio.hpp"

namespace mtfl {

struct SynthConfig {
  std::size_t train_normal = 40;
  std::size_t train_abnormal = 40;
  std::size_t test_normal = 10;
  std::size_t test_abnormal = 10;
  std::size_t min_frames = 256;
  std::size_t max_frames = 1024;
  std::size_t dim = 16;
  double min_anomaly_fraction = 0.1;
  double max_anomaly_fraction = 0.4;
  double boost = 2.0;
  double noise = 1.0;
  // Tubelet lengths in frames for the short, medium and long scales.
  std::array<std::size_t, 3> tubelets = {8, 32, 64};
  // Seed of the signal direction; the dataset seed when unset.
  std::optional<std::uint64_t> direction_seed;

  void validate() const;
};

struct SynthDataset {
  Dataset train;
  Dataset test;
  std::vector<double> direction;  // unit vector u
};

// Deterministic in (config, seed). Values are rounded to float32 so that the
// in-memory dataset equals what the feature files hold.
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

// Writes <dir>/features/<id>_{short,medium,long}.mtfb plus <dir>/train.csv
// and <dir>/test.csv.
void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace mtfl
