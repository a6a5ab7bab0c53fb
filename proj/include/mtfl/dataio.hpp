// SPDX-License-Identifier: Apache-2.0
//
// Feature files, dataset manifests and snippet aggregation.
//
// Feature file (all integers little-endian):
//   "MTFB" | u32 version | u32 N | u32 D | N*D float32, row-major
//
// Manifest: one video per line,
//   video_id,label,n_frames,path_short,path_medium,path_long,intervals
// with intervals "s1:e1;s2:e2" (half-open frame ranges, optionally quoted)
// or empty. Relative paths resolve against the manifest's directory. Blank
// lines and lines starting with '#' are skipped.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtfl/features.hpp"
#include "mtfl/matrix.hpp"

namespace mtfl {

inline constexpr std::uint32_t kFeatureFileVersion = 1;

Matrix read_feature_file(const std::filesystem::path& path);
// Values are stored as float32; non-finite values are rejected.
void write_feature_file(const std::filesystem::path& path, const Matrix& clips);

struct Interval {
  std::size_t start = 0;  // first anomalous frame
  std::size_t end = 0;    // one past the last
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class ScaleIndex : std::size_t { kShort = 0, kMedium = 1, kLong = 2 };

struct VideoRecord {
  std::string id;
  Label label = Label::kNormal;
  std::size_t frames = 0;
  // As written in the manifest (short, medium, long).
  std::array<std::string, 3> feature_paths;
  std::vector<Interval> intervals;
  // Clip features per scale, N_s x D; empty until loaded.
  std::array<Matrix, 3> clips;

  const Matrix& clips_at(ScaleIndex s) const { return clips[static_cast<std::size_t>(s)]; }
  std::size_t dim() const noexcept { return clips[0].cols(); }
};

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<VideoRecord> videos;
  Split split = Split::kTrain;

  std::size_t count(Label label) const;
  std::size_t dim() const;
  // Unique ids, consistent D, interval bounds; a train split needs both classes.
  void validate() const;
};

// Parses manifest text without touching feature files. `origin` is used in
// error messages.
std::vector<VideoRecord> parse_manifest(std::string_view text, std::string_view origin = "manifest");
std::string format_manifest_line(const VideoRecord& video);
std::string format_manifest(const std::vector<VideoRecord>& videos);

// Parses, loads the referenced feature files, validates.
Dataset read_manifest(const std::filesystem::path& path, Split split = Split::kTrain);
void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& videos);

// Snippet t averages clip rows [floor(t*N/T), floor((t+1)*N/T)); an empty
// range (N < T) takes row floor(t*N/T) alone.
Matrix segment_to_snippets(const Matrix& clips, std::size_t snippets);
MultiScaleFeatures snippet_features(const VideoRecord& video, std::size_t snippets);

// Per-frame 0/1 anomaly indicator from the video's intervals.
std::vector<int> frame_labels(const VideoRecord& video);

}  // namespace mtfl
