// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtfl/dataio.hpp"

namespace mtfl {

// Frame f takes the score of snippet floor(f * T / frames).
std::vector<double> expand_to_frames(std::span<const double> snippet_scores, std::size_t frames);

// Mann-Whitney AUC with average ranks for tied scores. Labels are 0/1.
// Throws ValidationError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Step-wise average precision: scores sorted descending, tied scores form one
// threshold, AP = sum over thresholds of delta-recall * precision.
// Throws ValidationError when there are no positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct FrameScores {
  std::string video_id;
  std::vector<double> scores;
  std::vector<int> labels;
};

struct VideoEval {
  std::string video_id;
  std::optional<double> auc;  // only when the video has both classes
  std::optional<double> ap;   // only when the video has positives
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

enum class Pooling {
  kPooledFrames,   // one AUC/AP over all frames of all videos
  kMeanPerVideo,   // mean of per-video values where defined
};

struct EvalReport {
  double auc = 0.0;
  double ap = 0.0;
  std::size_t positive_frames = 0;
  std::size_t negative_frames = 0;
  std::vector<VideoEval> per_video;
};

EvalReport evaluate(std::span<const FrameScores> videos, Pooling pooling = Pooling::kPooledFrames);

// Labeled lines ("AUC=...", "AP=...", ...) followed by a comma-separated
// "summary,auc,ap,positive_frames,negative_frames" line.
std::string format_report(const EvalReport& report, bool per_video);

// Fixed-point rendering used in score curves.
std::string format_score(double v);

// Writes "frame,score,gt" lines (with that header) for one video.
void export_score_curve(const VideoRecord& video, std::span<const double> frame_scores,
                        const std::filesystem::path& path);

struct ScoreCurve {
  std::vector<double> scores;
  std::vector<int> labels;
};
ScoreCurve read_score_curve(const std::filesystem::path& path);

}  // namespace mtfl
