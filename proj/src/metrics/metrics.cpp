// SPDX-License-Identifier: Apache-2.0
#include "mtfl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtfl/error.hpp"

namespace mtfl {

namespace {

void require_same_length(std::span<const double> scores, std::span<const int> labels,
                         const char* what) {
  if (scores.size() != labels.size()) {
    throw ValidationError(std::string(what) + ": " + std::to_string(scores.size()) +
                          " scores vs " + std::to_string(labels.size()) + " labels");
  }
}

std::string format_metric(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<double> expand_to_frames(std::span<const double> snippet_scores, std::size_t frames) {
  if (frames == 0) throw ValidationError("expand_to_frames: n_frames must be >= 1");
  if (snippet_scores.empty()) throw ValidationError("expand_to_frames: no snippet scores");
  const std::size_t snippets = snippet_scores.size();
  std::vector<double> out(frames);
  for (std::size_t f = 0; f < frames; ++f) out[f] = snippet_scores[f * snippets / frames];
  return out;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels, "roc_auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t p = i; p < j; ++p) {
      if (labels[order[p]] != 0) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("roc_auc: needs both positive and negative labels (got " +
                          std::to_string(positives) + " positive, " + std::to_string(negatives) +
                          " negative)");
  }
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels, "average_precision");
  const auto total_pos = static_cast<std::size_t>(std::ranges::count_if(labels, [](int l) { return l != 0; }));
  if (total_pos == 0) throw ValidationError("average_precision: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0) ++tp;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

EvalReport evaluate(std::span<const FrameScores> videos, Pooling pooling) {
  EvalReport report;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  for (const auto& v : videos) {
    require_same_length(v.scores, v.labels, "evaluate");
    VideoEval e;
    e.video_id = v.video_id;
    e.positives = static_cast<std::size_t>(std::ranges::count_if(v.labels, [](int l) { return l != 0; }));
    e.negatives = v.labels.size() - e.positives;
    if (e.positives > 0 && e.negatives > 0) e.auc = roc_auc(v.scores, v.labels);
    if (e.positives > 0) e.ap = average_precision(v.scores, v.labels);
    report.positive_frames += e.positives;
    report.negative_frames += e.negatives;
    report.per_video.push_back(std::move(e));
    all_scores.insert(all_scores.end(), v.scores.begin(), v.scores.end());
    all_labels.insert(all_labels.end(), v.labels.begin(), v.labels.end());
  }
  if (pooling == Pooling::kPooledFrames) {
    report.auc = roc_auc(all_scores, all_labels);
    report.ap = average_precision(all_scores, all_labels);
    return report;
  }
  double auc_sum = 0.0, ap_sum = 0.0;
  std::size_t auc_n = 0, ap_n = 0;
  for (const auto& e : report.per_video) {
    if (e.auc) auc_sum += *e.auc, ++auc_n;
    if (e.ap) ap_sum += *e.ap, ++ap_n;
  }
  if (auc_n == 0 || ap_n == 0) {
    throw ValidationError("evaluate: no video has both normal and anomalous frames");
  }
  report.auc = auc_sum / static_cast<double>(auc_n);
  report.ap = ap_sum / static_cast<double>(ap_n);
  return report;
}

std::string format_report(const EvalReport& report, bool per_video) {
  std::ostringstream os;
  os << "AUC=" << format_metric(report.auc) << '\n';
  os << "AP=" << format_metric(report.ap) << '\n';
  os << "positive_frames=" << report.positive_frames << '\n';
  os << "negative_frames=" << report.negative_frames << '\n';
  if (per_video) {
    for (const auto& e : report.per_video) {
      os << "video=" << e.video_id << ",auc=" << (e.auc ? format_metric(*e.auc) : "n/a")
         << ",ap=" << (e.ap ? format_metric(*e.ap) : "n/a") << ",positives=" << e.positives
         << ",negatives=" << e.negatives << '\n';
    }
  }
  os << "summary," << format_metric(report.auc) << ',' << format_metric(report.ap) << ','
     << report.positive_frames << ',' << report.negative_frames << '\n';
  return os.str();
}

std::string format_score(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 17);
  return std::string(buf, r.ptr);
}

void export_score_curve(const VideoRecord& video, std::span<const double> frame_scores,
                        const std::filesystem::path& path) {
  if (frame_scores.size() != video.frames) {
    throw ValidationError("export_score_curve: video '" + video.id + "' has " +
                          std::to_string(video.frames) + " frames but " +
                          std::to_string(frame_scores.size()) + " scores were given");
  }
  const auto gt = frame_labels(video);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write score curve " + path.string());
  out << "frame,score,gt\n";
  for (std::size_t f = 0; f < video.frames; ++f) {
    out << f << ',' << format_score(frame_scores[f]) << ',' << gt[f] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ScoreCurve read_score_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score curve " + path.string());
  ScoreCurve curve;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.starts_with("frame,")) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": malformed line");
    }
    double score = 0.0;
    int gt = 0;
    const char* s_begin = line.data() + c1 + 1;
    const char* s_end = line.data() + c2;
    auto r1 = std::from_chars(s_begin, s_end, score);
    auto r2 = std::from_chars(line.data() + c2 + 1, line.data() + line.size(), gt);
    if (r1.ec != std::errc() || r1.ptr != s_end || r2.ec != std::errc() || !std::isfinite(score)) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": malformed line");
    }
    curve.scores.push_back(score);
    curve.labels.push_back(gt);
  }
  return curve;
}

}  // namespace mtfl
