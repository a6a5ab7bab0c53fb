// SPDX-License-Identifier: Apache-2.0
#include "mtfl/dataio.hpp"
#include "mtfl/error.hpp"

namespace mtfl {

Matrix segment_to_snippets(const Matrix& clips, std::size_t snippets) {
  if (clips.rows() == 0) throw ValidationError("segment_to_snippets: no clips");
  if (snippets == 0) throw ValidationError("segment_to_snippets: T must be >= 1");
  const std::size_t n = clips.rows();
  Matrix out(snippets, clips.cols());
  for (std::size_t t = 0; t < snippets; ++t) {
    const std::size_t begin = t * n / snippets;
    std::size_t end = (t + 1) * n / snippets;
    if (end <= begin) end = begin + 1;
    auto dst = out.row(t);
    for (std::size_t r = begin; r < end; ++r) {
      const auto src = clips.row(r);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
    const double count = static_cast<double>(end - begin);
    for (auto& v : dst) v /= count;
  }
  return out;
}

MultiScaleFeatures snippet_features(const VideoRecord& video, std::size_t snippets) {
  MultiScaleFeatures f{segment_to_snippets(video.clips_at(ScaleIndex::kShort), snippets),
                       segment_to_snippets(video.clips_at(ScaleIndex::kMedium), snippets),
                       segment_to_snippets(video.clips_at(ScaleIndex::kLong), snippets)};
  f.validate();
  return f;
}

std::vector<int> frame_labels(const VideoRecord& video) {
  std::vector<int> gt(video.frames, 0);
  for (const auto& iv : video.intervals) {
    for (std::size_t f = iv.start; f < iv.end && f < video.frames; ++f) gt[f] = 1;
  }
  return gt;
}

}  // namespace mtfl
