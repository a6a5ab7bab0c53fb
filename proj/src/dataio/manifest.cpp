// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mtfl/dataio.hpp"
#include "mtfl/error.hpp"

namespace mtfl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (true) {
    const auto pos = s.find(sep, begin);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(begin));
      return out;
    }
    out.push_back(s.substr(begin, pos - begin));
    begin = pos + 1;
  }
}

bool parse_count(std::string_view s, std::size_t& out) {
  s = trim(s);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(
      std::ranges::count_if(videos, [label](const VideoRecord& v) { return v.label == label; }));
}

std::size_t Dataset::dim() const { return videos.empty() ? 0 : videos.front().dim(); }

void Dataset::validate() const {
  std::unordered_set<std::string> ids;
  const std::size_t d = dim();
  for (const auto& v : videos) {
    if (!ids.insert(v.id).second) throw ValidationError("duplicate video id '" + v.id + "'");
    if (v.frames == 0) throw ValidationError("video '" + v.id + "': n_frames must be >= 1");
    for (std::size_t s = 0; s < 3; ++s) {
      const Matrix& c = v.clips[s];
      if (c.rows() == 0) throw ValidationError("video '" + v.id + "': empty clip features");
      if (c.cols() != v.clips[0].cols()) {
        throw ValidationError("video '" + v.id + "': feature dimension differs across scales (" +
                              shape_of(v.clips[0]) + ", " + shape_of(c) + ")");
      }
      if (!c.all_finite()) throw ValidationError("video '" + v.id + "': non-finite features");
    }
    if (v.dim() != d) {
      throw ValidationError("video '" + v.id + "': feature dimension " + std::to_string(v.dim()) +
                            " differs from dataset dimension " + std::to_string(d));
    }
    if (v.label == Label::kNormal && !v.intervals.empty()) {
      throw ValidationError("video '" + v.id + "': normal video carries anomaly intervals");
    }
    auto sorted = v.intervals;
    std::ranges::sort(sorted, {}, &Interval::start);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto& iv = sorted[i];
      if (iv.start >= iv.end || iv.end > v.frames) {
        throw ValidationError("video '" + v.id + "': interval " + std::to_string(iv.start) + ":" +
                              std::to_string(iv.end) + " outside [0, " +
                              std::to_string(v.frames) + ")");
      }
      if (i > 0 && iv.start < sorted[i - 1].end) {
        throw ValidationError("video '" + v.id + "': overlapping anomaly intervals");
      }
    }
  }
  if (split == Split::kTrain && (count(Label::kNormal) == 0 || count(Label::kAbnormal) == 0)) {
    throw ValidationError("training split needs at least one normal and one abnormal video");
  }
}

std::vector<VideoRecord> parse_manifest(std::string_view text, std::string_view origin) {
  std::vector<VideoRecord> out;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fail = [&](const std::string& why) {
      throw ValidationError(std::string(origin) + " line " + std::to_string(line_no) + ": " + why);
    };
    const auto fields = split(line, ',');
    if (fields.size() != 7) {
      fail("expected 7 comma-separated fields, found " + std::to_string(fields.size()));
    }
    if (line_no == 1 && trim(fields[0]) == "video_id") continue;  // header

    VideoRecord v;
    v.id = std::string(trim(fields[0]));
    if (v.id.empty()) fail("empty video id");
    const auto label = trim(fields[1]);
    if (label == "0") {
      v.label = Label::kNormal;
    } else if (label == "1") {
      v.label = Label::kAbnormal;
    } else {
      fail("label must be 0 or 1, got '" + std::string(label) + "'");
    }
    if (!parse_count(fields[2], v.frames)) fail("bad n_frames '" + std::string(fields[2]) + "'");
    for (std::size_t s = 0; s < 3; ++s) {
      v.feature_paths[s] = std::string(trim(fields[3 + s]));
      if (v.feature_paths[s].empty()) fail("empty feature path");
    }
    std::string_view iv = trim(fields[6]);
    if (iv.size() >= 2 && iv.front() == '"' && iv.back() == '"') iv = iv.substr(1, iv.size() - 2);
    if (!trim(iv).empty()) {
      for (std::string_view item : split(iv, ';')) {
        const auto ends = split(item, ':');
        Interval interval;
        if (ends.size() != 2 || !parse_count(ends[0], interval.start) ||
            !parse_count(ends[1], interval.end)) {
          fail("bad interval '" + std::string(item) + "'");
        }
        if (interval.end <= interval.start) fail("empty interval '" + std::string(item) + "'");
        v.intervals.push_back(interval);
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string format_manifest_line(const VideoRecord& v) {
  std::ostringstream os;
  os << v.id << ',' << static_cast<int>(v.label) << ',' << v.frames;
  for (const auto& p : v.feature_paths) os << ',' << p;
  os << ',';
  for (std::size_t i = 0; i < v.intervals.size(); ++i) {
    if (i) os << ';';
    os << v.intervals[i].start << ':' << v.intervals[i].end;
  }
  return os.str();
}

std::string format_manifest(const std::vector<VideoRecord>& videos) {
  std::string out;
  for (const auto& v : videos) {
    out += format_manifest_line(v);
    out += '\n';
  }
  return out;
}

Dataset read_manifest(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Dataset ds;
  ds.split = split;
  ds.videos = parse_manifest(buf.str(), path.string());
  const auto base = path.parent_path();
  for (auto& v : ds.videos) {
    for (std::size_t s = 0; s < 3; ++s) {
      std::filesystem::path p(v.feature_paths[s]);
      if (p.is_relative()) p = base / p;
      v.clips[s] = read_feature_file(p);
    }
  }
  ds.validate();
  return ds;
}

void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& videos) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest(videos);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mtfl
