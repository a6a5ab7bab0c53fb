// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "../common/byte_io.hpp"
#include "mtfl/dataio.hpp"

namespace mtfl {

namespace {
constexpr std::string_view kMagic = "MTFB";
}

Matrix read_feature_file(const std::filesystem::path& path) {
  const auto data = detail::read_file_bytes(path);
  detail::ByteReader in(data.data(), data.size(), path.string());
  if (in.remaining() < kMagic.size() || in.bytes(kMagic.size()) != kMagic) {
    throw FormatError(FormatErrorKind::kBadMagic, path.string() + ": not an MTFB feature file");
  }
  const std::uint32_t version = in.u32();
  if (version != kFeatureFileVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      path.string() + ": version " + std::to_string(version));
  }
  const std::uint64_t rows = in.u32();
  const std::uint64_t cols = in.u32();
  const std::uint64_t payload = rows * cols * sizeof(float);
  if (in.remaining() < payload) {
    throw FormatError(FormatErrorKind::kTruncated,
                      path.string() + ": header declares " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " but only " + std::to_string(in.remaining()) +
                          " payload bytes present");
  }
  if (in.remaining() > payload) {
    throw FormatError(FormatErrorKind::kTrailingData,
                      path.string() + ": " + std::to_string(in.remaining() - payload) +
                          " bytes after payload");
  }
  Matrix m(rows, cols);
  for (auto& v : m.values()) {
    const float f = in.f32();
    if (!std::isfinite(f)) {
      throw FormatError(FormatErrorKind::kNonFinite, path.string() + ": non-finite feature value");
    }
    v = f;
  }
  return m;
}

void write_feature_file(const std::filesystem::path& path, const Matrix& clips) {
  if (!clips.all_finite()) {
    throw FormatError(FormatErrorKind::kNonFinite,
                      path.string() + ": refusing to write non-finite features");
  }
  detail::ByteWriter out;
  out.bytes(kMagic);
  out.u32(kFeatureFileVersion);
  out.u32(static_cast<std::uint32_t>(clips.rows()));
  out.u32(static_cast<std::uint32_t>(clips.cols()));
  for (double v : clips.values()) out.f32(static_cast<float>(v));
  detail::write_file_bytes(path, out.buffer());
}

}  // namespace mtfl
