// SPDX-License-Identifier: Apache-2.0
#include <zlib.h>

#include "../common/byte_io.hpp"
#include "mtfl/trainer.hpp"

namespace mtfl {

namespace {

constexpr std::string_view kMagic = "MTFC";

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size));
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t stage_bits(const StageSwitches& s) {
  return (s.pairwise ? 1u : 0u) | (s.local ? 2u : 0u) | (s.global ? 4u : 0u) |
         (s.fusion ? 8u : 0u);
}

void write_table(detail::ByteWriter& out, const NamedTensors& table) {
  out.u32(static_cast<std::uint32_t>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Matrix& m = table.tensor(i);
    out.str(table.name(i));
    out.u32(static_cast<std::uint32_t>(m.rows()));
    out.u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) out.f64(v);
  }
}

NamedTensors read_table(detail::ByteReader& in) {
  NamedTensors table;
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.str();
    const std::uint64_t rows = in.u32();
    const std::uint64_t cols = in.u32();
    in.need(rows * cols * sizeof(double));
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = in.f64();
    table.insert(std::move(name), std::move(m));
  }
  return table;
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter body;
  const ModelConfig& c = ckpt.model;
  body.u32(static_cast<std::uint32_t>(c.snippets));
  body.u32(static_cast<std::uint32_t>(c.feature_dim));
  body.u32(static_cast<std::uint32_t>(c.heads));
  body.u32(static_cast<std::uint32_t>(c.hidden1));
  body.u32(static_cast<std::uint32_t>(c.hidden2));
  body.f64(c.dropout);
  body.u32(static_cast<std::uint32_t>(c.dilations.long_medium));
  body.u32(static_cast<std::uint32_t>(c.dilations.medium_short));
  body.u32(static_cast<std::uint32_t>(c.dilations.short_long));
  body.u32(stage_bits(c.stages));
  body.u64(ckpt.seed);
  body.u64(ckpt.optimizer.step);
  write_table(body, ckpt.params);
  write_table(body, ckpt.optimizer.first_moment);
  write_table(body, ckpt.optimizer.second_moment);

  detail::ByteWriter out;
  out.bytes(kMagic);
  out.u32(ckpt.version);
  const auto& b = body.buffer();
  out.bytes(std::string_view(b.data(), b.size()));
  out.u32(crc32_of(b.data(), b.size()));
  return out.buffer();
}

Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& origin) {
  detail::ByteReader in(bytes.data(), bytes.size(), origin);
  if (in.remaining() < kMagic.size() || in.bytes(kMagic.size()) != kMagic) {
    throw FormatError(FormatErrorKind::kBadMagic, origin + ": not an MTFC checkpoint");
  }
  Checkpoint ckpt;
  ckpt.version = in.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      origin + ": checkpoint version " + std::to_string(ckpt.version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::size_t body_begin = in.position();
  ModelConfig& c = ckpt.model;
  c.snippets = in.u32();
  c.feature_dim = in.u32();
  c.heads = in.u32();
  c.hidden1 = in.u32();
  c.hidden2 = in.u32();
  c.dropout = in.f64();
  c.dilations.long_medium = in.u32();
  c.dilations.medium_short = in.u32();
  c.dilations.short_long = in.u32();
  const std::uint32_t bits = in.u32();
  c.stages = StageSwitches{(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0, (bits & 8u) != 0};
  ckpt.seed = in.u64();
  ckpt.optimizer.step = in.u64();
  ckpt.params = read_table(in);
  ckpt.optimizer.first_moment = read_table(in);
  ckpt.optimizer.second_moment = read_table(in);
  const std::size_t body_end = in.position();
  const std::uint32_t stored_crc = in.u32();
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::kTrailingData,
                      origin + ": " + std::to_string(in.remaining()) + " bytes after checksum");
  }
  if (crc32_of(bytes.data() + body_begin, body_end - body_begin) != stored_crc) {
    throw FormatError(FormatErrorKind::kChecksumMismatch, origin + ": CRC-32 does not match");
  }

  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(FormatErrorKind::kMalformed, origin + ": " + e.what());
  }
  const auto shapes = parameter_shapes(c);
  bool layout_ok = shapes.size() == ckpt.params.size();
  for (std::size_t i = 0; layout_ok && i < shapes.size(); ++i) {
    layout_ok = shapes[i].name == ckpt.params.name(i) &&
                shapes[i].rows == ckpt.params.tensor(i).rows() &&
                shapes[i].cols == ckpt.params.tensor(i).cols();
  }
  if (!layout_ok || !ckpt.params.same_layout(ckpt.optimizer.first_moment) ||
      !ckpt.params.same_layout(ckpt.optimizer.second_moment)) {
    throw FormatError(FormatErrorKind::kMalformed,
                      origin + ": tensor table does not match the stored model config");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path), path.string());
}

}  // namespace mtfl
