#include "rwseg/nrvf.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "byte_io.hpp"
#include "rwseg/error.hpp"

namespace rwseg::nrvf {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

void header_error(const std::string& message) { fail(ErrorCode::InconsistentHeader, message); }

void check_range(std::uint64_t value, std::uint64_t lo, std::uint64_t hi, const char* field) {
  if (value < lo || value > hi) {
    header_error(std::string(field) + " = " + std::to_string(value) + " outside [" +
                 std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, uInt(chunk));
    offset += chunk;
  }
  return std::uint32_t(crc);
}

std::vector<std::uint8_t> encode_bundle(const BundleFile& bundle) {
  const auto& f = bundle.features;
  f.validate();
  const Index n = f.nodes();
  const Index k = Index(bundle.class_names.size());
  if (k < 1) fail(ErrorCode::InvalidArgument, "bundle needs at least one class name");

  ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(std::uint32_t(f.grid_h));
  w.u32(std::uint32_t(f.grid_w));
  w.u32(std::uint32_t(f.feature_dim));
  w.u32(std::uint32_t(f.heads.size()));
  w.u32(std::uint32_t(k));
  for (const auto& name : bundle.class_names) w.string(name);
  w.string(f.source_tag);
  for (const auto& head : f.heads) {
    w.i32(head.layer_index);
    w.i32(head.head_index);
    w.f32_matrix(head.queries);
    w.f32_matrix(head.keys);
  }

  const auto& labels = bundle.labels;
  w.u32(std::uint32_t(labels.mode));
  switch (labels.mode) {
    case LabelMode::CrossAttention: {
      const Index dim = labels.token_queries.cols();
      if (labels.token_queries.rows() != n || labels.prompt_keys.rows() != k ||
          labels.prompt_keys.cols() != dim || dim < 1) {
        fail(ErrorCode::DimensionMismatch, "cross-attention label block shapes are inconsistent");
      }
      w.u32(std::uint32_t(dim));
      w.f32_matrix(labels.token_queries);
      w.f32_matrix(labels.prompt_keys);
      break;
    }
    case LabelMode::Probabilities:
      if (labels.probabilities.rows() != n || labels.probabilities.cols() != k) {
        fail(ErrorCode::DimensionMismatch, "probability label block is not N x K");
      }
      w.f32_matrix(labels.probabilities);
      break;
    default:
      fail(ErrorCode::InvalidArgument, "unknown label mode");
  }

  auto& buf = w.buffer();
  const std::uint32_t crc = crc32(buf);
  w.u32(crc);
  return std::move(buf);
}

BundleFile decode_bundle(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.copy(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    fail(ErrorCode::BadMagic, "magic is not 'NRVF'");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    fail(ErrorCode::VersionUnsupported, "version " + std::to_string(version) +
                                            " (supported: " + std::to_string(kVersion) + ")");
  }

  const std::uint32_t grid_h = r.u32("grid_h");
  const std::uint32_t grid_w = r.u32("grid_w");
  const std::uint32_t dim = r.u32("feature_dim");
  const std::uint32_t head_count = r.u32("head_count");
  const std::uint32_t k = r.u32("class_count");
  check_range(grid_h, 2, kMaxNodes, "grid_h");
  check_range(grid_w, 2, kMaxNodes, "grid_w");
  const std::uint64_t n = std::uint64_t(grid_h) * grid_w;
  check_range(n, 4, kMaxNodes, "grid_h*grid_w");
  check_range(dim, 1, kMaxFeatureDim, "feature_dim");
  check_range(head_count, 1, kMaxHeads, "head_count");
  check_range(k, 1, kMaxClasses, "class_count");

  // Lower bound on the body implied by the header: bounded by the limits
  // above, so no overflow in 64 bits.
  const std::uint64_t head_bytes = 8 + 2 * n * dim * sizeof(float);
  const std::uint64_t min_body = std::uint64_t(k) * 4 + 4 + head_count * head_bytes + 4 + 4;
  if (min_body > r.remaining()) {
    fail(ErrorCode::CorruptPayload, "header implies at least " + std::to_string(min_body) +
                                        " more bytes, file has " +
                                        std::to_string(r.remaining()));
  }

  const std::size_t body_end = bytes.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body_end, sizeof stored_crc);
  if (crc32(bytes.first(body_end)) != stored_crc) {
    fail(ErrorCode::CorruptPayload, "CRC-32 mismatch");
  }

  BundleFile out;
  out.class_names.reserve(k);
  for (std::uint32_t c = 0; c < k; ++c) out.class_names.push_back(r.string(kMaxStringBytes, "class name"));
  auto& f = out.features;
  f.grid_h = int(grid_h);
  f.grid_w = int(grid_w);
  f.feature_dim = int(dim);
  f.source_tag = r.string(kMaxStringBytes, "source tag");
  f.heads.reserve(head_count);
  for (std::uint32_t h = 0; h < head_count; ++h) {
    HeadFeatures head;
    head.layer_index = r.i32("layer_index");
    head.head_index = r.i32("head_index");
    head.queries = r.f32_matrix(Index(n), Index(dim), "head queries");
    head.keys = r.f32_matrix(Index(n), Index(dim), "head keys");
    f.heads.push_back(std::move(head));
  }

  const std::uint32_t mode = r.u32("label_mode");
  auto& labels = out.labels;
  if (mode == std::uint32_t(LabelMode::CrossAttention)) {
    labels.mode = LabelMode::CrossAttention;
    const std::uint32_t label_dim = r.u32("label_dim");
    check_range(label_dim, 1, kMaxFeatureDim, "label_dim");
    r.require((n + k) * label_dim * sizeof(float), "cross-attention block");
    labels.token_queries = r.f32_matrix(Index(n), Index(label_dim), "token queries");
    labels.prompt_keys = r.f32_matrix(Index(k), Index(label_dim), "prompt keys");
  } else if (mode == std::uint32_t(LabelMode::Probabilities)) {
    labels.mode = LabelMode::Probabilities;
    labels.probabilities = r.f32_matrix(Index(n), Index(k), "label probabilities");
  } else {
    header_error("label_mode = " + std::to_string(mode) + " is neither 1 nor 2");
  }

  if (r.offset() != body_end) {
    fail(ErrorCode::CorruptPayload, "payload ends at byte " + std::to_string(r.offset()) +
                                        " but CRC sits at " + std::to_string(body_end));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) fail(ErrorCode::IoFailure, "cannot size " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (!bytes.empty() && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    fail(ErrorCode::IoFailure, "cannot read " + path.string());
  }
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
}

void save_bundle(const BundleFile& bundle, const std::filesystem::path& path) {
  write_file(path, encode_bundle(bundle));
}

BundleFile load_bundle(const std::filesystem::path& path) { return decode_bundle(read_file(path)); }

LabelGenerator make_label_generator(const BundleFile& bundle) {
  const auto& labels = bundle.labels;
  if (labels.mode == LabelMode::CrossAttention) {
    return cross_attention_g(labels.token_queries, labels.prompt_keys, bundle.class_names);
  }
  return g_from_probabilities(labels.probabilities, bundle.class_names);
}

}  // namespace rwseg::nrvf
