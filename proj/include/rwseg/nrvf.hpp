#pragma once

// NRVF feature-bundle files. All integers are little-endian uint32 unless
// noted, all tensors row-major little-endian float32.
//
//   "NRVF" | version | grid_h | grid_w | D | head_count | K
//   K x (u32 byte length, UTF-8 class name)
//   u32 byte length, UTF-8 source tag
//   head_count x (i32 layer_index, i32 head_index, Q[N*D], K[N*D])
//   u32 label mode
//     1 (cross-attention): u32 label_dim, token queries[N*label_dim],
//                          prompt keys[K*label_dim]
//     2 (probabilities):   G[N*K]
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rwseg/affinity.hpp"
#include "rwseg/label_gen.hpp"

namespace rwseg::nrvf {

inline constexpr char kMagic[4] = {'N', 'R', 'V', 'F'};
inline constexpr std::uint32_t kVersion = 1;

// Header sanity limits, checked before anything is allocated from them.
inline constexpr std::uint64_t kMaxNodes = std::uint64_t(1) << 24;
inline constexpr std::uint32_t kMaxFeatureDim = 1u << 16;
inline constexpr std::uint32_t kMaxHeads = 1024;
inline constexpr std::uint32_t kMaxClasses = 1u << 16;
inline constexpr std::uint32_t kMaxStringBytes = 1u << 16;

enum class LabelMode : std::uint32_t { CrossAttention = 1, Probabilities = 2 };

struct LabelBlock {
  LabelMode mode = LabelMode::Probabilities;
  Matrix token_queries;  // N x label_dim (cross-attention)
  Matrix prompt_keys;    // K x label_dim (cross-attention)
  Matrix probabilities;  // N x K (probabilities)
};

struct BundleFile {
  FeatureBundle features;
  std::vector<std::string> class_names;
  LabelBlock labels;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_bundle(const BundleFile& bundle);
/// Errors: BadMagic, VersionUnsupported, InconsistentHeader, CorruptPayload.
BundleFile decode_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const BundleFile& bundle, const std::filesystem::path& path);
BundleFile load_bundle(const std::filesystem::path& path);

/// G from the bundle's label block (softmax for cross-attention inputs).
LabelGenerator make_label_generator(const BundleFile& bundle);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rwseg::nrvf
