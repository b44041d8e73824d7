#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rwseg/walk.hpp"

namespace rwseg {

/// Every tunable of a run, echoed next to its outputs.
struct RunConfig {
  double alpha = 0.9;
  int steps = 40;
  double beta = 0.5;
  double epsilon_self = 1e-2;
  double temperature = 1.0;
  double residual_tolerance = 1e-3;
  std::string mode = "truncated";
  std::string fusion = "weighted";
  std::string affinity = "fused";
  std::string order = "per-head";
  std::string nonneg = "shift";
  std::uint64_t seed = 0;
  int upsample_h = 0;  // 0 = grid resolution
  int upsample_w = 0;

  bool operator==(const RunConfig&) const = default;
};

struct HeadRecord {
  int layer_index = 0;
  int head_index = 0;
  double entropy = 0.0;
  double weight = 0.0;

  bool operator==(const HeadRecord&) const = default;
};

struct RunManifest {
  RunConfig config;
  std::string input_path;
  std::string source_tag;
  int grid_h = 0;
  int grid_w = 0;
  int classes = 0;
  std::vector<std::string> class_names;
  std::vector<HeadRecord> heads;
  int steps_used = 0;
  double residual_bound = 0.0;
  std::map<std::string, double> timings_ms;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

namespace nrvp {
inline constexpr char kMagic[4] = {'N', 'R', 'V', 'P'};
inline constexpr std::uint32_t kVersion = 1;

// "NRVP" | version | N | K | grid_h | grid_w | steps_used | f64 residual bound
// | P[N*K] float32 row-major | CRC-32 of every preceding byte
std::vector<std::uint8_t> encode(const LabelProbabilities& p, int grid_h, int grid_w);

struct Decoded {
  LabelProbabilities probabilities;
  int grid_h = 0;
  int grid_w = 0;
};
Decoded decode(std::span<const std::uint8_t> bytes);
}  // namespace nrvp

/// Binary (P5) graymap with one byte per node holding its class index.
std::vector<std::uint8_t> encode_pgm(const ClassMask& mask);
ClassMask decode_pgm(std::span<const std::uint8_t> bytes);

struct OutputPaths {
  std::filesystem::path mask;
  std::filesystem::path probabilities;
  std::filesystem::path manifest;
};

/// Writes mask.pgm, probabilities.nrvp and manifest.json into out_dir.
OutputPaths save_outputs(const LabelProbabilities& probs, const ClassMask& mask,
                         const RunManifest& manifest, const std::filesystem::path& out_dir);

}  // namespace rwseg
