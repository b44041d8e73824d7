#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwseg/types.hpp"

namespace rwseg {

struct BenchOptions {
  std::vector<int> low_rank_sizes{1024, 4096, 16384};
  std::vector<int> dense_sizes{1024, 4096};
  int feature_dim = 16;
  int classes = 8;
  double min_seconds = 0.25;  // per timing repeat
  int repeats = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string path;  // "low-rank" or "dense"
  Index n = 0;
  int grid_side = 0;
  int iterations = 0;
  double seconds_per_iteration = 0.0;
  double ratio_vs_previous = 0.0;   // t(n) / t(previous n on this path); 0 for the first
  double per_doubling_ratio = 0.0;  // ratio_vs_previous^(1 / log2(n / previous n))
};

/// Per-iteration cost of the truncated walk for a single fused head
/// (shifted low-rank global + sparse local, beta = 0.5) against the same
/// transition materialized densely. Sizes must be perfect squares.
std::vector<BenchRow> run_scaling_bench(const BenchOptions& options);

std::string bench_csv(const std::vector<BenchRow>& rows);

/// The row for (path, n), or nullptr.
const BenchRow* find_bench_row(const std::vector<BenchRow>& rows, const std::string& path, Index n);

}  // namespace rwseg
