#include "rwseg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "rwseg/affinity.hpp"
#include "rwseg/error.hpp"
#include "rwseg/walk.hpp"

namespace rwseg {
namespace {

struct Instance {
  CompositeTransition transition;
  LabelGenerator g;
};

Instance make_instance(int side, int dim, int classes, std::mt19937_64& rng) {
  const Index n = Index(side) * side;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.01, 1.0);
  HeadFeatures head;
  head.queries.resize(n, dim);
  head.keys.resize(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      head.queries(i, j) = normal(rng);
      head.keys(i, j) = normal(rng);
    }
  }
  Matrix probs(n, classes);
  for (Index i = 0; i < n; ++i) {
    for (int k = 0; k < classes; ++k) probs(i, k) = uniform(rng);
    probs.row(i) /= probs.row(i).sum();
  }
  const auto global = row_normalize(global_affinity(head, NonNegPolicy::Shift));
  const auto local = row_normalize(local_affinity(head, side, side, 1e-2));
  return Instance{fuse(global, local, 0.5), g_from_probabilities(probs)};
}

double time_per_iteration(const CompositeTransition& s, const LabelGenerator& g,
                          const BenchOptions& options, int& iterations_out) {
  using Clock = std::chrono::steady_clock;
  WalkConfig cfg;
  cfg.alpha = 0.9;
  // Calibrate the iteration count so one repeat takes about min_seconds.
  int iterations = 1;
  for (;;) {
    cfg.steps = iterations;
    const auto t0 = Clock::now();
    truncated_walk(s, g, cfg);
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (elapsed >= options.min_seconds || iterations >= (1 << 20)) break;
    const double grow = elapsed > 0 ? options.min_seconds / elapsed * 1.2 : 16.0;
    iterations = int(std::min(double(1 << 20), std::ceil(iterations * std::clamp(grow, 2.0, 64.0))));
  }
  iterations_out = iterations;
  cfg.steps = iterations;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.repeats); ++r) {
    const auto t0 = Clock::now();
    truncated_walk(s, g, cfg);
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best / iterations;
}

void fill_ratios(std::vector<BenchRow>& rows, std::size_t first) {
  for (std::size_t i = first + 1; i < rows.size(); ++i) {
    auto& row = rows[i];
    const auto& prev = rows[i - 1];
    row.ratio_vs_previous = row.seconds_per_iteration / prev.seconds_per_iteration;
    const double doublings = std::log2(double(row.n) / double(prev.n));
    row.per_doubling_ratio = std::pow(row.ratio_vs_previous, 1.0 / doublings);
  }
}

int grid_side(int n) {
  const int side = int(std::lround(std::sqrt(double(n))));
  if (side < 2 || side * side != n) {
    fail(ErrorCode::InvalidArgument, "bench size " + std::to_string(n) + " is not a square grid");
  }
  return side;
}

}  // namespace

std::vector<BenchRow> run_scaling_bench(const BenchOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<BenchRow> rows;

  for (int n : options.low_rank_sizes) {
    const int side = grid_side(n);
    const Instance inst = make_instance(side, options.feature_dim, options.classes, rng);
    BenchRow row{"low-rank", n, side};
    row.seconds_per_iteration = time_per_iteration(inst.transition, inst.g, options, row.iterations);
    rows.push_back(row);
  }
  fill_ratios(rows, 0);

  const std::size_t dense_first = rows.size();
  for (int n : options.dense_sizes) {
    const int side = grid_side(n);
    CompositeTransition dense;
    std::optional<LabelGenerator> g;
    {
      Instance inst = make_instance(side, options.feature_dim, options.classes, rng);
      dense = CompositeTransition(
          StochasticMatrix::from_normalized(DenseAffinity{inst.transition.to_dense()}));
      g.emplace(std::move(inst.g));
    }
    BenchRow row{"dense", n, side};
    row.seconds_per_iteration = time_per_iteration(dense, *g, options, row.iterations);
    rows.push_back(row);
  }
  fill_ratios(rows, dense_first);
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(8);
  out << "path,n,grid_side,iterations,seconds_per_iteration,ratio_vs_previous,per_doubling_ratio\n";
  for (const auto& r : rows) {
    out << r.path << ',' << r.n << ',' << r.grid_side << ',' << r.iterations << ','
        << r.seconds_per_iteration << ',' << r.ratio_vs_previous << ',' << r.per_doubling_ratio
        << '\n';
  }
  return out.str();
}

const BenchRow* find_bench_row(const std::vector<BenchRow>& rows, const std::string& path,
                               Index n) {
  for (const auto& r : rows) {
    if (r.path == path && r.n == n) return &r;
  }
  return nullptr;
}

}  // namespace rwseg
