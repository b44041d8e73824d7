#pragma once

#include <string>
#include <variant>
#include <vector>

#include "rwseg/types.hpp"

namespace rwseg {

/// Query/key projections of one attention head, one row per grid node.
struct HeadFeatures {
  Matrix queries;
  Matrix keys;
  int layer_index = 0;
  int head_index = 0;
};

/// Per-head features of one image together with the patch-grid geometry.
struct FeatureBundle {
  std::vector<HeadFeatures> heads;
  int grid_h = 0;
  int grid_w = 0;
  int feature_dim = 0;
  std::string source_tag;

  Index nodes() const { return Index(grid_h) * Index(grid_w); }

  // Throws GridMismatch / DimensionMismatch / InvalidArgument.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Affinity representations. None of these carries a stochasticity guarantee;
// StochasticMatrix below does.
// ---------------------------------------------------------------------------

struct DenseAffinity {
  Matrix values;
};

/// A = left * right^T, never materialized unless asked for.
struct LowRankAffinity {
  Matrix left;
  Matrix right;
};

/// CSR storage of an 8-connected grid affinity; the diagonal is always stored.
struct SparseLocalAffinity {
  Index n = 0;
  std::vector<Index> row_ptr;
  std::vector<Index> cols;
  std::vector<double> values;

  Index row_entries(Index row) const { return row_ptr[row + 1] - row_ptr[row]; }
  double at(Index row, Index col) const;
};

using AffinityMatrix = std::variant<DenseAffinity, LowRankAffinity, SparseLocalAffinity>;

Index node_count(const AffinityMatrix& a);
Matrix to_dense(const AffinityMatrix& a);
Vector row_sums(const AffinityMatrix& a);
/// a * rhs without forming a dense N x N matrix for the factored/sparse cases.
Matrix multiply(const AffinityMatrix& a, const Matrix& rhs);
void scale_in_place(AffinityMatrix& a, double factor);
const char* representation_name(const AffinityMatrix& a);

/// Row-stochastic transition matrix. Only constructible through
/// row_normalize() or from_normalized(), both of which check the row sums.
class StochasticMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-6;

  /// Wraps an already-normalized representation after checking it.
  static StochasticMatrix from_normalized(AffinityMatrix rep,
                                          double tolerance = kRowSumTolerance);

  const AffinityMatrix& representation() const { return rep_; }
  Index size() const { return node_count(rep_); }
  Matrix apply(const Matrix& p) const { return multiply(rep_, p); }
  Matrix to_dense() const { return rwseg::to_dense(rep_); }

 private:
  explicit StochasticMatrix(AffinityMatrix rep) : rep_(std::move(rep)) {}
  AffinityMatrix rep_;
};

struct FusionParams {
  double beta = 0.5;
  double epsilon_self = 1e-2;

  void validate() const;
};

/// How negative cosine affinities are made admissible for a random walk.
enum class NonNegPolicy {
  Clamp,  // max(0, cos); dense only
  Shift,  // (cos + 1) / 2; keeps an exact rank D+1 factorization
};

// Raw cosine affinities of one head.
DenseAffinity global_affinity_dense(const HeadFeatures& head);
/// Row-wise L2-normalized Q and K; their product is the dense cosine matrix.
LowRankAffinity global_affinity_factored(const HeadFeatures& head);

DenseAffinity clamp_nonnegative(DenseAffinity a);
/// Folds (x + 1) / 2 into the factors: left = [L | 1] / 2, right = [R | 1].
LowRankAffinity shift_to_unit_interval(const LowRankAffinity& a);
DenseAffinity shift_to_unit_interval(const DenseAffinity& a);

/// Global affinity with the nonnegativity policy applied: Clamp yields a
/// dense matrix, Shift a low-rank one.
AffinityMatrix global_affinity(const HeadFeatures& head, NonNegPolicy policy);

/// Sparse 8-connected affinity: epsilon_self on the diagonal, clamped
/// neighbor cosines off the diagonal, non-periodic boundaries.
SparseLocalAffinity local_affinity(const HeadFeatures& head, int grid_h, int grid_w,
                                   double epsilon_self);

/// Divides every row by its sum, preserving the representation. For the
/// low-rank case the inverse row sums are folded into the left factor.
StochasticMatrix row_normalize(const AffinityMatrix& a);

/// Weighted sum of stochastic matrices, applied term by term.
class CompositeTransition {
 public:
  struct Term {
    double weight;
    StochasticMatrix matrix;
  };

  CompositeTransition() = default;
  explicit CompositeTransition(StochasticMatrix single);

  void add(double weight, StochasticMatrix matrix);
  void add(double weight, const CompositeTransition& other);

  const std::vector<Term>& terms() const { return terms_; }
  Index size() const;
  double total_weight() const;

  Matrix apply(const Matrix& p) const;
  Matrix to_dense() const;

 private:
  std::vector<Term> terms_;
};

/// beta * s_global + (1 - beta) * s_local, kept as a weighted pair.
CompositeTransition fuse(const StochasticMatrix& s_global, const StochasticMatrix& s_local,
                         double beta);

}  // namespace rwseg
