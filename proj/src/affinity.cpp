#include "rwseg/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

constexpr double kMinNorm = 1e-12;
constexpr double kMinRowSum = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix normalized_rows(const Matrix& m, const char* which) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm >= kMinNorm)) {
      fail(ErrorCode::ZeroNormRow,
           std::string(which) + " row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

void check_head_shapes(const HeadFeatures& head) {
  if (head.queries.rows() != head.keys.rows() || head.queries.cols() != head.keys.cols()) {
    fail(ErrorCode::DimensionMismatch,
         "queries are " + std::to_string(head.queries.rows()) + "x" +
             std::to_string(head.queries.cols()) + " but keys are " +
             std::to_string(head.keys.rows()) + "x" + std::to_string(head.keys.cols()));
  }
  if (head.queries.cols() < 1) fail(ErrorCode::DimensionMismatch, "feature dimension is zero");
}

}  // namespace

void FeatureBundle::validate() const {
  if (grid_h < 2 || grid_w < 2) {
    fail(ErrorCode::GridMismatch,
         "grid must be at least 2x2, got " + std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  if (feature_dim < 1) fail(ErrorCode::InvalidArgument, "feature_dim must be >= 1");
  if (heads.empty()) fail(ErrorCode::InvalidArgument, "bundle has no heads");
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto& head = heads[h];
    for (const Matrix* m : {&head.queries, &head.keys}) {
      if (m->rows() != nodes() || m->cols() != feature_dim) {
        fail(ErrorCode::DimensionMismatch,
             "head " + std::to_string(h) + " has " + std::to_string(m->rows()) + "x" +
                 std::to_string(m->cols()) + " features, expected " + std::to_string(nodes()) +
                 "x" + std::to_string(feature_dim));
      }
      if (!m->allFinite()) {
        fail(ErrorCode::InvalidArgument, "head " + std::to_string(h) + " has non-finite features");
      }
    }
  }
}

double SparseLocalAffinity::at(Index row, Index col) const {
  for (Index k = row_ptr[row]; k < row_ptr[row + 1]; ++k) {
    if (cols[k] == col) return values[k];
  }
  return 0.0;
}

Index node_count(const AffinityMatrix& a) {
  return std::visit(overloaded{
                        [](const DenseAffinity& d) { return d.values.rows(); },
                        [](const LowRankAffinity& l) { return l.left.rows(); },
                        [](const SparseLocalAffinity& s) { return s.n; },
                    },
                    a);
}

const char* representation_name(const AffinityMatrix& a) {
  return std::visit(overloaded{
                        [](const DenseAffinity&) { return "dense"; },
                        [](const LowRankAffinity&) { return "low-rank"; },
                        [](const SparseLocalAffinity&) { return "sparse-local"; },
                    },
                    a);
}

Matrix to_dense(const AffinityMatrix& a) {
  return std::visit(overloaded{
                        [](const DenseAffinity& d) -> Matrix { return d.values; },
                        [](const LowRankAffinity& l) -> Matrix { return l.left * l.right.transpose(); },
                        [](const SparseLocalAffinity& s) -> Matrix {
                          Matrix out = Matrix::Zero(s.n, s.n);
                          for (Index i = 0; i < s.n; ++i) {
                            for (Index k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
                              out(i, s.cols[k]) += s.values[k];
                            }
                          }
                          return out;
                        },
                    },
                    a);
}

Vector row_sums(const AffinityMatrix& a) {
  return std::visit(overloaded{
                        [](const DenseAffinity& d) -> Vector { return d.values.rowwise().sum(); },
                        [](const LowRankAffinity& l) -> Vector {
                          // A 1 = L (R^T 1)
                          const Vector colsum = l.right.colwise().sum().transpose();
                          return l.left * colsum;
                        },
                        [](const SparseLocalAffinity& s) -> Vector {
                          Vector out = Vector::Zero(s.n);
                          for (Index i = 0; i < s.n; ++i) {
                            for (Index k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
                              out[i] += s.values[k];
                            }
                          }
                          return out;
                        },
                    },
                    a);
}

Matrix multiply(const AffinityMatrix& a, const Matrix& rhs) {
  if (node_count(a) != rhs.rows()) {
    fail(ErrorCode::DimensionMismatch, "transition has " + std::to_string(node_count(a)) +
                                           " nodes but operand has " +
                                           std::to_string(rhs.rows()) + " rows");
  }
  return std::visit(overloaded{
                        [&](const DenseAffinity& d) -> Matrix { return d.values * rhs; },
                        [&](const LowRankAffinity& l) -> Matrix {
                          // Bracket as L (R^T P): O(N r K) instead of O(N^2 K).
                          const Matrix core = l.right.transpose() * rhs;
                          return l.left * core;
                        },
                        [&](const SparseLocalAffinity& s) -> Matrix {
                          Matrix out = Matrix::Zero(s.n, rhs.cols());
                          for (Index i = 0; i < s.n; ++i) {
                            auto row = out.row(i);
                            for (Index k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
                              row.noalias() += s.values[k] * rhs.row(s.cols[k]);
                            }
                          }
                          return out;
                        },
                    },
                    a);
}

void scale_in_place(AffinityMatrix& a, double factor) {
  std::visit(overloaded{
                 [&](DenseAffinity& d) { d.values *= factor; },
                 [&](LowRankAffinity& l) { l.left *= factor; },
                 [&](SparseLocalAffinity& s) {
                   for (double& v : s.values) v *= factor;
                 },
             },
             a);
}

StochasticMatrix StochasticMatrix::from_normalized(AffinityMatrix rep, double tolerance) {
  const Vector sums = row_sums(rep);
  for (Index i = 0; i < sums.size(); ++i) {
    if (!(std::abs(sums[i] - 1.0) <= tolerance)) {
      fail(ErrorCode::NotAProbability,
           "row " + std::to_string(i) + " sums to " + std::to_string(sums[i]));
    }
  }
  const bool negative = std::visit(
      overloaded{
          [](const DenseAffinity& d) { return (d.values.array() < 0.0).any(); },
          // Entrywise sign of a factored matrix is not checkable in O(N r);
          // callers construct nonnegative factors (shift policy) instead.
          [](const LowRankAffinity&) { return false; },
          [](const SparseLocalAffinity& s) {
            return std::any_of(s.values.begin(), s.values.end(), [](double v) { return v < 0.0; });
          },
      },
      rep);
  if (negative) fail(ErrorCode::NotAProbability, "transition has negative entries");
  return StochasticMatrix(std::move(rep));
}

void FusionParams::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "beta must lie in [0, 1], got " + std::to_string(beta));
  }
  if (!(epsilon_self > 0.0)) {
    fail(ErrorCode::InvalidArgument,
         "epsilon_self must be positive, got " + std::to_string(epsilon_self));
  }
}

DenseAffinity global_affinity_dense(const HeadFeatures& head) {
  const LowRankAffinity f = global_affinity_factored(head);
  return DenseAffinity{f.left * f.right.transpose()};
}

LowRankAffinity global_affinity_factored(const HeadFeatures& head) {
  check_head_shapes(head);
  return LowRankAffinity{normalized_rows(head.queries, "query"),
                         normalized_rows(head.keys, "key")};
}

DenseAffinity clamp_nonnegative(DenseAffinity a) {
  a.values = a.values.cwiseMax(0.0);
  return a;
}

LowRankAffinity shift_to_unit_interval(const LowRankAffinity& a) {
  const Index n = a.left.rows();
  const Index r = a.left.cols();
  LowRankAffinity out{Matrix(n, r + 1), Matrix(a.right.rows(), r + 1)};
  out.left.leftCols(r) = 0.5 * a.left;
  out.left.col(r).setConstant(0.5);
  out.right.leftCols(r) = a.right;
  out.right.col(r).setOnes();
  return out;
}

DenseAffinity shift_to_unit_interval(const DenseAffinity& a) {
  return DenseAffinity{((a.values.array() + 1.0) * 0.5).matrix()};
}

AffinityMatrix global_affinity(const HeadFeatures& head, NonNegPolicy policy) {
  switch (policy) {
    case NonNegPolicy::Clamp: return clamp_nonnegative(global_affinity_dense(head));
    case NonNegPolicy::Shift: return shift_to_unit_interval(global_affinity_factored(head));
  }
  fail(ErrorCode::InvalidArgument, "unknown nonnegativity policy");
}

SparseLocalAffinity local_affinity(const HeadFeatures& head, int grid_h, int grid_w,
                                   double epsilon_self) {
  check_head_shapes(head);
  const Index n = head.queries.rows();
  if (grid_h < 1 || grid_w < 1 || Index(grid_h) * Index(grid_w) != n) {
    fail(ErrorCode::GridMismatch, "grid " + std::to_string(grid_h) + "x" +
                                      std::to_string(grid_w) + " does not cover " +
                                      std::to_string(n) + " nodes");
  }
  if (!(epsilon_self > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon_self must be positive");

  const Matrix q = normalized_rows(head.queries, "query");
  const Matrix k = normalized_rows(head.keys, "key");

  SparseLocalAffinity out;
  out.n = n;
  out.row_ptr.reserve(n + 1);
  out.cols.reserve(n * 9);
  out.values.reserve(n * 9);
  out.row_ptr.push_back(0);
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      const Index i = Index(y) * grid_w + x;
      // Row-major neighbor order keeps the column indices sorted.
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= grid_h || nx < 0 || nx >= grid_w) continue;
          const Index j = Index(ny) * grid_w + nx;
          out.cols.push_back(j);
          if (j == i) {
            out.values.push_back(epsilon_self);
          } else {
            out.values.push_back(std::max(0.0, q.row(i).dot(k.row(j))));
          }
        }
      }
      out.row_ptr.push_back(Index(out.cols.size()));
    }
  }
  return out;
}

StochasticMatrix row_normalize(const AffinityMatrix& a) {
  const Vector sums = row_sums(a);
  for (Index i = 0; i < sums.size(); ++i) {
    if (!(sums[i] >= kMinRowSum)) {
      fail(ErrorCode::DegenerateRow,
           "row " + std::to_string(i) + " sums to " + std::to_string(sums[i]));
    }
  }
  const Vector inv = sums.cwiseInverse();
  AffinityMatrix out = std::visit(
      overloaded{
          [&](const DenseAffinity& d) -> AffinityMatrix {
            if ((d.values.array() < 0.0).any()) {
              fail(ErrorCode::InvalidArgument, "dense affinity has negative entries; clamp first");
            }
            return DenseAffinity{inv.asDiagonal() * d.values};
          },
          [&](const LowRankAffinity& l) -> AffinityMatrix {
            return LowRankAffinity{inv.asDiagonal() * l.left, l.right};
          },
          [&](const SparseLocalAffinity& s) -> AffinityMatrix {
            SparseLocalAffinity r = s;
            for (Index i = 0; i < r.n; ++i) {
              for (Index k = r.row_ptr[i]; k < r.row_ptr[i + 1]; ++k) {
                if (r.values[k] < 0.0) {
                  fail(ErrorCode::InvalidArgument, "local affinity has negative entries");
                }
                r.values[k] *= inv[i];
              }
            }
            return r;
          },
      },
      a);
  return StochasticMatrix::from_normalized(std::move(out));
}

CompositeTransition::CompositeTransition(StochasticMatrix single) { add(1.0, std::move(single)); }

void CompositeTransition::add(double weight, StochasticMatrix matrix) {
  if (!(weight >= 0.0)) fail(ErrorCode::InvalidArgument, "composite weights must be nonnegative");
  if (!terms_.empty() && matrix.size() != size()) {
    fail(ErrorCode::DimensionMismatch, "composite terms have " + std::to_string(size()) +
                                           " and " + std::to_string(matrix.size()) + " nodes");
  }
  terms_.push_back(Term{weight, std::move(matrix)});
}

void CompositeTransition::add(double weight, const CompositeTransition& other) {
  for (const auto& t : other.terms()) add(weight * t.weight, t.matrix);
}

Index CompositeTransition::size() const { return terms_.empty() ? 0 : terms_.front().matrix.size(); }

double CompositeTransition::total_weight() const {
  double w = 0.0;
  for (const auto& t : terms_) w += t.weight;
  return w;
}

Matrix CompositeTransition::apply(const Matrix& p) const {
  if (terms_.empty()) fail(ErrorCode::InvalidArgument, "empty composite transition");
  Matrix out = Matrix::Zero(p.rows(), p.cols());
  for (const auto& t : terms_) {
    if (t.weight == 0.0) continue;
    out.noalias() += t.weight * t.matrix.apply(p);
  }
  return out;
}

Matrix CompositeTransition::to_dense() const {
  const Index n = size();
  Matrix out = Matrix::Zero(n, n);
  for (const auto& t : terms_) out += t.weight * t.matrix.to_dense();
  return out;
}

CompositeTransition fuse(const StochasticMatrix& s_global, const StochasticMatrix& s_local,
                         double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "beta must lie in [0, 1], got " + std::to_string(beta));
  }
  if (s_global.size() != s_local.size()) {
    fail(ErrorCode::DimensionMismatch, "global has " + std::to_string(s_global.size()) +
                                           " nodes, local has " + std::to_string(s_local.size()));
  }
  CompositeTransition out;
  if (beta > 0.0) out.add(beta, s_global);
  if (beta < 1.0) out.add(1.0 - beta, s_local);
  return out;
}

}  // namespace rwseg
