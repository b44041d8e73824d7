#pragma once

// Naive reference implementations. Everything here is written with plain
// loops over matrix storage and no Eigen products or solvers, so it can act
// as an independent oracle for the engine.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rwseg/affinity.hpp"
#include "rwseg/label_gen.hpp"

namespace rwseg::reference {

Matrix matmul(const Matrix& a, const Matrix& b);

/// Entry (i, j) = <q_i, k_j> / (|q_i| |k_j|).
Matrix cosine_matrix(const Matrix& q, const Matrix& k);

/// sum_{t=0}^{terms} (1 - a) a^t S^t G.
Matrix power_series_walk(const Matrix& s, const Matrix& g, double alpha, int terms);

/// sum_{t=0}^{L} (1 - a) a^t S^t G / (1 - a^(L+1)), by explicit partial sums.
Matrix truncated_walk_series(const Matrix& s, const Matrix& g, double alpha, int steps);

/// L1 norm of (1 - a) sum_{t=L+1}^{max_terms} a^t S^t G. Summation stops
/// early once the remaining mass n * a^(t+1) is below 1e-18.
double truncated_tail_l1(const Matrix& s, const Matrix& g, double alpha, int steps,
                         int max_terms = 5000);

Matrix softmax_rows(const Matrix& scores);
double mean_row_entropy(const Matrix& p);
Matrix weighted_sum(const std::vector<Matrix>& terms, const std::vector<double>& weights);

/// Dense N x N matrix of an affinity representation, entry by entry.
Matrix materialize(const AffinityMatrix& a);
Matrix materialize(const CompositeTransition& c);

double max_abs_diff(const Matrix& a, const Matrix& b);
/// max_i |row_sum_i - target|
double max_row_sum_error(const Matrix& p, double target);

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

Matrix random_stochastic(Index rows, Index cols, std::mt19937_64& rng);
Matrix random_nonnegative(Index rows, Index cols, std::mt19937_64& rng);
Matrix random_gaussian(Index rows, Index cols, std::mt19937_64& rng);
HeadFeatures random_head(Index n, Index dim, std::mt19937_64& rng);

struct Factored {
  Matrix q_tilde;
  Matrix kmat;
};
/// Row-stochastic S = q_tilde * kmat^T built from positive random factors.
Factored random_factored_stochastic(Index n, Index rank, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Oracle-equivalence checks shared by the acceptance suite and `rwseg verify`.
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
  // Worst |row sum - 1| of every final probability matrix the check produced.
  double final_row_sum_error = 0.0;
  // Worst |row sum - (1 - a^(l+1))| over unnormalized iterates; -1 if none.
  double intermediate_row_sum_error = -1.0;
};

struct ExactnessParams {
  int instances = 100;
  int max_nodes = 64;
  int max_classes = 8;
  std::vector<double> alphas{0.5, 0.9};
  int series_terms = 500;
  double tolerance = 1e-6;
};
CheckResult check_exact_dense(const ExactnessParams& p, std::mt19937_64& rng);

struct TailParams {
  int instances_per_case = 3;
  int max_nodes = 32;
  int max_classes = 8;
  std::vector<int> steps{0, 3, 10, 50};
  std::vector<double> alphas{0.5, 0.9};
  double tolerance = 1e-9;
};
CheckResult check_tail_equality(const TailParams& p, std::mt19937_64& rng);

struct WoodburyParams {
  int instances = 20;
  int max_nodes = 256;
  int max_rank = 16;
  std::vector<double> alphas{0.5, 0.8, 0.9};
  double tolerance = 1e-6;
};
CheckResult check_woodbury(const WoodburyParams& p, std::mt19937_64& rng);

struct PathParams {
  int instances = 4;
  int grid_side = 16;  // N = grid_side^2 <= 256
  int heads = 4;
  int classes = 5;
  double beta = 0.5;
  double alpha = 0.9;
  int steps = 40;
  double tolerance = 1e-5;
};
CheckResult check_path_equivalence(const PathParams& p, std::mt19937_64& rng);

struct HeadWeightingParams {
  int vectors = 1000;
  double tolerance = 1e-9;
  double limit_tolerance = 1e-3;
};
CheckResult check_entropy_fusion(const HeadWeightingParams& p, std::mt19937_64& rng);

}  // namespace rwseg::reference
