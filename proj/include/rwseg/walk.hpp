#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "rwseg/affinity.hpp"
#include "rwseg/label_gen.hpp"

namespace rwseg {

enum class WalkMode { ExactDense, ExactWoodbury, TruncatedIterative };

std::string_view to_string(WalkMode mode);
WalkMode parse_walk_mode(std::string_view text);

struct WalkConfig {
  double alpha = 0.9;  // probability of taking another step
  int steps = 40;
  FusionParams fusion;
  double temperature = 1.0;  // c in the head weighting softmax
  double residual_tolerance = 1e-3;
  WalkMode mode = WalkMode::TruncatedIterative;

  void validate() const;
};

struct LabelProbabilities {
  Matrix p;
  int steps_used = 0;
  double residual_bound_value = 0.0;  // N * alpha^(L+1); 0 for exact modes
};

/// P = (1 - alpha) (I - alpha S)^-1 G via an LU solve of the N x N system.
LabelProbabilities exact_walk_dense(const Matrix& s, const LabelGenerator& g, double alpha);
LabelProbabilities exact_walk_dense(const StochasticMatrix& s, const LabelGenerator& g,
                                    double alpha);

/// Same result for S = q_tilde * kmat^T, solving only an r x r core system:
///   (I - a Q K^T)^-1 = I + a Q (I_r - a K^T Q)^-1 K^T.
LabelProbabilities exact_walk_woodbury(const Matrix& q_tilde, const Matrix& kmat,
                                       const LabelGenerator& g, double alpha);

/// Receives the unnormalized iterate after every step (step 0 included).
using IterateObserver = std::function<void(int step, const Matrix& unnormalized)>;

/// Iterates P~ <- (1 - a) G + a S P~ from P~ = (1 - a) G for cfg.steps steps
/// and rescales once by 1 / (1 - a^(L+1)).
LabelProbabilities truncated_walk(const CompositeTransition& s, const LabelGenerator& g,
                                  const WalkConfig& cfg, const IterateObserver& observer = {});

/// L1 norm of the truncated tail: n * alpha^(L+1).
double residual_l1(double alpha, int steps, Index n);

/// Smallest L >= 0 with n * alpha^(L+1) <= tol.
int steps_for_tolerance(double alpha, Index n, double tol);

/// Per-node class indices on the patch grid, row-major.
struct ClassMask {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(int y, int x) const { return labels[std::size_t(y) * grid_w + x]; }
};

/// Row-wise argmax; ties go to the lowest class index.
ClassMask argmax_mask(const Matrix& p, int grid_h, int grid_w);
inline ClassMask argmax_mask(const LabelProbabilities& p, int grid_h, int grid_w) {
  return argmax_mask(p.p, grid_h, grid_w);
}

/// Fraction of nodes whose label differs between two masks of equal size.
double changed_fraction(const ClassMask& a, const ClassMask& b);

/// Nearest-neighbor resize of a grid mask to image resolution.
ClassMask upsample_nearest(const ClassMask& mask, int height, int width);

}  // namespace rwseg
