#pragma once

#include <span>
#include <vector>

#include "rwseg/affinity.hpp"
#include "rwseg/label_gen.hpp"

namespace rwseg {

/// Per-head confidence scores and the resulting fusion weights.
struct HeadWeighting {
  std::vector<double> entropies;  // nats
  std::vector<double> weights;
  double temperature = 1.0;
};

/// S G for a single head's transition.
Matrix one_step_probs(const StochasticMatrix& s_head, const LabelGenerator& g);
Matrix one_step_probs(const CompositeTransition& s_head, const LabelGenerator& g);

/// Mean row entropy in nats, with 0 log 0 = 0.
double head_entropy(const Matrix& p);

/// softmax(-c * entropies), evaluated with max-subtraction.
std::vector<double> head_weights(std::span<const double> entropies, double c);

/// Scores every head and returns entropies plus weights.
HeadWeighting weigh_heads(std::span<const CompositeTransition> heads, const LabelGenerator& g,
                          double c);

/// Weighted sum of raw per-head affinities. Dense and sparse heads are summed
/// entrywise; low-rank heads are concatenated as [w_1 L_1 | ... ][R_1 | ... ]^T
/// so products still cost sum_h O(N r_h K).
AffinityMatrix fuse_heads(std::span<const AffinityMatrix> heads, std::span<const double> weights);

/// sum_h w_h S^(h) over per-head transitions.
CompositeTransition fuse_transitions(std::span<const CompositeTransition> heads,
                                     std::span<const double> weights);

}  // namespace rwseg
