#include "rwseg/entropy_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

void check_operands(Index transition_nodes, const LabelGenerator& g) {
  if (transition_nodes != g.nodes()) {
    fail(ErrorCode::DimensionMismatch, "transition has " + std::to_string(transition_nodes) +
                                           " nodes, G has " + std::to_string(g.nodes()) + " rows");
  }
}

void check_weights(std::size_t heads, std::span<const double> weights) {
  if (heads == 0) fail(ErrorCode::InvalidArgument, "no heads to fuse");
  if (weights.size() != heads) {
    fail(ErrorCode::DimensionMismatch,
         std::to_string(weights.size()) + " weights for " + std::to_string(heads) + " heads");
  }
}

}  // namespace

Matrix one_step_probs(const StochasticMatrix& s_head, const LabelGenerator& g) {
  check_operands(s_head.size(), g);
  return s_head.apply(g.probabilities());
}

Matrix one_step_probs(const CompositeTransition& s_head, const LabelGenerator& g) {
  check_operands(s_head.size(), g);
  return s_head.apply(g.probabilities());
}

double head_entropy(const Matrix& p) {
  if (p.rows() == 0) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index k = 0; k < p.cols(); ++k) {
      const double v = p(i, k);
      if (v > 0.0) total -= v * std::log(v);
    }
  }
  return std::max(0.0, total / double(p.rows()));
}

std::vector<double> head_weights(std::span<const double> entropies, double c) {
  if (!(c > 0.0)) fail(ErrorCode::InvalidArgument, "temperature c must be positive");
  if (entropies.empty()) return {};
  for (double h : entropies) {
    if (!std::isfinite(h)) fail(ErrorCode::InvalidArgument, "non-finite entropy");
  }
  const double min_h = *std::min_element(entropies.begin(), entropies.end());
  std::vector<double> w(entropies.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-c * (entropies[i] - min_h));
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

HeadWeighting weigh_heads(std::span<const CompositeTransition> heads, const LabelGenerator& g,
                          double c) {
  HeadWeighting out;
  out.temperature = c;
  out.entropies.reserve(heads.size());
  for (const auto& h : heads) out.entropies.push_back(head_entropy(one_step_probs(h, g)));
  out.weights = head_weights(out.entropies, c);
  return out;
}

AffinityMatrix fuse_heads(std::span<const AffinityMatrix> heads, std::span<const double> weights) {
  check_weights(heads.size(), weights);
  const Index n = node_count(heads.front());
  const auto kind = heads.front().index();
  for (const auto& h : heads) {
    if (h.index() != kind) {
      fail(ErrorCode::MixedRepresentation, std::string("cannot fuse ") +
                                               representation_name(heads.front()) + " with " +
                                               representation_name(h) + " heads");
    }
    if (node_count(h) != n) fail(ErrorCode::DimensionMismatch, "heads differ in node count");
  }

  if (std::holds_alternative<DenseAffinity>(heads.front())) {
    DenseAffinity out{Matrix::Zero(n, n)};
    for (std::size_t h = 0; h < heads.size(); ++h) {
      out.values += weights[h] * std::get<DenseAffinity>(heads[h]).values;
    }
    return out;
  }

  if (const auto* first = std::get_if<SparseLocalAffinity>(&heads.front())) {
    SparseLocalAffinity out = *first;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const auto& s = std::get<SparseLocalAffinity>(heads[h]);
      if (s.row_ptr != out.row_ptr || s.cols != out.cols) {
        fail(ErrorCode::DimensionMismatch, "sparse heads have different neighborhood structure");
      }
      for (std::size_t k = 0; k < s.values.size(); ++k) out.values[k] += weights[h] * s.values[k];
    }
    return out;
  }

  Index rank = 0;
  for (const auto& h : heads) rank += std::get<LowRankAffinity>(h).left.cols();
  LowRankAffinity out{Matrix(n, rank), Matrix(n, rank)};
  Index offset = 0;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto& l = std::get<LowRankAffinity>(heads[h]);
    out.left.middleCols(offset, l.left.cols()) = weights[h] * l.left;
    out.right.middleCols(offset, l.right.cols()) = l.right;
    offset += l.left.cols();
  }
  return out;
}

CompositeTransition fuse_transitions(std::span<const CompositeTransition> heads,
                                     std::span<const double> weights) {
  check_weights(heads.size(), weights);
  CompositeTransition out;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (weights[h] == 0.0) continue;
    out.add(weights[h], heads[h]);
  }
  if (out.terms().empty()) fail(ErrorCode::InvalidArgument, "all head weights are zero");
  return out;
}

}  // namespace rwseg
