#include "rwseg/label_gen.hpp"

#include <cmath>
#include <string>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

std::vector<std::string> resolve_names(std::vector<std::string> names, Index k) {
  if (names.empty()) {
    names.reserve(k);
    for (Index c = 0; c < k; ++c) names.push_back("class_" + std::to_string(c));
  }
  if (Index(names.size()) != k) {
    fail(ErrorCode::DimensionMismatch, std::to_string(names.size()) + " class names for " +
                                           std::to_string(k) + " classes");
  }
  return names;
}

}  // namespace

LabelGenerator::LabelGenerator(Matrix g, std::vector<std::string> names, Index scale_dim)
    : g_(std::move(g)), class_names_(std::move(names)), scale_dim_(scale_dim) {
  if (g_.cols() < 1) fail(ErrorCode::DimensionMismatch, "label generator needs K >= 1");
  for (Index i = 0; i < g_.rows(); ++i) {
    const double s = g_.row(i).sum();
    if (!(std::abs(s - 1.0) <= kRowSumTolerance) || (g_.row(i).array() < 0.0).any()) {
      fail(ErrorCode::NotAProbability, "row " + std::to_string(i) + " of G is not a distribution");
    }
  }
}

LabelGenerator cross_attention_g(const Matrix& token_queries, const Matrix& prompt_keys,
                                 std::vector<std::string> class_names) {
  if (token_queries.cols() != prompt_keys.cols() || token_queries.cols() < 1) {
    fail(ErrorCode::DimensionMismatch,
         "token queries have width " + std::to_string(token_queries.cols()) +
             ", prompt keys have width " + std::to_string(prompt_keys.cols()));
  }
  if (prompt_keys.rows() < 1) fail(ErrorCode::DimensionMismatch, "no prompt keys");
  if (!token_queries.allFinite() || !prompt_keys.allFinite()) {
    fail(ErrorCode::InvalidArgument, "non-finite cross-attention inputs");
  }
  const Index d = token_queries.cols();
  Matrix g = (token_queries * prompt_keys.transpose()) / std::sqrt(double(d));
  for (Index i = 0; i < g.rows(); ++i) {
    auto row = g.row(i);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  auto names = resolve_names(std::move(class_names), prompt_keys.rows());
  return LabelGenerator(std::move(g), std::move(names), d);
}

LabelGenerator g_from_probabilities(const Matrix& probs, std::vector<std::string> class_names) {
  if (probs.cols() < 1) fail(ErrorCode::DimensionMismatch, "probabilities need K >= 1");
  Matrix g = probs;
  for (Index i = 0; i < g.rows(); ++i) {
    auto row = g.row(i);
    if (!row.allFinite()) {
      fail(ErrorCode::NotAProbability, "row " + std::to_string(i) + " has non-finite entries");
    }
    if ((row.array() < -1e-9).any()) {
      fail(ErrorCode::NotAProbability, "row " + std::to_string(i) + " has a negative entry");
    }
    const double s = row.sum();
    if (std::abs(s - 1.0) > 1e-4) {
      fail(ErrorCode::NotAProbability,
           "row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
    row = row.cwiseMax(0.0);
    row /= row.sum();
  }
  auto names = resolve_names(std::move(class_names), probs.cols());
  return LabelGenerator(std::move(g), std::move(names), 0);
}

}  // namespace rwseg
