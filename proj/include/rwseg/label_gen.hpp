#pragma once

#include <string>
#include <vector>

#include "rwseg/types.hpp"

namespace rwseg {

/// Row-stochastic node-to-label matrix G (N x K) with its class names.
class LabelGenerator {
 public:
  static constexpr double kRowSumTolerance = 1e-6;

  const Matrix& probabilities() const { return g_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  Index nodes() const { return g_.rows(); }
  Index classes() const { return g_.cols(); }
  /// Feature width used for the sqrt(D) temperature; 0 when G was given directly.
  Index scale_dim() const { return scale_dim_; }

  friend LabelGenerator cross_attention_g(const Matrix&, const Matrix&, std::vector<std::string>);
  friend LabelGenerator g_from_probabilities(const Matrix&, std::vector<std::string>);

 private:
  LabelGenerator(Matrix g, std::vector<std::string> names, Index scale_dim);

  Matrix g_;
  std::vector<std::string> class_names_;
  Index scale_dim_ = 0;
};

/// Row-wise softmax(Q K^T / sqrt(D)) of token queries against prompt keys.
/// Empty `class_names` yields "class_0", "class_1", ...
LabelGenerator cross_attention_g(const Matrix& token_queries, const Matrix& prompt_keys,
                                 std::vector<std::string> class_names = {});

/// Accepts precomputed per-node class probabilities (rows within 1e-4 of 1)
/// and renormalizes them exactly.
LabelGenerator g_from_probabilities(const Matrix& probs,
                                    std::vector<std::string> class_names = {});

}  // namespace rwseg
