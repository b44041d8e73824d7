#include "rwseg/walk.hpp"

#include <cmath>
#include <string>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

constexpr double kMinReciprocalCondition = 1e-13;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

void check_rows(Index nodes, const LabelGenerator& g) {
  if (nodes != g.nodes()) {
    fail(ErrorCode::DimensionMismatch, "transition has " + std::to_string(nodes) +
                                           " nodes, G has " + std::to_string(g.nodes()) + " rows");
  }
}

}  // namespace

std::string_view to_string(WalkMode mode) {
  switch (mode) {
    case WalkMode::ExactDense: return "exact-dense";
    case WalkMode::ExactWoodbury: return "exact-woodbury";
    case WalkMode::TruncatedIterative: return "truncated";
  }
  return "unknown";
}

WalkMode parse_walk_mode(std::string_view text) {
  if (text == "exact-dense") return WalkMode::ExactDense;
  if (text == "exact-woodbury") return WalkMode::ExactWoodbury;
  if (text == "truncated") return WalkMode::TruncatedIterative;
  fail(ErrorCode::InvalidArgument, "unknown walk mode '" + std::string(text) + "'");
}

void WalkConfig::validate() const {
  check_alpha(alpha);
  if (steps < 0) fail(ErrorCode::InvalidArgument, "steps must be >= 0");
  fusion.validate();
  if (!(temperature > 0.0)) fail(ErrorCode::InvalidArgument, "temperature c must be positive");
  if (!(residual_tolerance > 0.0)) {
    fail(ErrorCode::InvalidArgument, "residual tolerance must be positive");
  }
}

LabelProbabilities exact_walk_dense(const Matrix& s, const LabelGenerator& g, double alpha) {
  check_alpha(alpha);
  if (s.rows() != s.cols()) fail(ErrorCode::DimensionMismatch, "transition is not square");
  check_rows(s.rows(), g);
  const Index n = s.rows();
  const Matrix system = Matrix::Identity(n, n) - alpha * s;
  const Eigen::PartialPivLU<Matrix> lu(system);
  if (!(lu.rcond() > kMinReciprocalCondition)) {
    fail(ErrorCode::SingularSystem, "I - alpha S has reciprocal condition " +
                                        std::to_string(lu.rcond()));
  }
  LabelProbabilities out;
  out.p = lu.solve((1.0 - alpha) * g.probabilities());
  return out;
}

LabelProbabilities exact_walk_dense(const StochasticMatrix& s, const LabelGenerator& g,
                                    double alpha) {
  return exact_walk_dense(s.to_dense(), g, alpha);
}

LabelProbabilities exact_walk_woodbury(const Matrix& q_tilde, const Matrix& kmat,
                                       const LabelGenerator& g, double alpha) {
  check_alpha(alpha);
  if (q_tilde.rows() != kmat.rows() || q_tilde.cols() != kmat.cols()) {
    fail(ErrorCode::DimensionMismatch, "factor shapes differ");
  }
  check_rows(q_tilde.rows(), g);
  const Index r = q_tilde.cols();
  const Matrix& gp = g.probabilities();

  // core = I_r - alpha K^T Q~  (r x r)
  const Matrix core = Matrix::Identity(r, r) - alpha * (kmat.transpose() * q_tilde);
  const Eigen::PartialPivLU<Matrix> lu(core);
  if (!(lu.rcond() > kMinReciprocalCondition)) {
    fail(ErrorCode::SingularSystem, "Woodbury core has reciprocal condition " +
                                        std::to_string(lu.rcond()));
  }
  const Matrix projected = kmat.transpose() * gp;  // r x K
  const Matrix correction = q_tilde * lu.solve(projected);
  LabelProbabilities out;
  out.p = (1.0 - alpha) * (gp + alpha * correction);
  return out;
}

LabelProbabilities truncated_walk(const CompositeTransition& s, const LabelGenerator& g,
                                  const WalkConfig& cfg, const IterateObserver& observer) {
  cfg.validate();
  check_rows(s.size(), g);
  const double alpha = cfg.alpha;
  const Matrix base = (1.0 - alpha) * g.probabilities();

  Matrix p = base;
  if (observer) observer(0, p);
  for (int step = 1; step <= cfg.steps; ++step) {
    Matrix next = s.apply(p);
    next *= alpha;
    next += base;
    if (!next.allFinite()) {
      fail(ErrorCode::NonFiniteIterate, "iterate " + std::to_string(step) + " is not finite");
    }
    p = std::move(next);
    if (observer) observer(step, p);
  }

  LabelProbabilities out;
  // With no steps the rescale cancels (1 - alpha); return G bit-exactly.
  out.p = cfg.steps == 0 ? g.probabilities() : Matrix(p / (1.0 - std::pow(alpha, cfg.steps + 1)));
  out.steps_used = cfg.steps;
  out.residual_bound_value = residual_l1(alpha, cfg.steps, s.size());
  return out;
}

double residual_l1(double alpha, int steps, Index n) {
  return double(n) * std::pow(alpha, steps + 1);
}

int steps_for_tolerance(double alpha, Index n, double tol) {
  check_alpha(alpha);
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tolerance must be positive");
  if (n < 1) fail(ErrorCode::InvalidArgument, "node count must be positive");
  const double estimate = std::ceil(std::log(tol / double(n)) / std::log(alpha)) - 1.0;
  int steps = estimate > 0.0 ? int(estimate) : 0;
  // Correct for rounding in the logarithms.
  while (steps > 0 && residual_l1(alpha, steps - 1, n) <= tol) --steps;
  while (residual_l1(alpha, steps, n) > tol) ++steps;
  return steps;
}

ClassMask argmax_mask(const Matrix& p, int grid_h, int grid_w) {
  if (grid_h < 1 || grid_w < 1 || Index(grid_h) * Index(grid_w) != p.rows()) {
    fail(ErrorCode::GridMismatch, "grid " + std::to_string(grid_h) + "x" +
                                      std::to_string(grid_w) + " does not match " +
                                      std::to_string(p.rows()) + " rows");
  }
  ClassMask mask{grid_h, grid_w, std::vector<std::uint32_t>(std::size_t(p.rows()))};
  for (Index i = 0; i < p.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < p.cols(); ++k) {
      if (p(i, k) > p(i, best)) best = k;
    }
    mask.labels[std::size_t(i)] = std::uint32_t(best);
  }
  return mask;
}

double changed_fraction(const ClassMask& a, const ClassMask& b) {
  if (a.labels.size() != b.labels.size()) fail(ErrorCode::DimensionMismatch, "mask sizes differ");
  if (a.labels.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) changed += a.labels[i] != b.labels[i];
  return double(changed) / double(a.labels.size());
}

ClassMask upsample_nearest(const ClassMask& mask, int height, int width) {
  if (height < 1 || width < 1) fail(ErrorCode::InvalidArgument, "target size must be positive");
  ClassMask out{height, width, std::vector<std::uint32_t>(std::size_t(height) * width)};
  for (int y = 0; y < height; ++y) {
    const int sy = int((std::int64_t(y) * mask.grid_h) / height);
    for (int x = 0; x < width; ++x) {
      const int sx = int((std::int64_t(x) * mask.grid_w) / width);
      out.labels[std::size_t(y) * width + x] = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace rwseg
