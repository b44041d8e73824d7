#include "rwseg/reference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rwseg/entropy_fusion.hpp"
#include "rwseg/error.hpp"
#include "rwseg/walk.hpp"

namespace rwseg::reference {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Index uniform_index(Index lo, Index hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(3);
  out << std::scientific << v;
  return out.str();
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorCode::DimensionMismatch, "matmul shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix cosine_matrix(const Matrix& q, const Matrix& k) {
  Matrix out(q.rows(), k.rows());
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0, nq = 0.0, nk = 0.0;
      for (Index d = 0; d < q.cols(); ++d) {
        dot += q(i, d) * k(j, d);
        nq += q(i, d) * q(i, d);
        nk += k(j, d) * k(j, d);
      }
      out(i, j) = dot / (std::sqrt(nq) * std::sqrt(nk));
    }
  }
  return out;
}

Matrix power_series_walk(const Matrix& s, const Matrix& g, double alpha, int terms) {
  Matrix term = g;  // S^t G
  Matrix sum = (1.0 - alpha) * g;
  double weight = 1.0 - alpha;
  for (int t = 1; t <= terms; ++t) {
    term = matmul(s, term);
    weight *= alpha;
    sum += weight * term;
  }
  return sum;
}

Matrix truncated_walk_series(const Matrix& s, const Matrix& g, double alpha, int steps) {
  Matrix sum = power_series_walk(s, g, alpha, steps);
  return sum / (1.0 - std::pow(alpha, steps + 1));
}

double truncated_tail_l1(const Matrix& s, const Matrix& g, double alpha, int steps,
                         int max_terms) {
  Matrix term = g;
  double weight = 1.0 - alpha;
  double total = 0.0;
  const double n = double(s.rows());
  for (int t = 1; t <= max_terms; ++t) {
    term = matmul(s, term);
    weight *= alpha;
    if (t > steps) {
      double l1 = 0.0;
      for (Index i = 0; i < term.rows(); ++i) {
        for (Index k = 0; k < term.cols(); ++k) l1 += std::abs(term(i, k));
      }
      total += weight * l1;
      if (n * std::pow(alpha, t + 1) < 1e-18) break;
    }
  }
  return total;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    double mx = scores(i, 0);
    for (Index k = 1; k < scores.cols(); ++k) mx = std::max(mx, scores(i, k));
    double z = 0.0;
    for (Index k = 0; k < scores.cols(); ++k) z += std::exp(scores(i, k) - mx);
    for (Index k = 0; k < scores.cols(); ++k) out(i, k) = std::exp(scores(i, k) - mx) / z;
  }
  return out;
}

double mean_row_entropy(const Matrix& p) {
  double total = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index k = 0; k < p.cols(); ++k) {
      if (p(i, k) > 0.0) total += -p(i, k) * std::log(p(i, k));
    }
  }
  return total / double(p.rows());
}

Matrix weighted_sum(const std::vector<Matrix>& terms, const std::vector<double>& weights) {
  Matrix out = Matrix::Zero(terms.front().rows(), terms.front().cols());
  for (std::size_t h = 0; h < terms.size(); ++h) {
    for (Index i = 0; i < out.rows(); ++i) {
      for (Index j = 0; j < out.cols(); ++j) out(i, j) += weights[h] * terms[h](i, j);
    }
  }
  return out;
}

Matrix materialize(const AffinityMatrix& a) {
  if (const auto* d = std::get_if<DenseAffinity>(&a)) return d->values;
  if (const auto* l = std::get_if<LowRankAffinity>(&a)) {
    Matrix out(l->left.rows(), l->right.rows());
    for (Index i = 0; i < out.rows(); ++i) {
      for (Index j = 0; j < out.cols(); ++j) {
        double acc = 0.0;
        for (Index r = 0; r < l->left.cols(); ++r) acc += l->left(i, r) * l->right(j, r);
        out(i, j) = acc;
      }
    }
    return out;
  }
  const auto& s = std::get<SparseLocalAffinity>(a);
  Matrix out = Matrix::Zero(s.n, s.n);
  for (Index i = 0; i < s.n; ++i) {
    for (Index k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) out(i, s.cols[k]) += s.values[k];
  }
  return out;
}

Matrix materialize(const CompositeTransition& c) {
  std::vector<Matrix> dense;
  std::vector<double> weights;
  for (const auto& t : c.terms()) {
    dense.push_back(materialize(t.matrix.representation()));
    weights.push_back(t.weight);
  }
  return weighted_sum(dense, weights);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  }
  return worst;
}

double max_row_sum_error(const Matrix& p, double target) {
  double worst = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (Index j = 0; j < p.cols(); ++j) s += p(i, j);
    worst = std::max(worst, std::abs(s - target));
  }
  return worst;
}

Matrix random_nonnegative(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

Matrix random_stochastic(Index rows, Index cols, std::mt19937_64& rng) {
  Matrix m = random_nonnegative(rows, cols, rng);
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    for (Index j = 0; j < cols; ++j) s += m(i, j);
    for (Index j = 0; j < cols; ++j) m(i, j) /= s;
  }
  return m;
}

Matrix random_gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

HeadFeatures random_head(Index n, Index dim, std::mt19937_64& rng) {
  HeadFeatures h;
  h.queries = random_gaussian(n, dim, rng);
  h.keys = random_gaussian(n, dim, rng);
  return h;
}

Factored random_factored_stochastic(Index n, Index rank, std::mt19937_64& rng) {
  Factored f{random_nonnegative(n, rank, rng), random_nonnegative(n, rank, rng)};
  // Row sums of Q K^T are q_i . (K^T 1).
  std::vector<double> colsum(std::size_t(rank), 0.0);
  for (Index j = 0; j < n; ++j) {
    for (Index r = 0; r < rank; ++r) colsum[std::size_t(r)] += f.kmat(j, r);
  }
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index r = 0; r < rank; ++r) s += f.q_tilde(i, r) * colsum[std::size_t(r)];
    for (Index r = 0; r < rank; ++r) f.q_tilde(i, r) /= s;
  }
  return f;
}

CheckResult check_exact_dense(const ExactnessParams& p, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = "exact_walk_dense vs power series";
  r.tolerance = p.tolerance;
  for (int inst = 0; inst < p.instances; ++inst) {
    const Index n = uniform_index(2, p.max_nodes, rng);
    const Index k = uniform_index(1, p.max_classes, rng);
    const double alpha = p.alphas[std::size_t(inst) % p.alphas.size()];
    const Matrix s = random_stochastic(n, n, rng);
    const LabelGenerator g = g_from_probabilities(random_stochastic(n, k, rng));
    const LabelProbabilities exact = exact_walk_dense(s, g, alpha);
    const Matrix series = power_series_walk(s, g.probabilities(), alpha, p.series_terms);
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(exact.p, series));
    r.final_row_sum_error = std::max(r.final_row_sum_error, max_row_sum_error(exact.p, 1.0));
  }
  r.seconds = seconds_since(t0);
  r.passed = r.max_deviation <= r.tolerance;
  r.detail = std::to_string(p.instances) + " instances, N<=" + std::to_string(p.max_nodes) +
             ", K<=" + std::to_string(p.max_classes) + ", " + std::to_string(p.series_terms) +
             "-term series";
  return r;
}

CheckResult check_tail_equality(const TailParams& p, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = "truncated tail L1 == N alpha^(L+1)";
  r.tolerance = p.tolerance;
  int cases = 0;
  for (double alpha : p.alphas) {
    for (int steps : p.steps) {
      for (int inst = 0; inst < p.instances_per_case; ++inst) {
        const Index n = uniform_index(2, p.max_nodes, rng);
        const Index k = uniform_index(1, p.max_classes, rng);
        const Matrix s = random_stochastic(n, n, rng);
        const Matrix g = random_stochastic(n, k, rng);
        const double measured = truncated_tail_l1(s, g, alpha, steps);
        r.max_deviation = std::max(r.max_deviation, std::abs(measured - residual_l1(alpha, steps, n)));
        ++cases;
      }
    }
  }
  r.seconds = seconds_since(t0);
  r.passed = r.max_deviation <= r.tolerance;
  r.detail = std::to_string(cases) + " cases, N<=" + std::to_string(p.max_nodes);
  return r;
}

CheckResult check_woodbury(const WoodburyParams& p, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = "exact_walk_woodbury vs exact_walk_dense";
  r.tolerance = p.tolerance;
  Index largest_core = 0;
  for (int inst = 0; inst < p.instances; ++inst) {
    const Index n = uniform_index(std::max<Index>(2, p.max_nodes / 4), p.max_nodes, rng);
    const Index k = uniform_index(1, 8, rng);
    const double alpha = p.alphas[std::size_t(inst) % p.alphas.size()];
    Matrix q_tilde, kmat;
    if (inst % 2 == 0) {
      const Index rank = uniform_index(1, p.max_rank, rng);
      auto f = random_factored_stochastic(n, rank, rng);
      q_tilde = std::move(f.q_tilde);
      kmat = std::move(f.kmat);
    } else {
      // Shifted cosine factors of random features: rank dim + 1 <= max_rank.
      const Index dim = uniform_index(1, p.max_rank - 1, rng);
      const StochasticMatrix s = row_normalize(
          shift_to_unit_interval(global_affinity_factored(random_head(n, dim, rng))));
      const auto& l = std::get<LowRankAffinity>(s.representation());
      q_tilde = l.left;
      kmat = l.right;
    }
    largest_core = std::max(largest_core, q_tilde.cols());
    const LabelGenerator g = g_from_probabilities(random_stochastic(n, k, rng));
    const LabelProbabilities fast = exact_walk_woodbury(q_tilde, kmat, g, alpha);
    const LabelProbabilities dense = exact_walk_dense(matmul(q_tilde, kmat.transpose()), g, alpha);
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(fast.p, dense.p));
    r.final_row_sum_error = std::max(r.final_row_sum_error, max_row_sum_error(fast.p, 1.0));
  }
  r.seconds = seconds_since(t0);
  r.passed = r.max_deviation <= r.tolerance;
  r.detail = std::to_string(p.instances) + " instances, N<=" + std::to_string(p.max_nodes) +
             ", largest core system " + std::to_string(largest_core) + "x" +
             std::to_string(largest_core);
  return r;
}

CheckResult check_path_equivalence(const PathParams& p, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = "truncated walk: low-rank+sparse vs densified";
  r.tolerance = p.tolerance;
  r.intermediate_row_sum_error = 0.0;
  const Index n = Index(p.grid_side) * p.grid_side;
  for (int inst = 0; inst < p.instances; ++inst) {
    const Index dim = uniform_index(2, 16, rng);
    const NonNegPolicy policy = inst % 2 == 0 ? NonNegPolicy::Shift : NonNegPolicy::Clamp;
    const LabelGenerator g = g_from_probabilities(random_stochastic(n, p.classes, rng));
    std::vector<CompositeTransition> heads;
    for (int h = 0; h < p.heads; ++h) {
      const HeadFeatures head = random_head(n, dim, rng);
      heads.push_back(fuse(row_normalize(global_affinity(head, policy)),
                           row_normalize(local_affinity(head, p.grid_side, p.grid_side, 1e-2)),
                           p.beta));
    }
    const HeadWeighting weighting = weigh_heads(heads, g, 1.0);
    const CompositeTransition composite = fuse_transitions(heads, weighting.weights);

    WalkConfig cfg;
    cfg.alpha = p.alpha;
    cfg.steps = p.steps;
    cfg.fusion.beta = p.beta;
    double worst_iterate = 0.0;
    const LabelProbabilities fast =
        truncated_walk(composite, g, cfg, [&](int step, const Matrix& unnormalized) {
          const double target = 1.0 - std::pow(p.alpha, step + 1);
          worst_iterate = std::max(worst_iterate, max_row_sum_error(unnormalized, target));
        });
    const Matrix slow =
        truncated_walk_series(materialize(composite), g.probabilities(), p.alpha, p.steps);
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(fast.p, slow));
    r.final_row_sum_error = std::max(r.final_row_sum_error, max_row_sum_error(fast.p, 1.0));
    r.intermediate_row_sum_error = std::max(r.intermediate_row_sum_error, worst_iterate);
  }
  r.seconds = seconds_since(t0);
  r.passed = r.max_deviation <= r.tolerance;
  r.detail = std::to_string(p.instances) + " instances, N=" + std::to_string(n) + ", " +
             std::to_string(p.heads) + " heads, beta=" + fmt(p.beta) + ", L=" +
             std::to_string(p.steps);
  return r;
}

CheckResult check_entropy_fusion(const HeadWeightingParams& p, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = "head weighting properties + identical-head fusion";
  r.tolerance = p.tolerance;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_entropy = std::log(10.0);
  int violations = 0;
  double limit_dev = 0.0;

  for (int v = 0; v < p.vectors; ++v) {
    const int heads = int(uniform_index(2, 10, rng));
    std::vector<double> h(static_cast<std::size_t>(heads));
    for (double& x : h) x = unit(rng) * max_entropy;
    const double c = 0.1 + unit(rng) * 9.9;
    const auto w = head_weights(h, c);

    // Normalization and positivity.
    r.max_deviation = std::max(r.max_deviation, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
    for (double x : w) violations += !(x > 0.0);

    // Monotonicity: lower entropy gets the larger weight.
    for (int a = 0; a < heads; ++a) {
      for (int b = 0; b < heads; ++b) {
        if (h[a] < h[b] && !(w[a] > w[b])) ++violations;
      }
    }

    // Shift invariance.
    const double shift = (unit(rng) - 0.5) * 10.0;
    std::vector<double> shifted = h;
    for (double& x : shifted) x += shift;
    const auto ws = head_weights(shifted, c);
    for (int i = 0; i < heads; ++i) r.max_deviation = std::max(r.max_deviation, std::abs(ws[i] - w[i]));

    // Permutation symmetry.
    std::vector<int> perm(static_cast<std::size_t>(heads));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> hp(static_cast<std::size_t>(heads));
    for (int i = 0; i < heads; ++i) hp[i] = h[perm[i]];
    const auto wp = head_weights(hp, c);
    for (int i = 0; i < heads; ++i) r.max_deviation = std::max(r.max_deviation, std::abs(wp[i] - w[perm[i]]));

    // Equal entropies give uniform weights.
    const auto wu = head_weights(std::vector<double>(std::size_t(heads), h[0]), c);
    for (double x : wu) r.max_deviation = std::max(r.max_deviation, std::abs(x - 1.0 / heads));

    // Temperature limits. Near-uniform as c -> 0.
    const auto w_cold = head_weights(h, 1e-3);
    for (double x : w_cold) limit_dev = std::max(limit_dev, std::abs(x - 1.0 / heads));
    // One-hot on the unique minimum as c -> inf (entropies spread >= 0.01 apart).
    std::vector<double> spread(static_cast<std::size_t>(heads));
    for (int i = 0; i < heads; ++i) spread[i] = (i + unit(rng) * 0.5) * 0.2;
    std::shuffle(spread.begin(), spread.end(), rng);
    const auto w_hot = head_weights(spread, 1e3);
    const auto argmin = std::min_element(spread.begin(), spread.end()) - spread.begin();
    limit_dev = std::max(limit_dev, std::abs(w_hot[std::size_t(argmin)] - 1.0));
  }

  // fuse_heads over identical heads is the identity, for each representation.
  double fusion_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int heads = int(uniform_index(1, 5, rng));
    std::vector<double> w(static_cast<std::size_t>(heads));
    for (double& x : w) x = unit(rng) + 0.01;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    const HeadFeatures head = random_head(36, 4, rng);
    const std::vector<AffinityMatrix> reps{
        global_affinity_dense(head), global_affinity_factored(head),
        local_affinity(head, 6, 6, 1e-2)};
    for (const auto& rep : reps) {
      const std::vector<AffinityMatrix> copies(std::size_t(heads), rep);
      fusion_dev = std::max(fusion_dev, max_abs_diff(materialize(fuse_heads(copies, w)), materialize(rep)));
    }
  }
  r.max_deviation = std::max(r.max_deviation, fusion_dev);

  r.seconds = seconds_since(t0);
  r.passed = violations == 0 && r.max_deviation <= r.tolerance && limit_dev <= p.limit_tolerance;
  r.detail = std::to_string(p.vectors) + " vectors, " + std::to_string(violations) +
             " ordering/positivity violations, temperature-limit deviation " + fmt(limit_dev) +
             " (tol " + fmt(p.limit_tolerance) + "), identical-head fusion deviation " +
             fmt(fusion_dev);
  return r;
}

}  // namespace rwseg::reference
