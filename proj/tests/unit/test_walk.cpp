#include "rwseg/walk.hpp"

#include <cmath>

#include "support.hpp"

using namespace rwseg;
using namespace rwseg::testing;

namespace {

CompositeTransition dense_transition(const Matrix& s) {
  return CompositeTransition(StochasticMatrix::from_normalized(DenseAffinity{s}));
}

WalkConfig truncated(double alpha, int steps) {
  WalkConfig cfg;
  cfg.alpha = alpha;
  cfg.steps = steps;
  return cfg;
}

}  // namespace

TEST_CASE("exact dense walk") {
  auto rng = make_rng(1);
  const Matrix gm = reference::random_stochastic(8, 3, rng);
  const auto g = g_from_probabilities(gm);

  SUBCASE("identity transition returns G") {
    for (double alpha : {0.1, 0.5, 0.99}) {
      CHECK(max_abs(exact_walk_dense(Matrix(Matrix::Identity(8, 8)), g, alpha).p, gm) <= 1e-12);
    }
  }
  SUBCASE("vanishing alpha returns G") {
    const Matrix s = reference::random_stochastic(8, 8, rng);
    CHECK(max_abs(exact_walk_dense(s, g, 1e-9).p, gm) <= 1e-8);
  }
  SUBCASE("matches the 500-term power series") {
    const Matrix s = reference::random_stochastic(8, 8, rng);
    const auto exact = exact_walk_dense(s, g, 0.9);
    CHECK(max_abs(exact.p, reference::power_series_walk(s, gm, 0.9, 500)) <= 1e-6);
    CHECK(reference::max_row_sum_error(exact.p, 1.0) <= 1e-6);
    CHECK(exact.residual_bound_value == 0.0);
  }
  SUBCASE("alpha outside (0,1) is rejected") {
    const Matrix s = Matrix::Identity(8, 8);
    CHECK(error_of([&] { exact_walk_dense(s, g, 1.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { exact_walk_dense(s, g, 0.0); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("exact Woodbury walk") {
  auto rng = make_rng(2);

  SUBCASE("rank-1 averaging walk returns the column mean of G") {
    const Index n = 10;
    const Matrix gm = reference::random_stochastic(n, 4, rng);
    const Matrix q = Matrix::Constant(n, 1, 1.0 / double(n));
    const Matrix k = Matrix::Ones(n, 1);
    const auto p = exact_walk_woodbury(q, k, g_from_probabilities(gm), 0.7);
    // P = (1-a) G + a * mean(G): the walk either stops now or jumps uniformly.
    const Matrix mean = gm.colwise().mean();
    for (Index i = 0; i < n; ++i) {
      const Matrix expected = 0.3 * gm.row(i) + 0.7 * mean;
      CHECK(max_abs(p.p.row(i), expected) <= 1e-12);
    }
  }
  SUBCASE("matches the dense inverse on a factored stochastic matrix") {
    const auto f = reference::random_factored_stochastic(32, 4, rng);
    const Matrix gm = reference::random_stochastic(32, 3, rng);
    const auto g = g_from_probabilities(gm);
    const Matrix s = reference::matmul(f.q_tilde, f.kmat.transpose());
    CHECK(max_abs(exact_walk_woodbury(f.q_tilde, f.kmat, g, 0.8).p, exact_walk_dense(s, g, 0.8).p) <=
          1e-6);
    CHECK(max_abs(exact_walk_woodbury(f.q_tilde, f.kmat, g, 1e-9).p, gm) <= 1e-8);
  }
  SUBCASE("factor shapes must agree") {
    const auto g = g_from_probabilities(reference::random_stochastic(6, 2, rng));
    CHECK(error_of([&] { exact_walk_woodbury(Matrix::Ones(6, 2), Matrix::Ones(6, 3), g, 0.5); }) ==
          ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("truncated walk") {
  auto rng = make_rng(3);
  const Matrix gm = reference::random_stochastic(8, 3, rng);
  const auto g = g_from_probabilities(gm);
  const Matrix s = reference::random_stochastic(8, 8, rng);

  SUBCASE("zero steps returns G exactly") {
    const auto p = truncated_walk(dense_transition(s), g, truncated(0.9, 0));
    CHECK(max_abs(p.p, gm) == 0.0);
    CHECK(p.residual_bound_value == doctest::Approx(8 * 0.9));
  }
  SUBCASE("identity transition returns G for any L") {
    for (int steps : {1, 7, 40}) {
      const auto p = truncated_walk(dense_transition(Matrix::Identity(8, 8)), g, truncated(0.9, steps));
      CHECK(max_abs(p.p, gm) <= 1e-12);
    }
  }
  SUBCASE("long walks reach the exact solution within the residual bound") {
    const auto p = truncated_walk(dense_transition(s), g, truncated(0.9, 200));
    CHECK(max_abs(p.p, exact_walk_dense(s, g, 0.9).p) <= 8 * std::pow(0.9, 201));
  }
  SUBCASE("matches the explicit normalized partial sum") {
    for (int steps : {1, 5, 17}) {
      const auto p = truncated_walk(dense_transition(s), g, truncated(0.6, steps));
      CHECK(max_abs(p.p, reference::truncated_walk_series(s, gm, 0.6, steps)) <= 1e-12);
      CHECK(p.steps_used == steps);
      CHECK(p.residual_bound_value == doctest::Approx(8 * std::pow(0.6, steps + 1)));
    }
  }
  SUBCASE("unnormalized iterates carry mass 1 - alpha^(l+1)") {
    int calls = 0;
    double worst = 0.0;
    truncated_walk(dense_transition(s), g, truncated(0.9, 30), [&](int step, const Matrix& it) {
      ++calls;
      worst = std::max(worst, reference::max_row_sum_error(it, 1.0 - std::pow(0.9, step + 1)));
    });
    CHECK(calls == 31);
    CHECK(worst <= 1e-12);
  }
  SUBCASE("non-finite iterates are reported") {
    Matrix bad = Matrix::Identity(8, 8);
    CompositeTransition c(StochasticMatrix::from_normalized(DenseAffinity{bad}));
    c.add(1e300, StochasticMatrix::from_normalized(DenseAffinity{bad}));
    CHECK(error_of([&] { truncated_walk(c, g, truncated(0.9, 3)); }) == ErrorCode::NonFiniteIterate);
  }
  SUBCASE("dimension mismatch") {
    const auto small = g_from_probabilities(reference::random_stochastic(4, 3, rng));
    CHECK(error_of([&] { truncated_walk(dense_transition(s), small, truncated(0.9, 3)); }) ==
          ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("residual bound") {
  CHECK(residual_l1(0.5, 3, 4) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(residual_l1(0.5, 4, 4) == doctest::Approx(residual_l1(0.5, 3, 4) / 2).epsilon(1e-15));

  SUBCASE("tail mass equals the bound") {
    auto rng = make_rng(4);
    const Matrix s = reference::random_stochastic(8, 8, rng);
    const Matrix gm = reference::random_stochastic(8, 3, rng);
    CHECK(std::abs(reference::truncated_tail_l1(s, gm, 0.9, 100) - residual_l1(0.9, 100, 8)) <= 1e-9);
  }
}

TEST_CASE("steps for tolerance") {
  CHECK(steps_for_tolerance(0.3, 1, 1.0) == 0);
  CHECK(steps_for_tolerance(0.9, 1, 1.0) == 0);
  CHECK(steps_for_tolerance(0.5, 4, 0.25) == 3);
  // Smallest L with 576 * 0.9^(L+1) <= 1e-3, found by direct evaluation.
  const int l = steps_for_tolerance(0.9, 576, 1e-3);
  CHECK(l == 125);
  CHECK(576 * std::pow(0.9, l + 1) <= 1e-3);
  CHECK(576 * std::pow(0.9, l) > 1e-3);
  for (double alpha : {0.1, 0.5, 0.75, 0.9, 0.99}) {
    for (Index n : {1, 7, 256, 4096}) {
      for (double tol : {1e-6, 1e-3, 0.5, 3.0}) {
        const int found = steps_for_tolerance(alpha, n, tol);
        CHECK(residual_l1(alpha, found, n) <= tol);
        if (found > 0) CHECK(residual_l1(alpha, found - 1, n) > tol);
      }
    }
  }
}

TEST_CASE("argmax mask") {
  const Matrix p = rows_of({{0.2, 0.5, 0.3}, {0.5, 0.5, 0.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 0, 1}});
  const ClassMask m = argmax_mask(p, 2, 2);
  CHECK(m.labels == std::vector<std::uint32_t>{1, 0, 0, 2});
  CHECK(m.at(1, 1) == 2);
  CHECK(argmax_mask(Matrix::Constant(6, 4, 0.25), 2, 3).labels == std::vector<std::uint32_t>(6, 0));
  CHECK(error_of([&] { argmax_mask(p, 3, 2); }) == ErrorCode::GridMismatch);
}

TEST_CASE("mask helpers") {
  const ClassMask a{1, 4, {0, 1, 2, 3}};
  const ClassMask b{1, 4, {0, 1, 0, 0}};
  CHECK(changed_fraction(a, b) == doctest::Approx(0.5));
  const ClassMask up = upsample_nearest(ClassMask{2, 2, {0, 1, 2, 3}}, 4, 4);
  CHECK(up.labels == std::vector<std::uint32_t>{0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3});
}
