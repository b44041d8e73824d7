#include "rwseg/affinity.hpp"

#include "support.hpp"

using namespace rwseg;
using namespace rwseg::testing;

namespace {

HeadFeatures head_from(Matrix q, Matrix k) {
  HeadFeatures h;
  h.queries = std::move(q);
  h.keys = std::move(k);
  return h;
}

}  // namespace

TEST_CASE("global affinity: identical directions give cosine 1") {
  const auto a = global_affinity_dense(head_from(rows_of({{3, 4}}), rows_of({{3, 4}})));
  CHECK(a.values(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("global affinity: orthogonal vectors give cosine 0") {
  const auto a = global_affinity_dense(head_from(rows_of({{1, 0}}), rows_of({{0, 1}})));
  CHECK(a.values(0, 0) == 0.0);
}

TEST_CASE("global affinity: factored form matches brute-force cosine") {
  auto rng = make_rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = trial == 0 ? 16 : 2 + Index(rng() % 63);
    const Index d = trial == 0 ? 4 : 1 + Index(rng() % 8);
    const HeadFeatures h = reference::random_head(n, d, rng);
    const Matrix oracle = reference::cosine_matrix(h.queries, h.keys);
    const LowRankAffinity f = global_affinity_factored(h);
    CHECK(f.left.cols() == d);
    CHECK(max_abs(reference::materialize(AffinityMatrix{f}), oracle) <= 1e-6);
    CHECK(max_abs(global_affinity_dense(h).values, oracle) <= 1e-6);
  }
}

TEST_CASE("global affinity: zero-norm rows are rejected") {
  auto q = rows_of({{1, 0}, {0, 0}});
  auto k = rows_of({{1, 0}, {0, 1}});
  CHECK(error_of([&] { global_affinity_dense(head_from(q, k)); }) == ErrorCode::ZeroNormRow);
  CHECK(error_of([&] { global_affinity_factored(head_from(k, q)); }) == ErrorCode::ZeroNormRow);
}

TEST_CASE("nonnegativity policies") {
  auto rng = make_rng(5);
  const HeadFeatures h = reference::random_head(24, 5, rng);
  const Matrix cos = reference::cosine_matrix(h.queries, h.keys);

  SUBCASE("clamp zeroes negatives and is idempotent") {
    const DenseAffinity once = clamp_nonnegative(global_affinity_dense(h));
    const DenseAffinity twice = clamp_nonnegative(once);
    CHECK(once.values.minCoeff() >= 0.0);
    CHECK(max_abs(once.values, twice.values) == 0.0);
    for (Index i = 0; i < cos.rows(); ++i) {
      for (Index j = 0; j < cos.cols(); ++j) {
        CHECK(once.values(i, j) == doctest::Approx(std::max(0.0, cos(i, j))));
      }
    }
  }

  SUBCASE("shift keeps an exact rank D+1 factorization of (cos+1)/2") {
    const LowRankAffinity shifted = shift_to_unit_interval(global_affinity_factored(h));
    CHECK(shifted.left.cols() == 6);
    const Matrix expected = (cos.array() + 1.0) / 2.0;
    CHECK(max_abs(reference::materialize(AffinityMatrix{shifted}), expected) <= 1e-12);
    CHECK(max_abs(shift_to_unit_interval(global_affinity_dense(h)).values, expected) <= 1e-12);
  }

  SUBCASE("policy selects the representation") {
    CHECK(std::holds_alternative<DenseAffinity>(global_affinity(h, NonNegPolicy::Clamp)));
    CHECK(std::holds_alternative<LowRankAffinity>(global_affinity(h, NonNegPolicy::Shift)));
  }
}

TEST_CASE("local affinity: 8-connected neighborhoods with self entry") {
  auto rng = make_rng(3);
  SUBCASE("corner of a 3x3 grid") {
    const auto a = local_affinity(reference::random_head(9, 3, rng), 3, 3, 1e-2);
    CHECK(a.row_entries(0) == 4);
  }
  SUBCASE("interior of a 5x5 grid") {
    const auto a = local_affinity(reference::random_head(25, 3, rng), 5, 5, 1e-2);
    CHECK(a.row_entries(12) == 9);
  }
  SUBCASE("cardinality 3/5/8 on a 4x6 grid") {
    const int gh = 4, gw = 6;
    const auto a = local_affinity(reference::random_head(gh * gw, 3, rng), gh, gw, 1e-2);
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        const bool edge_y = y == 0 || y == gh - 1;
        const bool edge_x = x == 0 || x == gw - 1;
        const Index expected = edge_y && edge_x ? 3 : (edge_y || edge_x ? 5 : 8);
        CHECK(a.row_entries(Index(y) * gw + x) - 1 == expected);
      }
    }
  }
}

TEST_CASE("local affinity: entries are self epsilon and clamped neighbor cosines") {
  auto rng = make_rng(17);
  const int gh = 5, gw = 4;
  const HeadFeatures h = reference::random_head(gh * gw, 4, rng);
  const Matrix cos = reference::cosine_matrix(h.queries, h.keys);
  const auto a = local_affinity(h, gh, gw, 0.03);
  const Matrix dense = reference::materialize(AffinityMatrix{a});
  for (int i = 0; i < gh * gw; ++i) {
    for (int j = 0; j < gh * gw; ++j) {
      const int dy = std::abs(i / gw - j / gw), dx = std::abs(i % gw - j % gw);
      double expected = 0.0;
      if (i == j) {
        expected = 0.03;
      } else if (dy <= 1 && dx <= 1) {
        expected = std::max(0.0, cos(i, j));
      }
      CHECK(dense(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("local affinity: identical features give identical neighbor weights") {
  Matrix q = Matrix::Constant(9, 2, 1.0);
  Matrix k(9, 2);
  k.col(0).setConstant(1.0);
  k.col(1).setConstant(2.0);
  const auto a = local_affinity(head_from(q, k), 3, 3, 1e-2);
  const double c = 3.0 / (std::sqrt(2.0) * std::sqrt(5.0));
  for (Index i = 0; i < 9; ++i) {
    for (Index j = 0; j < 9; ++j) {
      if (i != j && a.at(i, j) != 0.0) CHECK(a.at(i, j) == doctest::Approx(c));
    }
  }
}

TEST_CASE("local affinity: grid must match node count") {
  auto rng = make_rng(1);
  const auto h = reference::random_head(10, 3, rng);
  CHECK(error_of([&] { local_affinity(h, 3, 3, 1e-2); }) == ErrorCode::GridMismatch);
  CHECK(error_of([&] { local_affinity(h, 2, 5, 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("row normalization") {
  SUBCASE("uniform rows") {
    const auto s = row_normalize(DenseAffinity{rows_of({{1, 1}, {1, 1}})});
    CHECK(max_abs(s.to_dense(), rows_of({{0.5, 0.5}, {0.5, 0.5}})) == 0.0);
  }
  SUBCASE("one nonzero per row gives the identity") {
    const auto s = row_normalize(DenseAffinity{rows_of({{2, 0}, {0, 3}})});
    CHECK(max_abs(s.to_dense(), Matrix::Identity(2, 2)) == 0.0);
  }
  SUBCASE("random nonnegative 8x8 rows sum to 1") {
    auto rng = make_rng(8);
    const Matrix a = reference::random_nonnegative(8, 8, rng);
    const auto s = row_normalize(DenseAffinity{a});
    CHECK(reference::max_row_sum_error(reference::materialize(s.representation()), 1.0) <= 1e-9);
  }
  SUBCASE("low-rank normalization stays factored and matches dense normalization") {
    auto rng = make_rng(9);
    const auto lr = shift_to_unit_interval(global_affinity_factored(reference::random_head(30, 4, rng)));
    const auto s = row_normalize(AffinityMatrix{lr});
    REQUIRE(std::holds_alternative<LowRankAffinity>(s.representation()));
    Matrix dense = reference::materialize(AffinityMatrix{lr});
    for (Index i = 0; i < dense.rows(); ++i) dense.row(i) /= dense.row(i).sum();
    CHECK(max_abs(reference::materialize(s.representation()), dense) <= 1e-12);
  }
  SUBCASE("sparse normalization") {
    auto rng = make_rng(10);
    const auto loc = local_affinity(reference::random_head(20, 3, rng), 4, 5, 1e-2);
    const auto s = row_normalize(AffinityMatrix{loc});
    REQUIRE(std::holds_alternative<SparseLocalAffinity>(s.representation()));
    CHECK(reference::max_row_sum_error(s.to_dense(), 1.0) <= 1e-12);
  }
  SUBCASE("degenerate rows are rejected") {
    CHECK(error_of([] { row_normalize(DenseAffinity{rows_of({{1, 1}, {0, 0}})}); }) ==
          ErrorCode::DegenerateRow);
    CHECK(error_of([] { row_normalize(DenseAffinity{rows_of({{2, -1}, {1, 1}})}); }) ==
          ErrorCode::InvalidArgument);
  }
}

TEST_CASE("stochastic matrix validation") {
  CHECK(error_of([] {
          StochasticMatrix::from_normalized(DenseAffinity{rows_of({{0.5, 0.6}, {0.5, 0.5}})});
        }) == ErrorCode::NotAProbability);
  CHECK(error_of([] {
          StochasticMatrix::from_normalized(DenseAffinity{rows_of({{1.5, -0.5}, {0.5, 0.5}})});
        }) == ErrorCode::NotAProbability);
}

TEST_CASE("fusing global and local transitions") {
  auto rng = make_rng(21);
  const HeadFeatures h = reference::random_head(8, 3, rng);
  const auto sg = row_normalize(global_affinity(h, NonNegPolicy::Shift));
  const auto sl = row_normalize(AffinityMatrix{local_affinity(h, 2, 4, 1e-2)});
  const Matrix g = reference::random_stochastic(8, 3, rng);

  SUBCASE("beta = 1 equals the global product exactly") {
    CHECK(max_abs(fuse(sg, sl, 1.0).apply(g), sg.apply(g)) == 0.0);
  }
  SUBCASE("beta = 0 equals the local product exactly") {
    CHECK(max_abs(fuse(sg, sl, 0.0).apply(g), sl.apply(g)) == 0.0);
  }
  SUBCASE("beta = 0.5 matches the dense mixture") {
    const Matrix sgd = reference::materialize(sg.representation());
    const Matrix sld = reference::materialize(sl.representation());
    const Matrix expected =
        reference::weighted_sum({reference::matmul(sgd, g), reference::matmul(sld, g)}, {0.5, 0.5});
    CHECK(max_abs(fuse(sg, sl, 0.5).apply(g), expected) <= 1e-9);
  }
  SUBCASE("any beta gives a stochastic, nonnegative matrix") {
    for (double beta : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
      const Matrix dense = reference::materialize(fuse(sg, sl, beta));
      CHECK(reference::max_row_sum_error(dense, 1.0) <= 1e-6);
      CHECK(dense.minCoeff() >= 0.0);
    }
  }
  SUBCASE("invalid inputs") {
    CHECK(error_of([&] { fuse(sg, sl, 1.5); }) == ErrorCode::InvalidArgument);
    const auto other = row_normalize(DenseAffinity{Matrix::Ones(3, 3)});
    CHECK(error_of([&] { fuse(sg, other, 0.5); }) == ErrorCode::DimensionMismatch);
  }
}
