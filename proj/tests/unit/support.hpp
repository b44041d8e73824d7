#pragma once

#include <doctest.h>

#include <random>

#include "rwseg/error.hpp"
#include "rwseg/reference.hpp"

namespace rwseg::testing {

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double max_abs(const Matrix& a, const Matrix& b) { return reference::max_abs_diff(a, b); }

// Runs `fn` and returns the code of the rwseg::Error it throws.
template <class Fn>
ErrorCode error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an rwseg::Error");
  return ErrorCode::InvalidArgument;
}

inline Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(Index(rows.size()), Index(rows.begin()->size()));
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace rwseg::testing
