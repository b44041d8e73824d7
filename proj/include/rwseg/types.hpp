#pragma once

#include <Eigen/Dense>

namespace rwseg {

// Row-major so that node rows are contiguous, matching the on-disk layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace rwseg
