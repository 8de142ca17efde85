#pragma once

#include <Eigen/Core>

namespace pbl {

// Row-major so that one row is one sequence position.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

}  // namespace pbl
