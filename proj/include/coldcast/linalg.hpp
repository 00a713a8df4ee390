#pragma once

#include <Eigen/Core>
#include <string>

#include "coldcast/common.hpp"

namespace coldcast {

// Row-major storage throughout; parameter blocks live in one flat buffer and
// are exposed as Eigen maps (see params.hpp).
template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using MatrixMap = Eigen::Map<Matrix<S>>;

template <typename S>
using VectorMap = Eigen::Map<Vector<S>>;

template <typename S>
using ConstMatrixMap = Eigen::Map<const Matrix<S>>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename A>
void check_shape(const A& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + shape_str(rows, cols) + ", got " +
                     shape_str(a.rows(), a.cols()));
  }
}

}  // namespace coldcast
