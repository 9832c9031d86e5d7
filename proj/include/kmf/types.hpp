#pragma once

#include <Eigen/Dense>

namespace kmf {

/// Samples are rows; row-major so each sample is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace kmf
