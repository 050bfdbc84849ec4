#pragma once

#include <Eigen/Core>

namespace dgecn {

// Dense row-major matrix used for network activations and parameters. Rows
// are contiguous, which is the layout the SIMD kernels stream over.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace dgecn
