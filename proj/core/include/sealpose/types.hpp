#pragma once

#include <Eigen/Core>

namespace sealpose {

// Row-major so that (rows x cols) views can be reshaped by reinterpreting
// contiguous storage.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// J x 2 pixel coordinates.
using Pose2D = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
/// J x 3 millimeter coordinates, root-relative.
using Pose3D = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

}  // namespace sealpose
