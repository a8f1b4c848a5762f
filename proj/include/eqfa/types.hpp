#pragma once

#include <Eigen/Core>

namespace eqfa {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Point sets and equivariant feature blocks are row-major by convention:
// one point (or feature row) per matrix row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Weights = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Index = Eigen::Index;

}  // namespace eqfa
