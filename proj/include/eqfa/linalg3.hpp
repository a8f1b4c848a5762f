#pragma once

#include <Eigen/Core>

#include "eqfa/types.hpp"

namespace eqfa {

/// Result of a symmetric 3x3 eigendecomposition.
/// Eigenvalues are ascending; eigenvector columns are orthonormal and carry a
/// fixed sign convention (the largest-magnitude component of each eigenvector
/// is positive, ties broken by lowest index), so identical input bits produce
/// identical output bits.
struct EigenResult3 {
  Vec3 eigenvalues;   // ascending
  Mat3 eigenvectors;  // columns correspond to eigenvalues
  bool degenerate;    // min eigenvalue gap below the gap tolerance
};

/// Gap below which a spectrum counts as degenerate:
/// (lambda_{i+1} - lambda_i) < kEigenGapTol * max(1, lambda_max).
inline constexpr double kEigenGapTol = 1e-7;

/// Weight sums at or below this are treated as zero.
inline constexpr double kWeightSumTol = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi sweeps. The input is
/// symmetrized as (C + C^T)/2 before iteration. Degeneracy is reported via
/// the flag, never as an error.
EigenResult3 sym_eig3(const Mat3& C);

/// Weighted centroid (1^T w)^{-1} V^T w. Throws ZeroWeightError when the
/// weight sum is at or below kWeightSumTol.
Vec3 weighted_centroid(const Points& V, const Weights& w);

/// Weighted covariance (V - 1 t^T)^T diag(w) (V - 1 t^T) about the weighted
/// centroid t. Throws ZeroWeightError as weighted_centroid.
Mat3 weighted_covariance(const Points& V, const Weights& w);

/// Rotation R in SO(3) minimizing ||A R^T - B||_F with rows treated as
/// points (R maps rows of A onto rows of B). det(R) = +1 is enforced by
/// flipping the sign associated with the smallest singular value. Inputs are
/// expected to be centered by the caller. Throws DegenerateAlignmentError
/// when the cross-covariance has two vanishing singular values.
Mat3 procrustes_rotation(const Eigen::Ref<const Points>& A, const Eigen::Ref<const Points>& B);

/// Geodesic interpolation exp(t log R) from the identity to R. R must be a
/// proper rotation within 1e-8. Throws NearPiRotationError when the rotation
/// angle is within 1e-6 of pi.
Mat3 slerp_rotation(double t, const Mat3& R);

}  // namespace eqfa
