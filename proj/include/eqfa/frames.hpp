#pragma once

#include <vector>

#include "eqfa/group.hpp"
#include "eqfa/linalg3.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

/// Everything the frame construction saw, for callers that need to reason
/// about stability. `degenerate` mirrors the eigensolver gap test.
struct FrameDiagnostics {
  Vec3 eigenvalues = Vec3::Zero();  // ascending
  double min_gap = 0.0;
  Vec3 centroid = Vec3::Zero();
  bool degenerate = false;
};

/// The 8-element weighted-PCA frame of a point set: translation is the
/// weighted centroid, rotations are the covariance eigenbasis under all
/// sign flips of the three axes. Element order is fixed: sign bits
/// (s1 s2 s3) run +++ , ++- , +-+ , +-- , -++ , -+- , --+ , --- so that
/// element k flips axis j when bit (2-j) of k is set.
///
/// Equivariance (up to set equality): F(X R^T + 1 t^T) = (R, t) . F(X)
/// whenever the covariance spectrum is simple. Degenerate spectra still
/// return a frame; `diag` reports the instability.
std::vector<EuclideanMotion> pca_frame(const Points& points, const Weights& weights,
                                       FrameDiagnostics* diag = nullptr);

/// Uniform-weight convenience overload.
std::vector<EuclideanMotion> pca_frame(const Points& points, FrameDiagnostics* diag = nullptr);

/// True iff the two frames contain the same motions up to `tol` in
/// motion_distance, ignoring order (exact bipartite matching on 8 elements).
bool frames_equal_as_sets(const std::vector<EuclideanMotion>& a,
                          const std::vector<EuclideanMotion>& b, double tol = 1e-8);

}  // namespace eqfa
