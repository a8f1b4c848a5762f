#include "eqfa/frames.hpp"

#include <algorithm>
#include <functional>

#include "eqfa/errors.hpp"

namespace eqfa {

std::vector<EuclideanMotion> pca_frame(const Points& points, const Weights& weights,
                                       FrameDiagnostics* diag) {
  if (points.rows() < 3) throw TooFewPointsError("pca_frame: need at least 3 points");
  const Vec3 t = weighted_centroid(points, weights);
  const Mat3 C = weighted_covariance(points, weights);
  const EigenResult3 eig = sym_eig3(C);

  if (diag != nullptr) {
    diag->eigenvalues = eig.eigenvalues;
    diag->min_gap = std::min(eig.eigenvalues(1) - eig.eigenvalues(0),
                             eig.eigenvalues(2) - eig.eigenvalues(1));
    diag->centroid = t;
    diag->degenerate = eig.degenerate;
  }

  std::vector<EuclideanMotion> frame(8);
  for (int k = 0; k < 8; ++k) {
    Mat3 R;
    for (int j = 0; j < 3; ++j) {
      const double s = ((k >> (2 - j)) & 1) != 0 ? -1.0 : 1.0;
      R.col(j) = s * eig.eigenvectors.col(j);
    }
    frame[k].R = R;
    frame[k].t = t;
  }
  return frame;
}

std::vector<EuclideanMotion> pca_frame(const Points& points, FrameDiagnostics* diag) {
  return pca_frame(points, Weights::Ones(points.rows()), diag);
}

bool frames_equal_as_sets(const std::vector<EuclideanMotion>& a,
                          const std::vector<EuclideanMotion>& b, double tol) {
  if (a.size() != b.size()) return false;
  const int n = static_cast<int>(a.size());
  std::vector<bool> used(b.size(), false);

  // Exact matching via recursive search; frames are tiny (n = 8) and
  // distinct elements rarely collide, so this terminates immediately in
  // practice.
  std::function<bool(int)> match = [&](int i) {
    if (i == n) return true;
    for (int j = 0; j < n; ++j) {
      if (used[j] || motion_distance(a[i], b[j]) > tol) continue;
      used[j] = true;
      if (match(i + 1)) return true;
      used[j] = false;
    }
    return false;
  };
  return match(0);
}

}  // namespace eqfa
