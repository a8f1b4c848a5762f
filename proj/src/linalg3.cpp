#include "eqfa/linalg3.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <array>
#include <cmath>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

// One cyclic Jacobi rotation zeroing A(p,q), accumulated into V.
void jacobi_rotate(Mat3& A, Mat3& V, int p, int q) {
  const double apq = A(p, q);
  if (apq == 0.0) return;
  const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;

  Mat3 J = Mat3::Identity();
  J(p, p) = c;
  J(q, q) = c;
  J(p, q) = s;
  J(q, p) = -s;
  A = J.transpose() * A * J;
  A(p, q) = 0.0;
  A(q, p) = 0.0;
  V = V * J;
}

double offdiag_norm(const Mat3& A) {
  return std::sqrt(A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2));
}

}  // namespace

EigenResult3 sym_eig3(const Mat3& C) {
  Mat3 A = 0.5 * (C + C.transpose());
  Mat3 V = Mat3::Identity();

  const double scale = A.cwiseAbs().maxCoeff();
  const double stop = 1e-15 * std::max(1.0, scale);
  for (int sweep = 0; sweep < 50 && offdiag_norm(A) > stop; ++sweep) {
    jacobi_rotate(A, V, 0, 1);
    jacobi_rotate(A, V, 0, 2);
    jacobi_rotate(A, V, 1, 2);
  }

  // Ascending order with a deterministic permutation.
  std::array<int, 3> order = {0, 1, 2};
  for (int i = 0; i < 2; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (A(order[j], order[j]) < A(order[i], order[i])) std::swap(order[i], order[j]);

  EigenResult3 out;
  for (int i = 0; i < 3; ++i) {
    out.eigenvalues(i) = A(order[i], order[i]);
    out.eigenvectors.col(i) = V.col(order[i]);
  }

  // Sign convention: largest-magnitude component positive, ties by lowest index.
  for (int i = 0; i < 3; ++i) {
    int arg = 0;
    double best = std::abs(out.eigenvectors(0, i));
    for (int r = 1; r < 3; ++r) {
      const double mag = std::abs(out.eigenvectors(r, i));
      if (mag > best) {
        best = mag;
        arg = r;
      }
    }
    if (out.eigenvectors(arg, i) < 0.0) out.eigenvectors.col(i) = -out.eigenvectors.col(i);
  }

  const double gap = std::min(out.eigenvalues(1) - out.eigenvalues(0),
                              out.eigenvalues(2) - out.eigenvalues(1));
  out.degenerate = gap < kEigenGapTol * std::max(1.0, out.eigenvalues(2));
  return out;
}

Vec3 weighted_centroid(const Points& V, const Weights& w) {
  if (V.rows() != w.size())
    throw ShapeMismatchError("weighted_centroid: points/weights size mismatch");
  const double total = w.sum();
  if (!(total > kWeightSumTol)) throw ZeroWeightError("weighted_centroid: weight sum is zero");
  return (V.transpose() * w) / total;
}

Mat3 weighted_covariance(const Points& V, const Weights& w) {
  const Vec3 t = weighted_centroid(V, w);
  const Points centered = V.rowwise() - t.transpose();
  return centered.transpose() * w.asDiagonal() * centered;
}

Mat3 procrustes_rotation(const Eigen::Ref<const Points>& A, const Eigen::Ref<const Points>& B) {
  if (A.rows() != B.rows())
    throw ShapeMismatchError("procrustes_rotation: row count mismatch");
  if (A.rows() < 3) throw TooFewPointsError("procrustes_rotation: need at least 3 rows");

  // Minimizing ||A R^T - B||_F maximizes tr(R H) with H = A^T B.
  const Mat3 H = A.transpose() * B;
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();  // descending
  if (sigma(1) <= 1e-10 * std::max(sigma(0), 1e-300))
    throw DegenerateAlignmentError("procrustes_rotation: rotation not unique");

  Mat3 R = svd.matrixV() * svd.matrixU().transpose();
  if (R.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;  // sign of the smallest singular value
    R = svd.matrixV() * flip * svd.matrixU().transpose();
  }
  return R;
}

Mat3 slerp_rotation(double t, const Mat3& R) {
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8 ||
      R.determinant() < 0.0)
    throw Error("slerp_rotation: input is not a proper rotation");
  if (t == 0.0) return Mat3::Identity();
  if (t == 1.0) return R;

  const Eigen::AngleAxisd aa(R);
  if (std::abs(aa.angle() - M_PI) < 1e-6)
    throw NearPiRotationError("slerp_rotation: rotation angle within tolerance of pi");
  return Eigen::AngleAxisd(t * aa.angle(), aa.axis()).toRotationMatrix();
}

}  // namespace eqfa
