#include "eqfa/latent.hpp"

#include "eqfa/errors.hpp"
#include "eqfa/linalg3.hpp"

namespace eqfa {

FeatureMatrix interpolate(const FeatureMatrix& Z0, const FeatureMatrix& Z1, double t) {
  if (Z0.u.size() != Z1.u.size() || Z0.U.rows() != Z1.U.rows())
    throw DimensionMismatchError("interpolate: latent dims differ");
  if (t < 0.0 || t > 1.0) throw InvalidSpecError("interpolate: t must lie in [0, 1]");

  FeatureMatrix out;
  out.u = (1.0 - t) * Z0.u + t * Z1.u;

  const Vec3 c0 = Z0.U.colwise().mean().transpose();
  const Vec3 c1 = Z1.U.colwise().mean().transpose();
  const Points Q0 = Z0.U.rowwise() - c0.transpose();
  const Points Q1 = Z1.U.rowwise() - c1.transpose();

  const Mat3 R = procrustes_rotation(Q0, Q1);
  const Mat3 St = slerp_rotation(t, R);
  const Points D = Q1 * R - Q0;

  out.U = (Q0 + t * D) * St.transpose();
  out.U.rowwise() += ((1.0 - t) * c0 + t * c1).transpose();
  return out;
}

std::vector<FeatureMatrix> interpolate(const std::vector<FeatureMatrix>& Z0,
                                       const std::vector<FeatureMatrix>& Z1, double t) {
  if (Z0.size() != Z1.size())
    throw DimensionMismatchError("interpolate: part counts differ");
  std::vector<FeatureMatrix> out;
  out.reserve(Z0.size());
  for (size_t j = 0; j < Z0.size(); ++j) out.push_back(interpolate(Z0[j], Z1[j], t));
  return out;
}

}  // namespace eqfa
