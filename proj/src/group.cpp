#include "eqfa/group.hpp"

#include <algorithm>
#include <utility>

#include "eqfa/errors.hpp"

namespace eqfa {

EuclideanMotion compose(const EuclideanMotion& g1, const EuclideanMotion& g2) {
  EuclideanMotion out;
  out.R = g1.R * g2.R;
  out.t = g1.R * g2.t + g1.t;
  return out;
}

EuclideanMotion inverse(const EuclideanMotion& g) {
  EuclideanMotion out;
  out.R = g.R.transpose();
  out.t = -(out.R * g.t);
  return out;
}

double motion_distance(const EuclideanMotion& a, const EuclideanMotion& b) {
  return std::max((a.R - b.R).norm(), (a.t - b.t).norm());
}

Vector flatten(const FeatureMatrix& V) {
  const Index a = V.u.size();
  const Index b = V.U.rows();
  Vector out(a + 3 * b);
  out.head(a) = V.u;
  for (Index i = 0; i < b; ++i) out.segment(a + 3 * i, 3) = V.U.row(i).transpose();
  return out;
}

FeatureMatrix unflatten(const Vector& v, Index invariant_dim, Index equivariant_rows) {
  if (v.size() != invariant_dim + 3 * equivariant_rows)
    throw DimensionMismatchError("unflatten: vector length does not match declared dims");
  FeatureMatrix out;
  out.u = v.head(invariant_dim);
  out.U.resize(equivariant_rows, 3);
  for (Index i = 0; i < equivariant_rows; ++i)
    out.U.row(i) = v.segment(invariant_dim + 3 * i, 3).transpose();
  return out;
}

FeatureMatrix act_features(const EuclideanMotion& g, const FeatureMatrix& V) {
  FeatureMatrix out;
  out.u = V.u;
  out.U = V.U * g.R.transpose();
  out.U.rowwise() += g.t.transpose();
  return out;
}

Points act_points(const EuclideanMotion& g, const Points& X) {
  Points out = X * g.R.transpose();
  out.rowwise() += g.t.transpose();
  return out;
}

ScalarField make_field(std::function<double(const Vec3&)> value, double fd_step) {
  ScalarField f;
  f.value = std::move(value);
  const auto v = f.value;
  const double h = fd_step;
  f.gradient = [v, h](const Vec3& x) {
    Vec3 g;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e(k) = h;
      g(k) = (v(x + e) - v(x - e)) / (2.0 * h);
    }
    return g;
  };
  return f;
}

ScalarField act_field(const EuclideanMotion& g, const ScalarField& f) {
  const Mat3 R = g.R;
  const Vec3 t = g.t;
  ScalarField out;
  out.value = [f, R, t](const Vec3& x) { return f.value(R.transpose() * (x - t)); };
  out.gradient = [f, R, t](const Vec3& x) { return R * f.gradient(R.transpose() * (x - t)); };
  return out;
}

}  // namespace eqfa
