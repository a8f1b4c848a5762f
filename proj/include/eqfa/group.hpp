#pragma once

#include <functional>

#include "eqfa/types.hpp"

namespace eqfa {

/// Element g = (R, t) of E(3) = O(3) x| R^3. R may be a reflection
/// (det = -1); callers that need SO(3) enforce it themselves.
struct EuclideanMotion {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static EuclideanMotion identity() { return {}; }
};

/// Group law: (R1 R2, R1 t2 + t1).
EuclideanMotion compose(const EuclideanMotion& g1, const EuclideanMotion& g2);

/// Inverse: (R^T, -R^T t).
EuclideanMotion inverse(const EuclideanMotion& g);

/// max(||R - R'||_F, ||t - t'||). Used for set-level frame comparison.
double motion_distance(const EuclideanMotion& a, const EuclideanMotion& b);

/// A value with an invariant part u in R^a and an equivariant part
/// U in R^{b x 3}. The universal currency of inputs, latents, and outputs.
struct FeatureMatrix {
  Vector u;  // invariant features
  Points U;  // equivariant feature rows

  Index invariant_dim() const { return u.size(); }
  Index equivariant_rows() const { return U.rows(); }
};

/// Flatten to [u; U row-major] of length a + 3b.
Vector flatten(const FeatureMatrix& V);

/// Inverse of flatten for declared dimensions (a, b).
FeatureMatrix unflatten(const Vector& v, Index invariant_dim, Index equivariant_rows);

/// Action on feature matrices: (u, U R^T + 1 t^T). The invariant part is
/// returned bit-identical to the input.
FeatureMatrix act_features(const EuclideanMotion& g, const FeatureMatrix& V);

/// Action on point rows: X R^T + 1 t^T.
Points act_points(const EuclideanMotion& g, const Points& X);

inline Vec3 act_point(const EuclideanMotion& g, const Vec3& x) { return g.R * x + g.t; }

/// A differentiable map R^3 -> R represented by closed-over evaluators.
/// Both evaluators must be safe for concurrent read-only calls.
struct ScalarField {
  std::function<double(const Vec3&)> value;
  std::function<Vec3(const Vec3&)> gradient;
};

/// Wrap a value evaluator with a central finite-difference gradient.
ScalarField make_field(std::function<double(const Vec3&)> value, double fd_step = 1e-5);

/// Action by change of variables: x -> f(R^T (x - t)). The returned
/// gradient is the chain-rule transform of f's gradient.
ScalarField act_field(const EuclideanMotion& g, const ScalarField& f);

}  // namespace eqfa
