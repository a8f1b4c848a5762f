#pragma once

#include <functional>
#include <variant>
#include <vector>

#include "eqfa/frames.hpp"
#include "eqfa/group.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

/// How the group acts on one side of a wrapped map.
struct FeatureAction {
  Index invariant_dim = 0;
  Index equivariant_rows = 0;
};
struct PointAction {};      // rows of an n x 3 matrix move rigidly
struct InvariantAction {};  // rho == identity on any vector
struct FieldAction {};      // change of variables on a scalar field

using ActionSpec = std::variant<FeatureAction, PointAction, InvariantAction, FieldAction>;

/// A value one of the actions can move. Which alternative is legal is
/// determined by the ActionSpec paired with it.
using FaValue = std::variant<FeatureMatrix, Points, Vector, ScalarField>;

/// Apply rho(g) under the given action tag. Throws DimensionMismatchError
/// when the value alternative does not match the tag.
FaValue act(const EuclideanMotion& g, const ActionSpec& spec, const FaValue& value);

/// Frame averaging: (1/|F|) sum_{g in F} rho_out(g) phi(rho_in(g)^-1 V),
/// accumulated in frame order so repeated calls are bit-identical. Wrapping
/// any phi this way yields an equivariant map whenever the frame itself is
/// equivariant. A FieldAction output returns a lazily averaged field.
FaValue fa_apply(const std::function<FaValue(const FaValue&)>& phi,
                 const std::vector<EuclideanMotion>& frame, const ActionSpec& rho_in,
                 const ActionSpec& rho_out, const FaValue& V);

/// Invariant decoding: average psi over the joint action on (Z, x) where x
/// rides along as one extra equivariant row and the output is a plain
/// scalar. This is the mechanism that turns a pointwise implicit function
/// into an equivariant field.
double fa_apply_pointwise(
    const std::function<double(const FeatureMatrix&, const Vec3&)>& psi_hat,
    const std::vector<EuclideanMotion>& frame_of_Z, const FeatureMatrix& Z, const Vec3& x);

}  // namespace eqfa
