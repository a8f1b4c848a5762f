#pragma once

#include <vector>

#include "eqfa/group.hpp"

namespace eqfa {

/// Blends two latent codes endpoint-exactly: the invariant part linearly,
/// the equivariant rows along a rigid-plus-residual path built from the
/// Procrustes rotation between the centered endpoints.
FeatureMatrix interpolate(const FeatureMatrix& Z0, const FeatureMatrix& Z1, double t);

/// Applies the blend part by part for piecewise latents.
std::vector<FeatureMatrix> interpolate(const std::vector<FeatureMatrix>& Z0,
                                       const std::vector<FeatureMatrix>& Z1, double t);

}  // namespace eqfa
