#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eqfa/group.hpp"
#include "eqfa/rng.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

/// Monte-Carlo occupancy-overlap settings: uniform box samples plus
/// Gaussian-perturbed near-surface samples sharing one bounding box.
struct IouConfig {
  Index bbox_samples = 10000;
  Index near_surface_samples = 20000;
  double sigma = 0.01;
  Vec3 box_lo = Vec3::Constant(-1.0);
  Vec3 box_hi = Vec3::Constant(1.0);
};

/// Axis-aligned evaluation lattice; resolution counts cells per axis, so an
/// axis with resolution r has r + 1 node planes.
struct GridSpec {
  Vec3 box_lo = Vec3::Constant(-1.0);
  Vec3 box_hi = Vec3::Constant(1.0);
  Eigen::Vector3i resolution = Eigen::Vector3i::Constant(32);
};

using Occupancy = std::function<bool(const Vec3&)>;

/// Mean per-vertex Euclidean distance (a mean of norms, not of squares)
/// over matched mesh batches.
double mse(const std::vector<Points>& X, const std::vector<Points>& Y);
double mse(const Points& X, const Points& Y);

/// Mean over A of the squared distance to the nearest point of B.
double chamfer_one_sided(const Points& A, const Points& B);

/// Symmetrized Chamfer: half the sum of both one-sided values.
double chamfer(const Points& A, const Points& B);

/// Fraction of samples occupied by both shapes (the overlap fraction as
/// printed in the source formula; reported under the name "iou_paper").
double iou(const Points& S, const Occupancy& occ_x, const Occupancy& occ_y);

/// Inside test for a signed field: non-positive values count as inside.
Occupancy occupancy_from_field(const ScalarField& f);

/// Draws the IoU sample set: uniform box points followed by near-surface
/// points (a surface point plus isotropic Gaussian noise).
Points iou_samples(const IouConfig& cfg, const Points& surface, Rng& rng);

/// Grid nodes in index order: x fastest, then y, then z.
Points grid_nodes(const GridSpec& grid);

/// Zero points of the field on grid edges whose endpoint values change sign
/// strictly, linearly interpolated; edges enumerate x-aligned first, then
/// y-aligned, then z-aligned, each block in node index order.
Points extract_zero_crossings(const ScalarField& f, const GridSpec& grid);

/// Same extraction from precomputed node values laid out as grid_nodes.
Points extract_zero_crossings(const Vector& node_values, const GridSpec& grid);

struct MetricRow {
  std::string split;
  std::string metric;
  double value;
};

/// Writes rows as "split,metric,value" CSV with a header line.
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

}  // namespace eqfa
