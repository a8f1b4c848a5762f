#include "eqfa/eval.hpp"

#include <cstdio>
#include <fstream>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

void check_grid(const GridSpec& grid) {
  for (int a = 0; a < 3; ++a) {
    if (grid.resolution(a) < 2)
      throw InvalidSpecError("grid resolution must be at least 2 per axis");
    if (!(grid.box_hi(a) > grid.box_lo(a)))
      throw InvalidSpecError("grid box must have positive extent");
  }
}

double nearest_sq(const Eigen::RowVector3d& a, const Points& B) {
  double best = (a - B.row(0)).squaredNorm();
  for (Index j = 1; j < B.rows(); ++j)
    best = std::min(best, (a - B.row(j)).squaredNorm());
  return best;
}

}  // namespace

double mse(const std::vector<Points>& X, const std::vector<Points>& Y) {
  if (X.empty() || X.size() != Y.size())
    throw ShapeMismatchError("mse: mesh counts differ or are empty");
  double sum = 0.0;
  Index vertices = 0;
  for (size_t i = 0; i < X.size(); ++i) {
    if (X[i].rows() != Y[i].rows())
      throw ShapeMismatchError("mse: vertex counts differ");
    for (Index j = 0; j < X[i].rows(); ++j) sum += (X[i].row(j) - Y[i].row(j)).norm();
    vertices += X[i].rows();
  }
  return sum / static_cast<double>(vertices);
}

double mse(const Points& X, const Points& Y) { return mse(std::vector<Points>{X}, {Y}); }

double chamfer_one_sided(const Points& A, const Points& B) {
  if (A.rows() == 0 || B.rows() == 0)
    throw EmptyCloudError("chamfer: empty point set");
  double sum = 0.0;
  for (Index i = 0; i < A.rows(); ++i) sum += nearest_sq(A.row(i), B);
  return sum / static_cast<double>(A.rows());
}

double chamfer(const Points& A, const Points& B) {
  return 0.5 * (chamfer_one_sided(A, B) + chamfer_one_sided(B, A));
}

double iou(const Points& S, const Occupancy& occ_x, const Occupancy& occ_y) {
  if (S.rows() == 0) throw EmptySampleError("iou: empty sample set");
  Index hits = 0;
  for (Index i = 0; i < S.rows(); ++i) {
    const Vec3 x = S.row(i).transpose();
    if (occ_x(x) && occ_y(x)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(S.rows());
}

Occupancy occupancy_from_field(const ScalarField& f) {
  return [f](const Vec3& x) { return f.value(x) <= 0.0; };
}

Points iou_samples(const IouConfig& cfg, const Points& surface, Rng& rng) {
  if (cfg.bbox_samples <= 0 || cfg.near_surface_samples <= 0)
    throw InvalidSpecError("iou sample counts must be positive");
  if (cfg.sigma <= 0.0) throw InvalidSpecError("iou sigma must be positive");
  if (surface.rows() == 0) throw EmptyCloudError("iou samples: empty surface");
  Points out(cfg.bbox_samples + cfg.near_surface_samples, 3);
  for (Index s = 0; s < cfg.bbox_samples; ++s)
    for (int c = 0; c < 3; ++c) out(s, c) = rng.uniform(cfg.box_lo(c), cfg.box_hi(c));
  for (Index s = cfg.bbox_samples; s < out.rows(); ++s) {
    const Index p = static_cast<Index>(rng.below(static_cast<std::uint64_t>(surface.rows())));
    for (int c = 0; c < 3; ++c) out(s, c) = surface(p, c) + cfg.sigma * rng.normal();
  }
  return out;
}

Points grid_nodes(const GridSpec& grid) {
  check_grid(grid);
  const int nx = grid.resolution(0), ny = grid.resolution(1), nz = grid.resolution(2);
  Points nodes((nx + 1) * (ny + 1) * (nz + 1), 3);
  const Vec3 step = (grid.box_hi - grid.box_lo).cwiseQuotient(
      Vec3(static_cast<double>(nx), static_cast<double>(ny), static_cast<double>(nz)));
  Index row = 0;
  for (int iz = 0; iz <= nz; ++iz)
    for (int iy = 0; iy <= ny; ++iy)
      for (int ix = 0; ix <= nx; ++ix) {
        nodes(row, 0) = grid.box_lo(0) + step(0) * ix;
        nodes(row, 1) = grid.box_lo(1) + step(1) * iy;
        nodes(row, 2) = grid.box_lo(2) + step(2) * iz;
        ++row;
      }
  return nodes;
}

Points extract_zero_crossings(const Vector& node_values, const GridSpec& grid) {
  check_grid(grid);
  const int nx = grid.resolution(0), ny = grid.resolution(1), nz = grid.resolution(2);
  const Index node_count =
      static_cast<Index>(nx + 1) * (ny + 1) * (nz + 1);
  if (node_values.size() != node_count)
    throw ShapeMismatchError("extract_zero_crossings: node value count differs");
  const Points nodes = grid_nodes(grid);
  auto at = [&](int ix, int iy, int iz) {
    return (static_cast<Index>(iz) * (ny + 1) + iy) * (nx + 1) + ix;
  };

  std::vector<Vec3> hits;
  auto visit = [&](Index n0, Index n1) {
    const double v0 = node_values(n0);
    const double v1 = node_values(n1);
    if ((v0 < 0.0 && v1 > 0.0) || (v0 > 0.0 && v1 < 0.0)) {
      const double t = v0 / (v0 - v1);
      hits.push_back(Vec3((1.0 - t) * nodes.row(n0).transpose() +
                          t * nodes.row(n1).transpose()));
    }
  };
  for (int iz = 0; iz <= nz; ++iz)
    for (int iy = 0; iy <= ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) visit(at(ix, iy, iz), at(ix + 1, iy, iz));
  for (int iz = 0; iz <= nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix <= nx; ++ix) visit(at(ix, iy, iz), at(ix, iy + 1, iz));
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy <= ny; ++iy)
      for (int ix = 0; ix <= nx; ++ix) visit(at(ix, iy, iz), at(ix, iy, iz + 1));

  Points out(static_cast<Index>(hits.size()), 3);
  for (size_t i = 0; i < hits.size(); ++i) out.row(static_cast<Index>(i)) = hits[i].transpose();
  return out;
}

Points extract_zero_crossings(const ScalarField& f, const GridSpec& grid) {
  const Points nodes = grid_nodes(grid);
  Vector values(nodes.rows());
  for (Index i = 0; i < nodes.rows(); ++i) values(i) = f.value(nodes.row(i).transpose());
  return extract_zero_crossings(values, grid);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "split,metric,value\n";
  char buf[64];
  for (const MetricRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.value);
    out << row.split << ',' << row.metric << ',' << buf << '\n';
  }
}

}  // namespace eqfa
