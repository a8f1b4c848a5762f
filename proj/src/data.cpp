#include "eqfa/data.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

void validate_chain(const ArticulatedChainSpec& spec) {
  if (spec.segments < 2) throw InvalidSpecError("segments must be ≥ 2");
  if (spec.rings_per_segment < 1) throw InvalidSpecError("rings per segment must be >= 1");
  if (spec.ring_size < 3) throw InvalidSpecError("ring size must be >= 3");
  if (!(spec.segment_length > 0.0)) throw InvalidSpecError("segment length must be positive");
  if (!(spec.radius > 0.0)) throw InvalidSpecError("radius must be positive");
  if (!spec.joint_angles.empty() &&
      static_cast<int>(spec.joint_angles.size()) != spec.segments - 1)
    throw InvalidSpecError("joint angle count must equal segments - 1");
}

Mat3 axis_angle_rotation(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, Vec3(w / angle)).toRotationMatrix();
}

}  // namespace

ChainMesh gen_chain(const ArticulatedChainSpec& spec) {
  validate_chain(spec);
  const int segments = spec.segments;
  const int rings = spec.rings_per_segment;
  const int ring_size = spec.ring_size;
  const double L = spec.segment_length;
  const int total_rings = segments * rings;
  const Index n = static_cast<Index>(total_rings) * ring_size + 2;
  const double dz = L / rings;

  std::vector<Vec3> angles = spec.joint_angles;
  if (angles.empty()) angles.assign(static_cast<size_t>(segments - 1), Vec3::Zero());

  // Forward kinematics: segment s moves by the composition of all joint
  // rotations at or before it, each about its own rest pivot.
  std::vector<EuclideanMotion> world(static_cast<size_t>(segments));
  world[0] = EuclideanMotion::identity();
  for (int j = 1; j < segments; ++j) {
    EuclideanMotion joint;
    joint.R = axis_angle_rotation(angles[static_cast<size_t>(j - 1)]);
    const Vec3 pivot(0.0, 0.0, j * L);
    joint.t = pivot - joint.R * pivot;
    world[static_cast<size_t>(j)] = compose(world[static_cast<size_t>(j - 1)], joint);
  }

  ChainMesh out;
  out.X.resize(n, 3);
  const double two_pi = 6.28318530717958647692;
  // Ring vertices are warped away from uniform spacing; a regular polygon
  // cross-section would make every segment's covariance spectrum degenerate
  // in the two radial directions, which destabilizes per-part frames.
  const double warp = 0.45;
  auto ring_z = [&](int ring) { return (ring + 0.5) * dz; };
  for (int ring = 0; ring < total_rings; ++ring) {
    const int segment = ring / rings;
    const EuclideanMotion& g = world[static_cast<size_t>(segment)];
    for (int v = 0; v < ring_size; ++v) {
      const double base = two_pi * v / ring_size;
      const double theta = base + warp * std::sin(base);
      const Vec3 rest(spec.radius * std::cos(theta), spec.radius * std::sin(theta),
                      ring_z(ring));
      out.X.row(static_cast<Index>(ring) * ring_size + v) = act_point(g, rest).transpose();
    }
  }
  const Index bottom = n - 2;
  const Index top = n - 1;
  out.X.row(bottom) = act_point(world[0], Vec3(0, 0, 0)).transpose();
  out.X.row(top) =
      act_point(world[static_cast<size_t>(segments - 1)], Vec3(0, 0, segments * L))
          .transpose();

  auto vid = [&](int ring, int v) { return ring * ring_size + (v % ring_size); };
  for (int ring = 0; ring + 1 < total_rings; ++ring) {
    for (int v = 0; v < ring_size; ++v) {
      const int a = vid(ring, v), b = vid(ring, v + 1);
      const int c = vid(ring + 1, v), d = vid(ring + 1, v + 1);
      out.faces.push_back({a, b, d});
      out.faces.push_back({a, d, c});
    }
  }
  for (int v = 0; v < ring_size; ++v) {
    out.faces.push_back({static_cast<int>(bottom), vid(0, v + 1), vid(0, v)});
    out.faces.push_back({static_cast<int>(top), vid(total_rings - 1, v),
                         vid(total_rings - 1, v + 1)});
  }

  // Skinning weights from rest-pose axial position: pure inside a segment,
  // ramping across the two rings flanking each joint when soft.
  Matrix W = Matrix::Zero(n, segments);
  const double band = 1.0 / rings;  // half-width of the joint blend, in segments
  auto assign = [&](Index row, double rest_z) {
    const double s = rest_z / L;
    if (spec.soft_weights) {
      for (int j = 1; j < segments; ++j) {
        if (s > j - band && s < j + band) {
          const double w_hi = (s - (j - band)) / (2.0 * band);
          W(row, j) = w_hi;
          W(row, j - 1) = 1.0 - w_hi;
          return;
        }
      }
    }
    const int seg = std::clamp(static_cast<int>(std::floor(s)), 0, segments - 1);
    W(row, seg) = 1.0;
  };
  for (int ring = 0; ring < total_rings; ++ring)
    for (int v = 0; v < ring_size; ++v)
      assign(static_cast<Index>(ring) * ring_size + v, ring_z(ring));
  assign(bottom, 0.0);
  assign(top, segments * L);
  out.weights = make_part_weights(std::move(W));
  return out;
}

ArticulatedChainSpec random_pose(const ArticulatedChainSpec& base, double max_angle,
                                 Rng& rng) {
  if (max_angle < 0.0) throw InvalidSpecError("max angle must be non-negative");
  ArticulatedChainSpec out = base;
  out.joint_angles.assign(static_cast<size_t>(base.segments - 1), Vec3::Zero());
  for (Vec3& w : out.joint_angles) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    w = rng.uniform(-max_angle, max_angle) * axis;
  }
  return out;
}

SplitKind split_kind_from_string(const std::string& name) {
  if (name == "I") return SplitKind::kIdentity;
  if (name == "z") return SplitKind::kZ;
  if (name == "SO3") return SplitKind::kSO3;
  if (name == "unseen-pose") return SplitKind::kUnseenPose;
  throw ConfigError("unknown split kind: " + name);
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::kIdentity: return "I";
    case SplitKind::kZ: return "z";
    case SplitKind::kSO3: return "SO3";
    case SplitKind::kUnseenPose: return "unseen-pose";
  }
  throw ConfigError("unknown split kind");
}

DatasetSplit make_splits(const std::vector<double>& poses, SplitKind kind,
                         std::uint64_t seed) {
  if (poses.empty()) throw EmptyBatchError("make_splits: empty dataset");
  const Index n = static_cast<Index>(poses.size());
  DatasetSplit split;
  split.kind = kind;
  split.seed = seed;
  Rng rng(seed);

  if (kind == SplitKind::kUnseenPose) {
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return poses[static_cast<size_t>(a)] < poses[static_cast<size_t>(b)];
    });
    const Index start = static_cast<Index>(0.35 * static_cast<double>(n));
    const Index count = std::max<Index>(1, static_cast<Index>(0.3 * static_cast<double>(n)));
    for (Index r = 0; r < n; ++r) {
      if (r >= start && r < start + count)
        split.test.push_back(order[static_cast<size_t>(r)]);
      else
        split.train.push_back(order[static_cast<size_t>(r)]);
    }
  } else {
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
      const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    const Index train_count = (7 * n) / 10;
    split.train.assign(order.begin(), order.begin() + train_count);
    split.test.assign(order.begin() + train_count, order.end());
  }

  const double two_pi = 6.28318530717958647692;
  for (size_t i = 0; i < split.test.size(); ++i) {
    EuclideanMotion g = EuclideanMotion::identity();
    if (kind == SplitKind::kZ) {
      const double theta = rng.uniform(0.0, two_pi);
      g.R = Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix();
    } else if (kind == SplitKind::kSO3) {
      g.R = random_rotation(rng);
    }
    split.test_motions.push_back(g);
  }
  return split;
}

Points apply_test_motion(const DatasetSplit& split, size_t test_pos, const Points& X) {
  if (test_pos >= split.test_motions.size())
    throw DimensionMismatchError("apply_test_motion: index out of range");
  if (split.kind == SplitKind::kIdentity || split.kind == SplitKind::kUnseenPose)
    return X;
  return act_points(split.test_motions[test_pos], X);
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q(i) = rng.normal();
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

EuclideanMotion random_motion(Rng& rng, double translation_scale, bool allow_reflection) {
  if (translation_scale < 0.0)
    throw InvalidSpecError("translation scale must be non-negative");
  EuclideanMotion g;
  g.R = random_rotation(rng);
  if (allow_reflection && rng.bits() % 2 == 1) g.R.col(0) = -g.R.col(0);
  for (int i = 0; i < 3; ++i)
    g.t(i) = rng.uniform(-translation_scale, translation_scale);
  return g;
}

Points sample_chain_cloud(const ChainMesh& mesh, Index count, double noise_sigma,
                          double outlier_fraction, Rng& rng) {
  if (count <= 0) throw InvalidSpecError("cloud sample count must be positive");
  if (noise_sigma < 0.0 || outlier_fraction < 0.0 || outlier_fraction > 1.0)
    throw InvalidSpecError("invalid cloud noise settings");
  if (mesh.faces.empty()) throw InvalidSpecError("cloud sampling needs faces");

  const Vec3 lo = mesh.X.colwise().minCoeff().transpose();
  const Vec3 hi = mesh.X.colwise().maxCoeff().transpose();
  const Vec3 pad = 0.1 * (hi - lo);
  const Index outliers = static_cast<Index>(outlier_fraction * static_cast<double>(count));

  Points out(count, 3);
  for (Index s = 0; s < count; ++s) {
    if (s < count - outliers) {
      const auto& f =
          mesh.faces[static_cast<size_t>(rng.below(mesh.faces.size()))];
      double a = rng.uniform(0.0, 1.0);
      double b = rng.uniform(0.0, 1.0);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      const Vec3 p = (1.0 - a - b) * mesh.X.row(f[0]).transpose() +
                     a * mesh.X.row(f[1]).transpose() + b * mesh.X.row(f[2]).transpose();
      for (int c = 0; c < 3; ++c) out(s, c) = p(c) + noise_sigma * rng.normal();
    } else {
      for (int c = 0; c < 3; ++c)
        out(s, c) = rng.uniform(lo(c) - pad(c), hi(c) + pad(c));
    }
  }
  return out;
}

Points sample_sphere_cloud(double radius, Index count, double noise_sigma, Rng& rng) {
  if (count <= 0) throw InvalidSpecError("cloud sample count must be positive");
  if (radius <= 0.0 || noise_sigma < 0.0)
    throw InvalidSpecError("invalid sphere cloud settings");
  Points out(count, 3);
  for (Index s = 0; s < count; ++s) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    for (int c = 0; c < 3; ++c) out(s, c) = radius * dir(c) + noise_sigma * rng.normal();
  }
  return out;
}

namespace {

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_obj(const std::string& path, const Points& X,
              const std::vector<std::array<int, 3>>& faces) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (Index i = 0; i < X.rows(); ++i)
    out << "v " << format_coord(X(i, 0)) << ' ' << format_coord(X(i, 1)) << ' '
        << format_coord(X(i, 2)) << '\n';
  for (const auto& f : faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

MeshData load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Vec3> vertices;
  MeshData mesh;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p(0) >> p(1) >> p(2)))
        throw ParseError("malformed vertex line", line_number);
      vertices.push_back(p);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      if (!(ss >> f[0] >> f[1] >> f[2]))
        throw ParseError("malformed face line", line_number);
      for (int& idx : f) {
        if (idx < 1 || idx > static_cast<int>(vertices.size()))
          throw ParseError("face index out of range", line_number);
        --idx;
      }
      mesh.faces.push_back(f);
    } else {
      throw ParseError("unsupported directive '" + tag + "'", line_number);
    }
  }
  mesh.X.resize(static_cast<Index>(vertices.size()), 3);
  for (size_t i = 0; i < vertices.size(); ++i)
    mesh.X.row(static_cast<Index>(i)) = vertices[i].transpose();
  return mesh;
}

void save_xyz(const std::string& path, const Points& P) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (Index i = 0; i < P.rows(); ++i)
    out << format_coord(P(i, 0)) << ' ' << format_coord(P(i, 1)) << ' '
        << format_coord(P(i, 2)) << '\n';
}

Points load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Vec3> points;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream ss(line);
    Vec3 p;
    std::string first;
    if (!(ss >> first)) continue;
    if (first[0] == '#') continue;
    char* end = nullptr;
    p(0) = std::strtod(first.c_str(), &end);
    if (end == first.c_str() || *end != '\0')
      throw ParseError("malformed point line", line_number);
    if (!(ss >> p(1) >> p(2))) throw ParseError("malformed point line", line_number);
    points.push_back(p);
  }
  Points out(static_cast<Index>(points.size()), 3);
  for (size_t i = 0; i < points.size(); ++i)
    out.row(static_cast<Index>(i)) = points[i].transpose();
  return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const ManifestEntry& e : entries)
    out << e.path << ' ' << format_coord(e.pose) << '\n';
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.path)) continue;
    if (e.path[0] == '#') continue;
    if (!(ss >> e.pose)) throw ParseError("malformed manifest line", line_number);
    entries.push_back(e);
  }
  return entries;
}

}  // namespace eqfa
