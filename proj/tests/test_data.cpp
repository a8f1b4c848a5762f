#include "eqfa/data.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "eqfa/errors.hpp"
#include "support/testers.hpp"

using namespace eqfa;

namespace {

ArticulatedChainSpec small_spec() {
  ArticulatedChainSpec spec;
  spec.segments = 2;
  spec.rings_per_segment = 2;
  spec.ring_size = 4;
  return spec;
}

Vec3 rest_vertex(const ArticulatedChainSpec& spec, int ring, int v) {
  const double dz = spec.segment_length / spec.rings_per_segment;
  const double base = 2.0 * M_PI * v / spec.ring_size;
  const double theta = base + 0.45 * std::sin(base);
  return {spec.radius * std::cos(theta), spec.radius * std::sin(theta),
          (ring + 0.5) * dz};
}

std::string temp_path(const char* name) {
  return std::string("/tmp/eqfa_data_test_") + name;
}

}  // namespace

TEST_CASE("chain rest pose is a capped cylinder") {
  ArticulatedChainSpec spec;  // defaults: 3 segments, 8 rings, 8 per ring
  const ChainMesh mesh = gen_chain(spec);

  const Index n = 3 * 8 * 8 + 2;
  REQUIRE(mesh.X.rows() == n);
  CHECK(mesh.faces.size() == static_cast<size_t>((24 - 1) * 8 * 2 + 2 * 8));

  for (int ring = 0; ring < 24; ++ring) {
    for (int v = 0; v < 8; ++v) {
      const Vec3 p = mesh.X.row(ring * 8 + v).transpose();
      CHECK(p.head<2>().norm() == doctest::Approx(0.35).epsilon(1e-12));
      CHECK(p(2) == doctest::Approx((ring + 0.5) / 8.0).epsilon(1e-12));
    }
  }
  CHECK(mesh.X.row(n - 2).norm() == 0.0);
  CHECK((mesh.X.row(n - 1).transpose() - Vec3(0, 0, 3)).norm() == 0.0);

  // repeated generation is bitwise identical
  const ChainMesh again = gen_chain(spec);
  CHECK((mesh.X - again.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mesh.faces == again.faces);
}

TEST_CASE("chain surface is a closed oriented manifold") {
  ArticulatedChainSpec spec;
  spec.joint_angles = {Vec3(0.3, 0.1, 0.0), Vec3(-0.2, 0.4, 0.1)};
  const ChainMesh mesh = gen_chain(spec);

  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) ++directed[{f[e], f[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    CHECK(count == 1);
    REQUIRE(directed.count({edge.second, edge.first}) == 1);
  }
  // Euler characteristic of a sphere
  const int V = static_cast<int>(mesh.X.rows());
  const int E = static_cast<int>(directed.size()) / 2;
  const int F = static_cast<int>(mesh.faces.size());
  CHECK(V - E + F == 2);
}

TEST_CASE("right-angle joint rotates the distal half about the pivot") {
  ArticulatedChainSpec spec = small_spec();
  spec.joint_angles = {Vec3(M_PI_2, 0.0, 0.0)};
  const ChainMesh mesh = gen_chain(spec);
  const ChainMesh rest = gen_chain(small_spec());

  // proximal segment and bottom apex untouched
  for (Index i = 0; i < 8; ++i)
    CHECK((mesh.X.row(i) - rest.X.row(i)).norm() == 0.0);
  CHECK((mesh.X.row(16) - rest.X.row(16)).norm() == 0.0);

  // rotation by pi/2 about +x at (0, 0, 1): (x, y, z) -> (x, 1 - z, y + 1)
  for (Index i = 8; i < 16; ++i) {
    const Vec3 r = rest.X.row(i).transpose();
    const Vec3 expect(r(0), 1.0 - r(2), r(1) + 1.0);
    CHECK((mesh.X.row(i).transpose() - expect).norm() < 1e-12);
  }
  const Vec3 top = mesh.X.row(17).transpose();
  CHECK((top - Vec3(0, -1, 1)).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches joint-by-joint transformation") {
  ArticulatedChainSpec spec;
  spec.segments = 4;
  spec.rings_per_segment = 3;
  spec.ring_size = 5;
  spec.segment_length = 0.8;
  spec.radius = 0.2;
  spec.joint_angles = {Vec3(0.4, -0.2, 0.7), Vec3(-1.1, 0.3, 0.2), Vec3(0.05, 0.9, -0.6)};
  const ChainMesh mesh = gen_chain(spec);

  auto joint_rotation = [](const Vec3& w) {
    return Eigen::AngleAxisd(w.norm(), Vec3(w.normalized())).toRotationMatrix();
  };
  // push each rest vertex through the joints one at a time, innermost first
  auto world = [&](Vec3 p, int segment) {
    for (int j = segment; j >= 1; --j) {
      const Vec3 pivot(0.0, 0.0, j * spec.segment_length);
      p = pivot + joint_rotation(spec.joint_angles[static_cast<size_t>(j - 1)]) * (p - pivot);
    }
    return p;
  };

  const int total_rings = spec.segments * spec.rings_per_segment;
  for (int ring = 0; ring < total_rings; ++ring) {
    const int segment = ring / spec.rings_per_segment;
    for (int v = 0; v < spec.ring_size; ++v) {
      const Vec3 expect = world(rest_vertex(spec, ring, v), segment);
      const Vec3 got = mesh.X.row(ring * spec.ring_size + v).transpose();
      CHECK((got - expect).norm() < 1e-12);
    }
  }
  const Index n = mesh.X.rows();
  CHECK((mesh.X.row(n - 2).transpose() - world(Vec3(0, 0, 0), 0)).norm() < 1e-12);
  const Vec3 tip(0, 0, spec.segments * spec.segment_length);
  CHECK((mesh.X.row(n - 1).transpose() - world(tip, spec.segments - 1)).norm() < 1e-12);
}

TEST_CASE("posing preserves distances within each segment") {
  ArticulatedChainSpec posed;
  Rng rng(41);
  posed.joint_angles = {Vec3(0.9, -0.4, 0.3), Vec3(0.2, 1.1, -0.8)};
  const ChainMesh rest = gen_chain(ArticulatedChainSpec{});
  const ChainMesh mesh = gen_chain(posed);
  for (int segment = 0; segment < 3; ++segment) {
    const int base = segment * 8 * 8;
    for (int trial = 0; trial < 40; ++trial) {
      const int a = base + static_cast<int>(rng.below(64));
      const int b = base + static_cast<int>(rng.below(64));
      const double d_rest = (rest.X.row(a) - rest.X.row(b)).norm();
      const double d_posed = (mesh.X.row(a) - mesh.X.row(b)).norm();
      CHECK(d_posed == doctest::Approx(d_rest).epsilon(1e-12));
    }
  }
}

TEST_CASE("hard weights assign rings to segments and caps to the ends") {
  const ChainMesh mesh = gen_chain(ArticulatedChainSpec{});
  REQUIRE(mesh.weights.W.rows() == mesh.X.rows());
  REQUIRE(mesh.weights.W.cols() == 3);
  CHECK(mesh.weights.hard);

  for (int ring = 0; ring < 24; ++ring) {
    const int segment = ring / 8;
    for (int v = 0; v < 8; ++v) {
      const Index row = ring * 8 + v;
      for (int j = 0; j < 3; ++j)
        CHECK(mesh.weights.W(row, j) == (j == segment ? 1.0 : 0.0));
    }
  }
  const Index n = mesh.X.rows();
  CHECK(mesh.weights.W(n - 2, 0) == 1.0);
  CHECK(mesh.weights.W(n - 1, 2) == 1.0);
}

TEST_CASE("soft weights ramp linearly across the rings flanking a joint") {
  ArticulatedChainSpec spec;
  spec.soft_weights = true;
  const ChainMesh mesh = gen_chain(spec);
  CHECK_FALSE(mesh.weights.hard);

  // ring 7 sits half a ring below joint 1, ring 8 half a ring above
  for (int v = 0; v < 8; ++v) {
    CHECK(mesh.weights.W(7 * 8 + v, 0) == 0.75);
    CHECK(mesh.weights.W(7 * 8 + v, 1) == 0.25);
    CHECK(mesh.weights.W(8 * 8 + v, 0) == 0.25);
    CHECK(mesh.weights.W(8 * 8 + v, 1) == 0.75);
    CHECK(mesh.weights.W(15 * 8 + v, 1) == 0.75);
    CHECK(mesh.weights.W(15 * 8 + v, 2) == 0.25);
    CHECK(mesh.weights.W(16 * 8 + v, 1) == 0.25);
    CHECK(mesh.weights.W(16 * 8 + v, 2) == 0.75);
    // rings away from both joints stay pure
    CHECK(mesh.weights.W(3 * 8 + v, 0) == 1.0);
    CHECK(mesh.weights.W(12 * 8 + v, 1) == 1.0);
    CHECK(mesh.weights.W(20 * 8 + v, 2) == 1.0);
  }
  for (Index i = 0; i < mesh.weights.W.rows(); ++i)
    CHECK(mesh.weights.W.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chain spec validation") {
  ArticulatedChainSpec spec;
  spec.segments = 1;
  CHECK_THROWS_WITH_AS(gen_chain(spec), "segments must be ≥ 2", InvalidSpecError);

  spec = ArticulatedChainSpec{};
  spec.ring_size = 2;
  CHECK_THROWS_AS(gen_chain(spec), InvalidSpecError);
  spec = ArticulatedChainSpec{};
  spec.rings_per_segment = 0;
  CHECK_THROWS_AS(gen_chain(spec), InvalidSpecError);
  spec = ArticulatedChainSpec{};
  spec.segment_length = 0.0;
  CHECK_THROWS_AS(gen_chain(spec), InvalidSpecError);
  spec = ArticulatedChainSpec{};
  spec.radius = -0.1;
  CHECK_THROWS_AS(gen_chain(spec), InvalidSpecError);
  spec = ArticulatedChainSpec{};
  spec.joint_angles = {Vec3::Zero()};  // needs segments - 1 = 2 entries
  CHECK_THROWS_AS(gen_chain(spec), InvalidSpecError);
}

TEST_CASE("random poses stay within the angle budget") {
  ArticulatedChainSpec base;
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const ArticulatedChainSpec posed = random_pose(base, 0.6, rng);
    REQUIRE(posed.joint_angles.size() == 2);
    for (const Vec3& w : posed.joint_angles) CHECK(w.norm() <= 0.6);
  }
  CHECK_THROWS_AS(random_pose(base, -1.0, rng), InvalidSpecError);
}

TEST_CASE("split kinds round trip through their names") {
  for (SplitKind kind : {SplitKind::kIdentity, SplitKind::kZ, SplitKind::kSO3,
                         SplitKind::kUnseenPose})
    CHECK(split_kind_from_string(to_string(kind)) == kind);
  CHECK_THROWS_AS(split_kind_from_string("bogus"), ConfigError);
}

TEST_CASE("splits partition the dataset 70/30 and reproduce from the seed") {
  std::vector<double> poses(40);
  Rng rng(7);
  for (double& p : poses) p = rng.uniform(0.0, 1.0);

  const DatasetSplit split = make_splits(poses, SplitKind::kIdentity, 99);
  CHECK(split.train.size() == 28);
  CHECK(split.test.size() == 12);
  CHECK(split.test_motions.size() == 12);

  std::set<Index> seen(split.train.begin(), split.train.end());
  seen.insert(split.test.begin(), split.test.end());
  CHECK(seen.size() == 40);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 39);

  const DatasetSplit again = make_splits(poses, SplitKind::kIdentity, 99);
  CHECK(again.train == split.train);
  CHECK(again.test == split.test);
  const DatasetSplit other = make_splits(poses, SplitKind::kIdentity, 100);
  CHECK(other.train != split.train);

  CHECK_THROWS_AS(make_splits({}, SplitKind::kIdentity, 0), EmptyBatchError);
}

TEST_CASE("identity split applies motions bit-identically") {
  std::vector<double> poses(10, 0.0);
  const DatasetSplit split = make_splits(poses, SplitKind::kIdentity, 3);
  Rng rng(11);
  const Points X = testing::random_points(rng, 17);
  for (size_t i = 0; i < split.test.size(); ++i) {
    const Points moved = apply_test_motion(split, i, X);
    CHECK((moved - X).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(apply_test_motion(split, split.test.size(), X), DimensionMismatchError);
}

TEST_CASE("z split rotates about the vertical axis only") {
  std::vector<double> poses(20, 0.0);
  const DatasetSplit split = make_splits(poses, SplitKind::kZ, 17);
  Rng rng(13);
  const Points X = testing::random_points(rng, 9);
  bool some_rotation = false;
  for (size_t i = 0; i < split.test.size(); ++i) {
    const EuclideanMotion& g = split.test_motions[i];
    CHECK(g.t.norm() == 0.0);
    CHECK(g.R(2, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((g.R * Vec3::UnitZ() - Vec3::UnitZ()).norm() < 1e-15);
    const Points moved = apply_test_motion(split, i, X);
    CHECK((moved.col(2) - X.col(2)).cwiseAbs().maxCoeff() < 1e-15);
    if ((moved - X).cwiseAbs().maxCoeff() > 0.1) some_rotation = true;
  }
  CHECK(some_rotation);
}

TEST_CASE("SO3 split draws proper rotations with zero translation") {
  std::vector<double> poses(20, 0.0);
  const DatasetSplit split = make_splits(poses, SplitKind::kSO3, 23);
  for (const EuclideanMotion& g : split.test_motions) {
    CHECK(g.t.norm() == 0.0);
    CHECK((g.R * g.R.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK(g.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("unseen-pose split holds out the central band of pose values") {
  std::vector<double> poses(30);
  Rng rng(29);
  for (double& p : poses) p = rng.uniform(-2.0, 2.0);
  const DatasetSplit split = make_splits(poses, SplitKind::kUnseenPose, 31);
  CHECK(split.test.size() == 9);
  CHECK(split.train.size() == 21);

  double test_lo = 1e300, test_hi = -1e300;
  for (Index i : split.test) {
    test_lo = std::min(test_lo, poses[static_cast<size_t>(i)]);
    test_hi = std::max(test_hi, poses[static_cast<size_t>(i)]);
  }
  int below = 0, above = 0;
  for (Index i : split.train) {
    const double p = poses[static_cast<size_t>(i)];
    CHECK((p < test_lo || p > test_hi));
    below += p < test_lo;
    above += p > test_hi;
  }
  CHECK(below > 0);
  CHECK(above > 0);

  Points X(4, 3);
  X.setRandom();
  for (size_t i = 0; i < split.test.size(); ++i)
    CHECK((apply_test_motion(split, i, X) - X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random rotations have Haar first and second trace moments") {
  Rng rng(101);
  const int draws = 10000;
  Mat3 mean_R = Mat3::Zero();
  double mean_tr = 0.0, mean_tr2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Mat3 R = random_rotation(rng);
    CHECK((R * R.transpose() - Mat3::Identity()).norm() < 1e-12);
    mean_R += R;
    const double tr = R.trace();
    mean_tr += tr;
    mean_tr2 += tr * tr;
  }
  mean_R /= draws;
  mean_tr /= draws;
  mean_tr2 /= draws;
  CHECK(mean_R.cwiseAbs().maxCoeff() < 0.0173);  // 3 sigma at sigma_entry = sqrt(1/3)
  CHECK(std::abs(mean_tr) < 0.03);               // Var(tr) = 1 under Haar
  CHECK(std::abs(mean_tr2 - 1.0) < 0.05);        // E[tr^2] = 1, Var = 2
}

TEST_CASE("random motions cover translations and optional reflections") {
  Rng rng(113);
  bool saw_reflection = false, saw_rotation = false;
  for (int i = 0; i < 50; ++i) {
    const EuclideanMotion g = random_motion(rng, 2.0, true);
    CHECK((g.R * g.R.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK(g.t.cwiseAbs().maxCoeff() <= 2.0);
    const double det = g.R.determinant();
    if (det < 0.0) saw_reflection = true;
    if (det > 0.0) saw_rotation = true;
  }
  CHECK(saw_reflection);
  CHECK(saw_rotation);

  for (int i = 0; i < 20; ++i)
    CHECK(random_motion(rng, 1.0, false).R.determinant() ==
          doctest::Approx(1.0).epsilon(1e-12));

  const EuclideanMotion pinned = random_motion(rng, 0.0);
  CHECK(pinned.t.norm() == 0.0);
  CHECK_THROWS_AS(random_motion(rng, -1.0), InvalidSpecError);
}

TEST_CASE("chain clouds sample the surface with controlled noise") {
  const ChainMesh mesh = gen_chain(ArticulatedChainSpec{});
  Rng rng(131);
  const Points cloud = sample_chain_cloud(mesh, 300, 0.0, 0.0, rng);
  REQUIRE(cloud.rows() == 300);

  // noiseless samples lie on a face, hence within an edge length of a vertex
  for (Index s = 0; s < cloud.rows(); ++s) {
    double nearest = 1e300;
    for (Index v = 0; v < mesh.X.rows(); ++v)
      nearest = std::min(nearest, (cloud.row(s) - mesh.X.row(v)).norm());
    CHECK(nearest < 0.35);
  }

  Rng rng_a(137), rng_b(137);
  const Points a = sample_chain_cloud(mesh, 64, 0.01, 0.1, rng_a);
  const Points b = sample_chain_cloud(mesh, 64, 0.01, 0.1, rng_b);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // all-outlier clouds fill the inflated bounding box
  Rng rng_c(139);
  const Points outliers = sample_chain_cloud(mesh, 200, 0.0, 1.0, rng_c);
  const Vec3 lo = mesh.X.colwise().minCoeff().transpose();
  const Vec3 hi = mesh.X.colwise().maxCoeff().transpose();
  const Vec3 pad = 0.1 * (hi - lo);
  bool outside_tight = false;
  for (Index s = 0; s < outliers.rows(); ++s) {
    for (int c = 0; c < 3; ++c) {
      CHECK(outliers(s, c) >= lo(c) - pad(c));
      CHECK(outliers(s, c) <= hi(c) + pad(c));
    }
    if (outliers(s, 0) < lo(0) || outliers(s, 0) > hi(0)) outside_tight = true;
  }
  CHECK(outside_tight);

  CHECK_THROWS_AS(sample_chain_cloud(mesh, 0, 0.0, 0.0, rng), InvalidSpecError);
  CHECK_THROWS_AS(sample_chain_cloud(mesh, 10, -1.0, 0.0, rng), InvalidSpecError);
  CHECK_THROWS_AS(sample_chain_cloud(mesh, 10, 0.0, 1.5, rng), InvalidSpecError);
}

TEST_CASE("sphere clouds concentrate at the requested radius") {
  Rng rng(149);
  const Points exact = sample_sphere_cloud(0.75, 500, 0.0, rng);
  for (Index s = 0; s < exact.rows(); ++s)
    CHECK(exact.row(s).norm() == doctest::Approx(0.75).epsilon(1e-12));

  const Points noisy = sample_sphere_cloud(0.75, 2000, 0.02, rng);
  CHECK(noisy.colwise().mean().norm() < 0.05);
  double mean_r = 0.0;
  for (Index s = 0; s < noisy.rows(); ++s) mean_r += noisy.row(s).norm();
  CHECK(mean_r / 2000 == doctest::Approx(0.75).epsilon(0.02));

  CHECK_THROWS_AS(sample_sphere_cloud(0.0, 10, 0.0, rng), InvalidSpecError);
  CHECK_THROWS_AS(sample_sphere_cloud(1.0, -1, 0.0, rng), InvalidSpecError);
}

TEST_CASE("obj files round trip bit-exactly") {
  Points X(8, 3);
  X << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1;
  X *= std::sqrt(2.0);  // irrational coordinates exercise the 17-digit format
  X.array() -= 1.0 / 3.0;
  const std::vector<std::array<int, 3>> faces = {
      {0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
      {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};

  const std::string path = temp_path("cube.obj");
  save_obj(path, X, faces);
  const MeshData loaded = load_obj(path);
  REQUIRE(loaded.X.rows() == 8);
  CHECK((loaded.X - X).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.faces == faces);
}

TEST_CASE("obj parser reports malformed lines with their numbers") {
  const std::string path = temp_path("bad.obj");
  auto write_file = [&](const char* text) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs(text, f);
    std::fclose(f);
  };

  write_file("v 0 0 0\n\n# comment\nv 1 0\n");
  try {
    load_obj(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 4);
    CHECK(std::string(e.what()) == "malformed vertex line (line 4)");
  }

  write_file("v 0 0 0\nvt 0 0\n");
  try {
    load_obj(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }

  write_file("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
  try {
    load_obj(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 4);
    CHECK(std::string(e.what()) == "face index out of range (line 4)");
  }

  write_file("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_AS(load_obj(path), ParseError);

  // comments and blank lines are fine
  write_file("# header\n\nv 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 3\n");
  const MeshData ok = load_obj(path);
  CHECK(ok.X.rows() == 3);
  CHECK(ok.faces.size() == 1);

  CHECK_THROWS_AS(load_obj("/nonexistent/nowhere.obj"), Error);
}

TEST_CASE("xyz files round trip bit-exactly") {
  Rng rng(151);
  const Points P = testing::random_points(rng, 37, 3.0);
  const std::string path = temp_path("cloud.xyz");
  save_xyz(path, P);
  const Points loaded = load_xyz(path);
  REQUIRE(loaded.rows() == 37);
  CHECK((loaded - P).cwiseAbs().maxCoeff() == 0.0);

  std::FILE* f = std::fopen(path.c_str(), "w");
  REQUIRE(f != nullptr);
  std::fputs("0 0 0\noops 1 2\n", f);
  std::fclose(f);
  try {
    load_xyz(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("manifests round trip paths and pose values") {
  const std::vector<ManifestEntry> entries = {
      {"shapes/chain_000.obj", 0.0},
      {"shapes/chain_001.obj", 0.72315614430871345},
      {"shapes/chain_002.obj", -1.5}};
  const std::string path = temp_path("manifest.txt");
  save_manifest(path, entries);
  const std::vector<ManifestEntry> loaded = load_manifest(path);
  REQUIRE(loaded.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].path == entries[i].path);
    CHECK(loaded[i].pose == entries[i].pose);
  }

  std::FILE* f = std::fopen(path.c_str(), "w");
  REQUIRE(f != nullptr);
  std::fputs("# dataset\nshapes/a.obj 0.5\nshapes/b.obj\n", f);
  std::fclose(f);
  try {
    load_manifest(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
  }
}
