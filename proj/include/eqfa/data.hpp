#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eqfa/group.hpp"
#include "eqfa/models.hpp"
#include "eqfa/rng.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

/// Segmented tube bent at its joints; the desk-scale stand-in for an
/// articulated body with known skinning weights.
struct ArticulatedChainSpec {
  int segments = 3;
  int rings_per_segment = 8;
  int ring_size = 8;
  double segment_length = 1.0;
  double radius = 0.35;
  /// One axis-angle vector per joint (norm = angle); empty means rest pose.
  std::vector<Vec3> joint_angles;
  bool soft_weights = false;
};

struct ChainMesh {
  Points X;
  std::vector<std::array<int, 3>> faces;
  PartWeights weights;
};

/// Builds the tube mesh in rest pose, then rigidly rotates everything distal
/// to each joint about that joint's rest pivot. Hard weights assign each ring
/// to its segment; soft weights blend linearly over the two rings flanking
/// each joint.
ChainMesh gen_chain(const ArticulatedChainSpec& spec);

/// Copies the spec with joint angles drawn uniformly in [-max_angle,
/// max_angle] about uniformly random axes.
ArticulatedChainSpec random_pose(const ArticulatedChainSpec& base, double max_angle,
                                 Rng& rng);

enum class SplitKind { kIdentity, kZ, kSO3, kUnseenPose };

SplitKind split_kind_from_string(const std::string& name);
std::string to_string(SplitKind kind);

struct DatasetSplit {
  SplitKind kind = SplitKind::kIdentity;
  std::uint64_t seed = 0;
  std::vector<Index> train;
  std::vector<Index> test;
  /// One motion per test index; identity for kIdentity and kUnseenPose.
  std::vector<EuclideanMotion> test_motions;
};

/// Shuffled 70/30 split with per-test-shape motions by kind; unseen-pose
/// instead holds out the central band of the pose parameter by rank.
DatasetSplit make_splits(const std::vector<double>& poses, SplitKind kind,
                         std::uint64_t seed);

/// Applies the stored test motion; the identity kind returns the input
/// unchanged, bit for bit.
Points apply_test_motion(const DatasetSplit& split, size_t test_pos, const Points& X);

/// Haar-uniform rotation via a normalized Gaussian quaternion.
Mat3 random_rotation(Rng& rng);

/// Haar rotation (optionally reflected with probability 1/2) plus a uniform
/// translation in [-scale, scale]^3.
EuclideanMotion random_motion(Rng& rng, double translation_scale = 1.0,
                              bool allow_reflection = false);

/// Uniform surface samples with Gaussian noise and a fraction of box
/// outliers, emulating noisy scan clouds.
Points sample_chain_cloud(const ChainMesh& mesh, Index count, double noise_sigma,
                          double outlier_fraction, Rng& rng);

/// Noisy samples of a sphere surface centered at the origin.
Points sample_sphere_cloud(double radius, Index count, double noise_sigma, Rng& rng);

struct MeshData {
  Points X;
  std::vector<std::array<int, 3>> faces;
};

/// OBJ subset: "v x y z" and "f i j k" (1-based) lines only, written with 17
/// significant digits so coordinates round trip bit-exactly.
void save_obj(const std::string& path, const Points& X,
              const std::vector<std::array<int, 3>>& faces);
MeshData load_obj(const std::string& path);

/// Whitespace-separated "x y z" per line, same 17-digit round trip.
void save_xyz(const std::string& path, const Points& P);
Points load_xyz(const std::string& path);

struct ManifestEntry {
  std::string path;
  double pose = 0.0;
};

/// Plain-text dataset manifest: one "path pose" line per sample.
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace eqfa
