#pragma once

#include <array>
#include <string>
#include <vector>

#include "eqfa/ad.hpp"
#include "eqfa/rng.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

enum class Activation { kRelu, kElu, kTanh };

/// Feed-forward net. widths[0] is the input width, widths.back() the
/// output width; the activation is applied between layers, never after
/// the last. If skip_concat_layer = k >= 1, the original input is
/// concatenated onto layer k's input (SALD-style skip).
struct MlpConfig {
  std::vector<Index> widths;
  Activation activation = Activation::kRelu;
  int skip_concat_layer = -1;
};

/// Per-point layers lift n x 3 to n x point_widths.back(), a column-wise
/// max pools to 1 x w, and the head maps the pooled vector to the output.
struct PointNetConfig {
  std::vector<Index> point_widths;  // starts at 3
  std::vector<Index> head_widths;   // starts at point_widths.back()
};

/// Mean-aggregation message passing over a fixed template graph:
///   h' = act(h W_self + mean_nbr(h) W_nbr + b)
/// for `rounds` rounds, then either a per-vertex linear head (n x out)
/// or a global mean-pool + linear head (1 x out).
struct MeshNetConfig {
  int rounds = 2;
  Index in_width = 3;
  Index hidden = 64;
  Index out_width = 3;
  bool global_pool = false;
  Activation activation = Activation::kElu;
  std::vector<std::vector<int>> adjacency;  // symmetric, no self-loops
};

/// Named views over a ParamMap's tape leaves, bound once per tape.
using VarMap = std::map<std::string, ad::Var>;

/// Bind every parameter as a tape leaf (gradients tracked).
VarMap bind_params(ad::Tape& tape, const ad::ParamMap& params);
/// Bind every parameter as a tape constant (inference).
VarMap bind_params_const(ad::Tape& tape, const ad::ParamMap& params);

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
/// Keys are "<prefix>.W<i>" / "<prefix>.b<i>" (plus head/self/nbr parts
/// for the structured nets).
ad::ParamMap mlp_init(const MlpConfig& cfg, const std::string& prefix, Rng& rng);
ad::ParamMap pointnet_init(const PointNetConfig& cfg, const std::string& prefix, Rng& rng);
ad::ParamMap meshnet_init(const MeshNetConfig& cfg, const std::string& prefix, Rng& rng);

/// x: B x widths[0] -> B x widths.back().
ad::Var mlp_forward(const MlpConfig& cfg, const std::string& prefix, const VarMap& vars,
                    ad::Var x);

/// P: n x 3 -> 1 x head_widths.back(); exactly permutation invariant.
ad::Var pointnet_forward(const PointNetConfig& cfg, const std::string& prefix,
                         const VarMap& vars, ad::Var P);

/// X: n x 3 -> n x out (per-vertex head) or 1 x out (global_pool).
ad::Var meshnet_forward(const MeshNetConfig& cfg, const std::string& prefix,
                        const VarMap& vars, ad::Var X);

/// Undirected neighbor lists from triangle faces over n vertices.
std::vector<std::vector<int>> adjacency_from_faces(
    Index n, const std::vector<std::array<int, 3>>& faces);

}  // namespace eqfa
