#include "eqfa/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

ad::Var activate(Activation act, ad::Var x) {
  switch (act) {
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kElu:
      return ad::elu(x);
    case Activation::kTanh:
      return ad::tanh(x);
  }
  throw Error("unknown activation");
}

Matrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Index r = 0; r < fan_in; ++r)
    for (Index c = 0; c < fan_out; ++c) w(r, c) = rng.uniform(-bound, bound);
  return w;
}

ad::Var at(const VarMap& vars, const std::string& key) {
  const auto it = vars.find(key);
  if (it == vars.end()) throw Error("missing parameter " + key);
  return it->second;
}

/// One dense layer on a B x in batch: act? (x W + b).
ad::Var dense(const VarMap& vars, const std::string& w_key, const std::string& b_key,
              ad::Var x) {
  ad::Var y = x * at(vars, w_key);
  return y + ad::broadcast_rows(at(vars, b_key), x.tape->value(x).rows());
}

}  // namespace

VarMap bind_params(ad::Tape& tape, const ad::ParamMap& params) {
  VarMap out;
  for (const auto& [name, m] : params) out[name] = tape.leaf(m);
  return out;
}

VarMap bind_params_const(ad::Tape& tape, const ad::ParamMap& params) {
  VarMap out;
  for (const auto& [name, m] : params) out[name] = tape.constant(m);
  return out;
}

ad::ParamMap mlp_init(const MlpConfig& cfg, const std::string& prefix, Rng& rng) {
  if (cfg.widths.size() < 2) throw Error("mlp_init: need at least one layer");
  ad::ParamMap out;
  for (size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
    Index in = cfg.widths[l];
    if (static_cast<int>(l) == cfg.skip_concat_layer) in += cfg.widths[0];
    const Index w = cfg.widths[l + 1];
    out[prefix + ".W" + std::to_string(l)] = glorot(in, w, rng);
    out[prefix + ".b" + std::to_string(l)] = Matrix::Zero(1, w);
  }
  return out;
}

ad::Var mlp_forward(const MlpConfig& cfg, const std::string& prefix, const VarMap& vars,
                    ad::Var x) {
  if (cfg.widths.size() < 2) throw Error("mlp_forward: need at least one layer");
  if (x.tape->value(x).cols() != cfg.widths[0])
    throw ShapeMismatchError("mlp_forward: input width mismatch");
  ad::Var h = x;
  const size_t layers = cfg.widths.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    if (static_cast<int>(l) == cfg.skip_concat_layer) h = ad::concat_cols(h, x);
    h = dense(vars, prefix + ".W" + std::to_string(l), prefix + ".b" + std::to_string(l), h);
    if (l + 1 < layers) h = activate(cfg.activation, h);
  }
  return h;
}

ad::ParamMap pointnet_init(const PointNetConfig& cfg, const std::string& prefix, Rng& rng) {
  if (cfg.point_widths.size() < 2 || cfg.head_widths.size() < 2)
    throw Error("pointnet_init: need point and head layers");
  if (cfg.point_widths.back() != cfg.head_widths.front())
    throw Error("pointnet_init: pooled width must match head input");
  ad::ParamMap out;
  MlpConfig point{cfg.point_widths, Activation::kRelu, -1};
  MlpConfig head{cfg.head_widths, Activation::kRelu, -1};
  out.merge(mlp_init(point, prefix + ".point", rng));
  out.merge(mlp_init(head, prefix + ".head", rng));
  return out;
}

ad::Var pointnet_forward(const PointNetConfig& cfg, const std::string& prefix,
                         const VarMap& vars, ad::Var P) {
  if (P.tape->value(P).rows() < 1) throw EmptyCloudError("pointnet_forward: empty cloud");
  MlpConfig point{cfg.point_widths, Activation::kRelu, -1};
  MlpConfig head{cfg.head_widths, Activation::kRelu, -1};
  // The per-point stack stays activated through its last layer so the
  // pooled features are bounded below by the activation, as usual.
  ad::Var h = P;
  const size_t layers = cfg.point_widths.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    h = dense(vars, prefix + ".point.W" + std::to_string(l),
              prefix + ".point.b" + std::to_string(l), h);
    h = ad::relu(h);
  }
  ad::Var pooled = ad::max_rows(h);
  return mlp_forward(head, prefix + ".head", vars, pooled);
}

ad::ParamMap meshnet_init(const MeshNetConfig& cfg, const std::string& prefix, Rng& rng) {
  ad::ParamMap out;
  Index w = cfg.in_width;
  for (int r = 0; r < cfg.rounds; ++r) {
    out[prefix + ".self" + std::to_string(r) + ".W"] = glorot(w, cfg.hidden, rng);
    out[prefix + ".nbr" + std::to_string(r) + ".W"] = glorot(w, cfg.hidden, rng);
    out[prefix + ".b" + std::to_string(r)] = Matrix::Zero(1, cfg.hidden);
    w = cfg.hidden;
  }
  out[prefix + ".head.W"] = glorot(w, cfg.out_width, rng);
  out[prefix + ".head.b"] = Matrix::Zero(1, cfg.out_width);
  return out;
}

ad::Var meshnet_forward(const MeshNetConfig& cfg, const std::string& prefix,
                        const VarMap& vars, ad::Var X) {
  const Index n = X.tape->value(X).rows();
  if (!cfg.adjacency.empty() && static_cast<Index>(cfg.adjacency.size()) != n)
    throw ShapeMismatchError("meshnet_forward: adjacency size differs from vertex count");
  std::vector<std::vector<int>> no_edges;
  if (cfg.adjacency.empty()) no_edges.resize(static_cast<size_t>(n));
  const auto& nbrs = cfg.adjacency.empty() ? no_edges : cfg.adjacency;
  ad::Var h = X;
  for (int r = 0; r < cfg.rounds; ++r) {
    ad::Var self = h * at(vars, prefix + ".self" + std::to_string(r) + ".W");
    ad::Var msg = ad::neighbor_mean(h, nbrs) *
                  at(vars, prefix + ".nbr" + std::to_string(r) + ".W");
    ad::Var pre =
        self + msg + ad::broadcast_rows(at(vars, prefix + ".b" + std::to_string(r)), n);
    h = activate(cfg.activation, pre);
  }
  if (cfg.global_pool) h = ad::mean_rows(h);
  return dense(vars, prefix + ".head.W", prefix + ".head.b", h);
}

std::vector<std::vector<int>> adjacency_from_faces(
    Index n, const std::vector<std::array<int, 3>>& faces) {
  std::vector<std::set<int>> sets(static_cast<size_t>(n));
  for (const auto& f : faces)
    for (int e = 0; e < 3; ++e) {
      const int a = f[static_cast<size_t>(e)];
      const int b = f[static_cast<size_t>((e + 1) % 3)];
      if (a == b) continue;
      sets[static_cast<size_t>(a)].insert(b);
      sets[static_cast<size_t>(b)].insert(a);
    }
  std::vector<std::vector<int>> out(static_cast<size_t>(n));
  for (size_t i = 0; i < sets.size(); ++i) out[i].assign(sets[i].begin(), sets[i].end());
  return out;
}

}  // namespace eqfa
