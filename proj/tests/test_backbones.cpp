#include <cmath>

#include "doctest.h"
#include "eqfa/backbones.hpp"
#include "eqfa/errors.hpp"
#include "eqfa/rng.hpp"
#include "support/testers.hpp"

using namespace eqfa;
using testing::random_matrix;
using testing::random_motion;
using testing::random_points;

namespace {

Matrix eval_mlp(const MlpConfig& cfg, const ad::ParamMap& params, const Matrix& x) {
  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  return t.value(mlp_forward(cfg, "f", vars, t.constant(x)));
}

}  // namespace

TEST_SUITE("backbones") {

TEST_CASE("mlp with zero parameters outputs the activation of zero") {
  MlpConfig cfg{{3, 4, 2}, Activation::kRelu, -1};
  ad::ParamMap params;
  params["f.W0"] = Matrix::Zero(3, 4);
  params["f.b0"] = Matrix::Zero(1, 4);
  params["f.W1"] = Matrix::Zero(4, 2);
  params["f.b1"] = Matrix::Zero(1, 2);
  CHECK(eval_mlp(cfg, params, Matrix::Ones(2, 3)) == Matrix::Zero(2, 2));
}

TEST_CASE("identity-initialized single layer passes input through") {
  MlpConfig cfg{{3, 3}, Activation::kRelu, -1};
  ad::ParamMap params;
  params["f.W0"] = Matrix::Identity(3, 3);
  params["f.b0"] = Matrix::Zero(1, 3);
  Rng rng(91);
  const Matrix x = random_matrix(rng, 5, 3);
  CHECK(eval_mlp(cfg, params, x) == x);
}

TEST_CASE("mlp forward matches a hand-rolled loop") {
  Rng rng(92);
  MlpConfig cfg{{4, 6, 6, 2}, Activation::kTanh, -1};
  const ad::ParamMap params = mlp_init(cfg, "f", rng);
  const Matrix x = random_matrix(rng, 3, 4);
  const Matrix y = eval_mlp(cfg, params, x);

  for (Index row = 0; row < x.rows(); ++row) {
    Vector h = x.row(row).transpose();
    for (int l = 0; l < 3; ++l) {
      const Matrix& W = params.at("f.W" + std::to_string(l));
      const Matrix& b = params.at("f.b" + std::to_string(l));
      Vector pre = W.transpose() * h + b.transpose();
      if (l < 2)
        for (Index i = 0; i < pre.size(); ++i) pre(i) = std::tanh(pre(i));
      h = pre;
    }
    CHECK((y.row(row).transpose() - h).norm() < 1e-12);
  }
}

TEST_CASE("skip concatenation re-feeds the input at the configured layer") {
  Rng rng(93);
  MlpConfig cfg{{3, 5, 4, 2}, Activation::kRelu, 1};
  const ad::ParamMap params = mlp_init(cfg, "f", rng);
  CHECK(params.at("f.W1").rows() == 5 + 3);
  const Matrix x = random_matrix(rng, 2, 3);
  const Matrix y = eval_mlp(cfg, params, x);
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 2);

  // Hand evaluation of the skip layer.
  for (Index row = 0; row < 2; ++row) {
    Vector h = x.row(row).transpose();
    h = (params.at("f.W0").transpose() * h + params.at("f.b0").transpose()).cwiseMax(0.0);
    Vector cat(5 + 3);
    cat.head(5) = h;
    cat.tail(3) = x.row(row).transpose();
    h = (params.at("f.W1").transpose() * cat + params.at("f.b1").transpose()).cwiseMax(0.0);
    h = params.at("f.W2").transpose() * h + params.at("f.b2").transpose();
    CHECK((y.row(row).transpose() - h).norm() < 1e-12);
  }
}

TEST_CASE("pointnet is exactly permutation invariant") {
  Rng rng(94);
  PointNetConfig cfg{{3, 8, 8}, {8, 6, 5}};
  const ad::ParamMap params = pointnet_init(cfg, "p", rng);
  const Points P = random_points(rng, 9, 1.5);

  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix base = t.value(pointnet_forward(cfg, "p", vars, t.constant(P)));

  Points perm(9, 3);
  const int order[9] = {4, 7, 1, 0, 8, 2, 6, 5, 3};
  for (int i = 0; i < 9; ++i) perm.row(i) = P.row(order[i]);
  ad::Tape t2;
  VarMap vars2 = bind_params_const(t2, params);
  const Matrix moved = t2.value(pointnet_forward(cfg, "p", vars2, t2.constant(perm)));
  CHECK(base == moved);

  // Duplicating every point leaves the max-pool untouched.
  Points doubled(18, 3);
  doubled.topRows(9) = P;
  doubled.bottomRows(9) = P;
  ad::Tape t3;
  VarMap vars3 = bind_params_const(t3, params);
  CHECK(t3.value(pointnet_forward(cfg, "p", vars3, t3.constant(doubled))) == base);
}

TEST_CASE("pointnet matches a naive per-point loop") {
  Rng rng(95);
  PointNetConfig cfg{{3, 7, 5}, {5, 4}};
  const ad::ParamMap params = pointnet_init(cfg, "p", rng);
  const Points P = random_points(rng, 6, 1.0);

  // Naive: per-point MLP with relu everywhere, column max, head.
  Matrix feats(6, 5);
  for (Index i = 0; i < 6; ++i) {
    Vector h = P.row(i).transpose();
    h = (params.at("p.point.W0").transpose() * h + params.at("p.point.b0").transpose())
            .cwiseMax(0.0);
    h = (params.at("p.point.W1").transpose() * h + params.at("p.point.b1").transpose())
            .cwiseMax(0.0);
    feats.row(i) = h.transpose();
  }
  Vector pooled = feats.colwise().maxCoeff().transpose();
  Vector out = params.at("p.head.W0").transpose() * pooled +
               params.at("p.head.b0").transpose();

  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix got = t.value(pointnet_forward(cfg, "p", vars, t.constant(P)));
  CHECK((got.row(0).transpose() - out).norm() < 1e-12);

  ad::Tape t2;
  VarMap vars2 = bind_params_const(t2, params);
  CHECK_THROWS_AS(pointnet_forward(cfg, "p", vars2, t2.constant(Points(0, 3))),
                  EmptyCloudError);
}

TEST_CASE("single-point clouds pool to the head of that point") {
  Rng rng(96);
  PointNetConfig cfg{{3, 6}, {6, 2}};
  const ad::ParamMap params = pointnet_init(cfg, "p", rng);
  const Points P = random_points(rng, 1, 1.0);
  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix y = t.value(pointnet_forward(cfg, "p", vars, t.constant(P)));
  Vector h = (params.at("p.point.W0").transpose() * P.row(0).transpose() +
              params.at("p.point.b0").transpose())
                 .cwiseMax(0.0);
  Vector expect =
      params.at("p.head.W0").transpose() * h + params.at("p.head.b0").transpose();
  CHECK((y.row(0).transpose() - expect).norm() < 1e-13);
}

TEST_CASE("meshnet with zero rounds is the per-vertex head of coordinates") {
  Rng rng(97);
  MeshNetConfig cfg;
  cfg.rounds = 0;
  cfg.hidden = 8;
  cfg.out_width = 5;
  cfg.adjacency = {{1}, {0, 2}, {1}};
  const ad::ParamMap params = meshnet_init(cfg, "m", rng);
  const Points X = random_points(rng, 3, 1.0);
  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix y = t.value(meshnet_forward(cfg, "m", vars, t.constant(X)));
  const Matrix expect = (X * params.at("m.head.W")).rowwise() +
                        params.at("m.head.b").row(0);
  CHECK((y - expect).norm() < 1e-13);
}

TEST_CASE("meshnet with no edges reduces to a per-vertex mlp") {
  Rng rng(98);
  MeshNetConfig cfg;
  cfg.rounds = 2;
  cfg.hidden = 6;
  cfg.out_width = 3;
  cfg.adjacency = {};
  const ad::ParamMap params = meshnet_init(cfg, "m", rng);
  const Points X = random_points(rng, 4, 1.0);

  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix y = t.value(meshnet_forward(cfg, "m", vars, t.constant(X)));

  for (Index i = 0; i < 4; ++i) {
    Vector h = X.row(i).transpose();
    for (int r = 0; r < 2; ++r) {
      Vector pre = params.at("m.self" + std::to_string(r) + ".W").transpose() * h +
                   params.at("m.b" + std::to_string(r)).transpose();
      for (Index j = 0; j < pre.size(); ++j)
        pre(j) = pre(j) > 0.0 ? pre(j) : std::expm1(pre(j));
      h = pre;
    }
    Vector expect = params.at("m.head.W").transpose() * h +
                    params.at("m.head.b").transpose();
    CHECK((y.row(i).transpose() - expect).norm() < 1e-12);
  }
}

TEST_CASE("meshnet matches a naive message-passing loop on a path graph") {
  Rng rng(99);
  const Index n = 10;
  MeshNetConfig cfg;
  cfg.rounds = 2;
  cfg.hidden = 5;
  cfg.out_width = 4;
  cfg.activation = Activation::kElu;
  cfg.adjacency.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (i > 0) cfg.adjacency[static_cast<size_t>(i)].push_back(static_cast<int>(i - 1));
    if (i + 1 < n) cfg.adjacency[static_cast<size_t>(i)].push_back(static_cast<int>(i + 1));
  }
  const ad::ParamMap params = meshnet_init(cfg, "m", rng);
  const Points X = random_points(rng, n, 1.0);

  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix y = t.value(meshnet_forward(cfg, "m", vars, t.constant(X)));

  Matrix h = X;
  for (int r = 0; r < 2; ++r) {
    Matrix next(n, 5);
    for (Index i = 0; i < n; ++i) {
      Vector mean = Vector::Zero(h.cols());
      const auto& ns = cfg.adjacency[static_cast<size_t>(i)];
      for (int j : ns) mean += h.row(j).transpose();
      mean /= static_cast<double>(ns.size());
      Vector pre =
          params.at("m.self" + std::to_string(r) + ".W").transpose() * h.row(i).transpose() +
          params.at("m.nbr" + std::to_string(r) + ".W").transpose() * mean +
          params.at("m.b" + std::to_string(r)).transpose();
      for (Index j = 0; j < pre.size(); ++j)
        pre(j) = pre(j) > 0.0 ? pre(j) : std::expm1(pre(j));
      next.row(i) = pre.transpose();
    }
    h = next;
  }
  const Matrix expect = (h * params.at("m.head.W")).rowwise() + params.at("m.head.b").row(0);
  CHECK((y - expect).norm() < 1e-12);
}

TEST_CASE("meshnet is equivariant to simultaneous vertex relabeling") {
  Rng rng(100);
  const Index n = 8;
  MeshNetConfig cfg;
  cfg.rounds = 2;
  cfg.hidden = 6;
  cfg.out_width = 3;
  cfg.adjacency.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    cfg.adjacency[static_cast<size_t>(i)].push_back(static_cast<int>((i + 1) % n));
    cfg.adjacency[static_cast<size_t>(i)].push_back(static_cast<int>((i + n - 1) % n));
  }
  const ad::ParamMap params = meshnet_init(cfg, "m", rng);
  const Points X = random_points(rng, n, 1.0);

  ad::Tape t;
  VarMap vars = bind_params_const(t, params);
  const Matrix y = t.value(meshnet_forward(cfg, "m", vars, t.constant(X)));

  // Relabel vertices by a rotation of the cycle.
  std::vector<int> perm(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = static_cast<int>((i + 3) % n);
  Points Xp(n, 3);
  MeshNetConfig cfgp = cfg;
  for (Index i = 0; i < n; ++i) {
    Xp.row(perm[static_cast<size_t>(i)]) = X.row(i);
    std::vector<int> ns;
    for (int j : cfg.adjacency[static_cast<size_t>(i)]) ns.push_back(perm[static_cast<size_t>(j)]);
    std::sort(ns.begin(), ns.end());
    cfgp.adjacency[static_cast<size_t>(perm[static_cast<size_t>(i)])] = ns;
  }
  ad::Tape t2;
  VarMap vars2 = bind_params_const(t2, params);
  const Matrix yp = t2.value(meshnet_forward(cfgp, "m", vars2, t2.constant(Xp)));
  for (Index i = 0; i < n; ++i)
    CHECK((yp.row(perm[static_cast<size_t>(i)]) - y.row(i)).norm() < 1e-12);
}

TEST_CASE("no backbone is Euclidean-equivariant on its own") {
  Rng rng(101);
  const Index n = 8;
  const Points X = random_points(rng, n, 1.0);
  const EuclideanMotion g = random_motion(rng, 1.0);
  const Points gX = act_points(g, X);

  // MeshNet decoder shape: n x 3 -> n x 3.
  MeshNetConfig mcfg;
  mcfg.rounds = 1;
  mcfg.hidden = 8;
  mcfg.out_width = 3;
  mcfg.adjacency.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i)
    mcfg.adjacency[static_cast<size_t>(i)].push_back(static_cast<int>((i + 1) % n));
  for (Index i = 0; i < n; ++i)
    mcfg.adjacency[static_cast<size_t>((i + 1) % n)].push_back(static_cast<int>(i));
  const ad::ParamMap mp = meshnet_init(mcfg, "m", rng);
  ad::Tape t;
  VarMap vars = bind_params_const(t, mp);
  const Matrix base = t.value(meshnet_forward(mcfg, "m", vars, t.constant(X)));
  ad::Tape t2;
  VarMap vars2 = bind_params_const(t2, mp);
  const Matrix moved = t2.value(meshnet_forward(mcfg, "m", vars2, t2.constant(gX)));
  const Matrix expect = (base * g.R.transpose()).rowwise() + g.t.transpose();
  CHECK((moved - expect).norm() > 1e-2);
}

TEST_CASE("adjacency_from_faces builds symmetric loop-free lists") {
  const std::vector<std::array<int, 3>> faces = {{0, 1, 2}, {0, 2, 3}};
  const auto adj = adjacency_from_faces(4, faces);
  CHECK(adj[0] == std::vector<int>({1, 2, 3}));
  CHECK(adj[1] == std::vector<int>({0, 2}));
  CHECK(adj[2] == std::vector<int>({0, 1, 3}));
  CHECK(adj[3] == std::vector<int>({0, 2}));
}

}  // TEST_SUITE
