#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <vector>

#include "eqfa/config.hpp"
#include "eqfa/data.hpp"
#include "eqfa/errors.hpp"
#include "eqfa/eval.hpp"
#include "eqfa/fa.hpp"
#include "eqfa/latent.hpp"
#include "eqfa/models.hpp"

namespace eqfa::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShapeStream = 0x73686170;  // per-shape generation draws
constexpr std::uint64_t kInitStream = 0x696e6974;   // parameter initialization
constexpr std::uint64_t kEvalStream = 0x6576616c;   // evaluation-time draws

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Config load_config(const GlobalOptions& opts) {
  if (opts.config_path.empty()) return Config{};
  return Config::load(opts.config_path);
}

std::uint64_t pick_seed(const GlobalOptions& opts, const Config& cfg,
                        const std::string& section) {
  if (opts.seed_given) return opts.seed;
  return cfg.u64(section, "seed", 0);
}

// ---- dataset persistence -------------------------------------------------

struct Dataset {
  std::string dir;
  std::string kind;                       // chains | spheres
  std::vector<Points> shapes;             // vertex matrices or point clouds
  std::vector<std::array<int, 3>> faces;  // shared topology; empty for clouds
  std::vector<double> poses;
};

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  const Config info = Config::load((fs::path(dir) / "dataset_info.txt").string());
  ds.kind = info.str("", "kind");
  for (const ManifestEntry& e : load_manifest((fs::path(dir) / "manifest.txt").string())) {
    const std::string path = (fs::path(dir) / e.path).string();
    if (e.path.size() > 4 && e.path.substr(e.path.size() - 4) == ".obj") {
      MeshData mesh = load_obj(path);
      if (ds.faces.empty()) ds.faces = mesh.faces;
      ds.shapes.push_back(std::move(mesh.X));
    } else {
      ds.shapes.push_back(load_xyz(path));
    }
    ds.poses.push_back(e.pose);
  }
  if (ds.shapes.empty()) throw ConfigError("dataset at " + dir + " is empty");
  return ds;
}

void save_split(const std::string& path, const DatasetSplit& split) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "kind " << to_string(split.kind) << '\n';
  out << "seed " << split.seed << '\n';
  for (Index i : split.train) out << "train " << i << '\n';
  for (size_t j = 0; j < split.test.size(); ++j) {
    out << "test " << split.test[j];
    const EuclideanMotion& g = split.test_motions[j];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << ' ' << fmt(g.R(r, c));
    for (int c = 0; c < 3; ++c) out << ' ' << fmt(g.t(c));
    out << '\n';
  }
}

DatasetSplit load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open split file " + path);
  DatasetSplit split;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "kind") {
      std::string name;
      if (!(ss >> name)) throw ParseError("missing split kind", line_number);
      split.kind = split_kind_from_string(name);
    } else if (tag == "seed") {
      if (!(ss >> split.seed)) throw ParseError("malformed seed line", line_number);
    } else if (tag == "train") {
      Index i;
      if (!(ss >> i)) throw ParseError("malformed train line", line_number);
      split.train.push_back(i);
    } else if (tag == "test") {
      Index i;
      EuclideanMotion g;
      if (!(ss >> i)) throw ParseError("malformed test line", line_number);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          if (!(ss >> g.R(r, c))) throw ParseError("malformed test motion", line_number);
      for (int c = 0; c < 3; ++c)
        if (!(ss >> g.t(c))) throw ParseError("malformed test motion", line_number);
      split.test.push_back(i);
      split.test_motions.push_back(g);
    } else {
      throw ParseError("unsupported directive '" + tag + "'", line_number);
    }
  }
  return split;
}

void save_weights(const std::string& path, const Matrix& W) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << W.rows() << ' ' << W.cols() << '\n';
  for (Index i = 0; i < W.rows(); ++i) {
    for (Index j = 0; j < W.cols(); ++j) out << (j ? " " : "") << fmt(W(i, j));
    out << '\n';
  }
}

PartWeights load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open weights file " + path);
  Index n = 0, k = 0;
  if (!(in >> n >> k) || n < 1 || k < 1) throw ParseError("malformed weights header", 1);
  Matrix W(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j)
      if (!(in >> W(i, j)))
        throw ParseError("malformed weights row", static_cast<int>(i) + 2);
  return make_part_weights(std::move(W));
}

void write_kv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

// ---- model construction ----------------------------------------------------

ArticulatedChainSpec chain_spec_from(const Config& cfg) {
  ArticulatedChainSpec spec;
  spec.segments = static_cast<int>(cfg.integer("dataset", "segments", spec.segments));
  spec.rings_per_segment =
      static_cast<int>(cfg.integer("dataset", "rings_per_segment", spec.rings_per_segment));
  spec.ring_size = static_cast<int>(cfg.integer("dataset", "ring_size", spec.ring_size));
  spec.segment_length = cfg.num("dataset", "segment_length", spec.segment_length);
  spec.radius = cfg.num("dataset", "radius", spec.radius);
  spec.soft_weights = cfg.flag("dataset", "soft_weights", spec.soft_weights);
  return spec;
}

LatentDims dims_from(const Config& cfg) {
  LatentDims dims;
  dims.m = cfg.integer("model", "invariant_dim", dims.m);
  dims.d = cfg.integer("model", "equivariant_dim", dims.d);
  return dims;
}

GlobalMeshAE build_global(const Config& cfg, const Dataset& ds, std::uint64_t seed) {
  if (ds.faces.empty()) throw ConfigError("mesh model needs a mesh dataset");
  const Index n = ds.shapes.front().rows();
  Rng rng = Rng(seed).fork(kInitStream);
  return make_global_mesh_ae(n, adjacency_from_faces(n, ds.faces), dims_from(cfg),
                             cfg.integer("model", "hidden", 64),
                             static_cast<int>(cfg.integer("model", "rounds", 2)), rng,
                             cfg.flag("model", "fa", true));
}

PiecewiseMeshAE build_piecewise(const Config& cfg, const Dataset& ds, std::uint64_t seed) {
  if (ds.faces.empty()) throw ConfigError("mesh model needs a mesh dataset");
  const Index n = ds.shapes.front().rows();
  PartWeights parts = load_weights((fs::path(ds.dir) / "weights.txt").string());
  Rng rng = Rng(seed).fork(kInitStream);
  return make_piecewise_mesh_ae(n, adjacency_from_faces(n, ds.faces), std::move(parts),
                                dims_from(cfg), cfg.integer("model", "hidden", 64),
                                static_cast<int>(cfg.integer("model", "rounds", 2)), rng);
}

ImplicitVAE build_implicit(const Config& cfg, std::uint64_t seed) {
  LatentDims dims;
  dims.m = cfg.integer("model", "invariant_dim", 0);
  dims.d = cfg.integer("model", "equivariant_dim", 8);
  SaldConfig sald;
  const double half = cfg.num("model", "sald_box", 1.0);
  sald.box_lo = Vec3::Constant(-half);
  sald.box_hi = Vec3::Constant(half);
  sald.samples = cfg.integer("model", "sald_samples", sald.samples);
  sald.gauss_sigma_rel = cfg.num("model", "sald_sigma_rel", sald.gauss_sigma_rel);
  sald.fd_step = cfg.num("model", "sald_fd_step", sald.fd_step);
  sald.radial_r0 = cfg.num("model", "radial_r0", sald.radial_r0);
  Rng rng = Rng(seed).fork(kInitStream);
  ImplicitVAE model =
      make_implicit_vae(dims, cfg.integer("model", "hidden", 64), sald, rng);
  model.vae_weight = cfg.num("model", "vae_weight", model.vae_weight);
  return model;
}

std::vector<Points> gather(const std::vector<Points>& shapes, const std::vector<Index>& idx) {
  std::vector<Points> out;
  out.reserve(idx.size());
  for (Index i : idx) {
    if (i < 0 || i >= static_cast<Index>(shapes.size()))
      throw ConfigError("split index out of range: " + std::to_string(i));
    out.push_back(shapes[static_cast<size_t>(i)]);
  }
  return out;
}

}  // namespace

// ---- gen -------------------------------------------------------------------

int cmd_gen(const GlobalOptions& opts) {
  const Config cfg = load_config(opts);
  const std::string kind = cfg.str("dataset", "kind", "chains");
  const Index count = cfg.integer("dataset", "count", 256);
  if (count < 1) throw ConfigError("dataset.count must be positive");
  const std::uint64_t seed = pick_seed(opts, cfg, "dataset");

  const fs::path out(opts.out_dir);
  fs::create_directories(out / "splits");
  std::vector<ManifestEntry> entries;
  Rng rng(seed);

  if (kind == "chains") {
    fs::create_directories(out / "shapes");
    const ArticulatedChainSpec base = chain_spec_from(cfg);
    const double max_angle = cfg.num("dataset", "max_angle", 1.0);
    for (Index i = 0; i < count; ++i) {
      Rng shape_rng = rng.fork(kShapeStream, static_cast<std::uint64_t>(i));
      const ArticulatedChainSpec posed = random_pose(base, max_angle, shape_rng);
      const ChainMesh mesh = gen_chain(posed);
      char name[64];
      std::snprintf(name, sizeof name, "shapes/chain_%04d.obj", static_cast<int>(i));
      save_obj((out / name).string(), mesh.X, mesh.faces);
      double sq = 0.0;
      for (const Vec3& w : posed.joint_angles) sq += w.squaredNorm();
      entries.push_back({name, std::sqrt(sq)});
    }
    save_weights((out / "weights.txt").string(), gen_chain(base).weights.W);
  } else if (kind == "spheres") {
    fs::create_directories(out / "clouds");
    const double r_lo = cfg.num("dataset", "radius_min", 0.4);
    const double r_hi = cfg.num("dataset", "radius_max", 0.6);
    const Index points = cfg.integer("dataset", "points", 256);
    const double noise = cfg.num("dataset", "noise_sigma", 0.01);
    for (Index i = 0; i < count; ++i) {
      Rng shape_rng = rng.fork(kShapeStream, static_cast<std::uint64_t>(i));
      const double radius = shape_rng.uniform(r_lo, r_hi);
      const Points cloud = sample_sphere_cloud(radius, points, noise, shape_rng);
      char name[64];
      std::snprintf(name, sizeof name, "clouds/sphere_%04d.xyz", static_cast<int>(i));
      save_xyz((out / name).string(), cloud);
      entries.push_back({name, radius});
    }
  } else {
    throw ConfigError("unknown dataset kind: " + kind);
  }

  save_manifest((out / "manifest.txt").string(), entries);
  write_kv((out / "dataset_info.txt").string(),
           {{"kind", kind}, {"count", std::to_string(count)}, {"seed", std::to_string(seed)}});

  std::vector<double> poses;
  for (const ManifestEntry& e : entries) poses.push_back(e.pose);
  for (SplitKind sk : {SplitKind::kIdentity, SplitKind::kZ, SplitKind::kSO3,
                       SplitKind::kUnseenPose}) {
    const DatasetSplit split = make_splits(poses, sk, seed);
    save_split((out / "splits" / (to_string(sk) + ".txt")).string(), split);
  }
  std::cout << "wrote " << count << " " << kind << " to " << out.string() << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const GlobalOptions& opts) {
  const Config cfg = load_config(opts);
  const Dataset ds = load_dataset(cfg.str("dataset", "dir"));
  const std::string split_name = cfg.str("train", "split", "I");
  const DatasetSplit split =
      load_split((fs::path(ds.dir) / "splits" / (split_name + ".txt")).string());
  const std::vector<Points> train_data = gather(ds.shapes, split.train);

  const std::string kind = cfg.str("model", "kind", "global-mesh");
  const std::uint64_t seed = pick_seed(opts, cfg, "train");

  TrainConfig tc;
  const int total_epochs = static_cast<int>(cfg.integer("train", "epochs", 200));
  tc.epochs = total_epochs;
  tc.batch_size = cfg.integer("train", "batch_size", 16);
  tc.adam.lr = cfg.num("train", "lr", 1e-4);
  tc.seed = seed;

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  std::vector<std::pair<int, double>> history;
  const int stride = std::max(1, total_epochs / 10);
  tc.on_epoch = [&](int epoch, double loss) {
    history.emplace_back(epoch, loss);
    if (epoch % stride == 0 || epoch == total_epochs - 1)
      std::cout << "epoch " << epoch << " loss " << fmt(loss) << '\n';
  };

  ad::AdamState state;
  const std::string resume = cfg.str("train", "resume", "");
  double prior_final = std::nan("");

  auto apply_resume = [&](ad::ParamMap& params) {
    if (resume.empty()) return;
    load_training_state(resume, params, state);
    const Config info =
        Config::load((fs::path(resume).parent_path() / "train_info.txt").string());
    tc.start_epoch = static_cast<int>(info.integer("", "epochs_done", 0));
    tc.epochs = std::max(0, total_epochs - tc.start_epoch);
    prior_final = info.num("", "final_loss", prior_final);
  };

  std::vector<std::pair<std::string, std::string>> info;
  info.emplace_back("kind", kind);

  if (kind == "global-mesh") {
    GlobalMeshAE model = build_global(cfg, ds, seed);
    apply_resume(model.params);
    train_global(model, train_data, tc, state);
    save_training_state((out / "checkpoint.bin").string(), model.params, state);
    std::vector<Points> recons;
    for (const Points& X : train_data) recons.push_back(decode_global(model, encode_global(model, X)));
    info.emplace_back("train_mse", fmt(mse(recons, train_data)));
    info.emplace_back("train_recon", fmt(recon_loss(model, train_data)));
  } else if (kind == "piecewise") {
    PiecewiseMeshAE model = build_piecewise(cfg, ds, seed);
    apply_resume(model.params);
    train_piecewise(model, train_data, tc, state);
    save_training_state((out / "checkpoint.bin").string(), model.params, state);
    std::vector<Points> recons;
    for (const Points& X : train_data)
      recons.push_back(decode_piecewise(model, encode_piecewise(model, X)));
    info.emplace_back("train_mse", fmt(mse(recons, train_data)));
    info.emplace_back("train_recon", fmt(recon_loss(model, train_data)));
  } else if (kind == "implicit") {
    ImplicitVAE model = build_implicit(cfg, seed);
    apply_resume(model.params);
    train_implicit(model, train_data, tc, state);
    save_training_state((out / "checkpoint.bin").string(), model.params, state);
    Rng eval_rng = Rng(seed).fork(kEvalStream);
    info.emplace_back("train_loss", fmt(combined_implicit_loss(model, train_data, eval_rng)));
  } else {
    throw ConfigError("unknown model kind: " + kind);
  }

  std::ofstream csv((out / "loss.csv").string());
  csv << "epoch,loss\n";
  for (const auto& [e, l] : history) csv << e << ',' << fmt(l) << '\n';

  const double final_loss = history.empty() ? prior_final : history.back().second;
  info.emplace_back("epochs_done", std::to_string(tc.start_epoch + tc.epochs));
  if (std::isfinite(final_loss)) info.emplace_back("final_loss", fmt(final_loss));
  write_kv((out / "train_info.txt").string(), info);
  std::cout << "wrote " << (out / "checkpoint.bin").string() << '\n';
  return 0;
}

// ---- eval ------------------------------------------------------------------

namespace {

std::function<Points(const Points&)> reconstructor(const Config& cfg, const Dataset& ds,
                                                   const std::string& kind,
                                                   const std::string& checkpoint,
                                                   std::uint64_t seed) {
  ad::AdamState ignored;
  if (kind == "global-mesh") {
    auto model = std::make_shared<GlobalMeshAE>(build_global(cfg, ds, seed));
    load_training_state(checkpoint, model->params, ignored);
    return [model](const Points& X) { return decode_global(*model, encode_global(*model, X)); };
  }
  if (kind == "piecewise") {
    auto model = std::make_shared<PiecewiseMeshAE>(build_piecewise(cfg, ds, seed));
    load_training_state(checkpoint, model->params, ignored);
    return [model](const Points& X) {
      return decode_piecewise(*model, encode_piecewise(*model, X));
    };
  }
  throw ConfigError("unknown mesh model kind: " + kind);
}

}  // namespace

int cmd_eval(const GlobalOptions& opts) {
  const Config cfg = load_config(opts);
  const Dataset ds = load_dataset(cfg.str("dataset", "dir"));
  const std::string kind = cfg.str("model", "kind", "global-mesh");
  const std::string checkpoint = cfg.str("eval", "checkpoint");
  const std::string split_name = cfg.str("eval", "split", "I");
  const std::uint64_t seed = pick_seed(opts, cfg, "eval");

  const bool train_side = split_name == "train";
  const std::string split_file = train_side ? cfg.str("train", "split", "I") : split_name;
  const DatasetSplit split =
      load_split((fs::path(ds.dir) / "splits" / (split_file + ".txt")).string());

  std::vector<MetricRow> rows;
  const fs::path out(opts.out_dir);
  fs::create_directories(out);

  if (kind == "implicit") {
    ImplicitVAE model = build_implicit(cfg, seed);
    ad::AdamState ignored;
    load_training_state(checkpoint, model.params, ignored);

    GridSpec grid;
    const double half = cfg.num("eval", "grid_box", 1.0);
    grid.box_lo = Vec3::Constant(-half);
    grid.box_hi = Vec3::Constant(half);
    grid.resolution =
        Eigen::Vector3i::Constant(static_cast<int>(cfg.integer("eval", "grid_resolution", 32)));
    const Index ref_points = cfg.integer("eval", "ref_points", 512);
    const bool with_iou = cfg.flag("eval", "iou", ds.kind == "spheres");
    IouConfig iou_cfg;
    iou_cfg.bbox_samples = cfg.integer("eval", "iou_bbox_samples", iou_cfg.bbox_samples);
    iou_cfg.near_surface_samples =
        cfg.integer("eval", "iou_surface_samples", iou_cfg.near_surface_samples);
    iou_cfg.sigma = cfg.num("eval", "iou_sigma", iou_cfg.sigma);
    iou_cfg.box_lo = grid.box_lo;
    iou_cfg.box_hi = grid.box_hi;

    const Points nodes = grid_nodes(grid);
    double chamfer_sum = 0.0, iou_sum = 0.0;
    Index evaluated = 0;
    const std::vector<Index>& index_set = train_side ? split.train : split.test;
    for (size_t pos = 0; pos < index_set.size(); ++pos) {
      const Index idx = index_set[pos];
      Points cloud = ds.shapes[static_cast<size_t>(idx)];
      if (!train_side) cloud = apply_test_motion(split, pos, cloud);
      const EncodedPc enc = encode_pc(model, cloud);
      const Vector values = decode_implicit_batch(model, enc.mu, nodes);
      const Points crossings = extract_zero_crossings(values, grid);

      Rng ref_rng = Rng(seed).fork(kEvalStream, static_cast<std::uint64_t>(idx));
      const double radius = ds.poses[static_cast<size_t>(idx)];
      const Points reference = ds.kind == "spheres"
                                   ? sample_sphere_cloud(radius, ref_points, 0.0, ref_rng)
                                   : cloud;
      chamfer_sum += chamfer(crossings, reference);
      if (with_iou) {
        const ScalarField field = implicit_field(model, enc.mu);
        const Occupancy occ_model = occupancy_from_field(field);
        const Occupancy occ_truth = [radius](const Vec3& x) { return x.norm() <= radius; };
        const Points samples = iou_samples(iou_cfg, reference, ref_rng);
        iou_sum += iou(samples, occ_model, occ_truth);
      }
      ++evaluated;
    }
    if (evaluated == 0) throw ConfigError("split has no samples to evaluate");
    rows.push_back({split_name, "chamfer", chamfer_sum / static_cast<double>(evaluated)});
    if (with_iou)
      rows.push_back({split_name, "iou_paper", iou_sum / static_cast<double>(evaluated)});
  } else {
    const auto recon = reconstructor(cfg, ds, kind, checkpoint, seed);
    std::vector<Points> truth, recons;
    if (train_side) {
      truth = gather(ds.shapes, split.train);
    } else {
      const std::vector<Points> base = gather(ds.shapes, split.test);
      for (size_t pos = 0; pos < base.size(); ++pos)
        truth.push_back(apply_test_motion(split, pos, base[pos]));
    }
    for (const Points& X : truth) recons.push_back(recon(X));
    rows.push_back({split_name, "mse", mse(recons, truth)});
    if (train_side) {
      double frob = 0.0;
      for (size_t i = 0; i < truth.size(); ++i) frob += (recons[i] - truth[i]).norm();
      rows.push_back({split_name, "recon", frob / static_cast<double>(truth.size())});
    }
  }

  write_metrics_csv((out / "metrics.csv").string(), rows);
  for (const MetricRow& r : rows)
    std::cout << r.split << ' ' << r.metric << ' ' << fmt(r.value) << '\n';
  return 0;
}

// ---- verify ------------------------------------------------------------

namespace {

struct PropertyResult {
  std::string name;
  int trials;
  double residual;
  double tol;
  bool pass() const { return residual < tol; }
};

Points verify_points(Rng& rng, Index n, double scale) {
  Points p(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = rng.uniform(-scale, scale);
  return p;
}

Weights verify_weights(Rng& rng, Index n) {
  Weights w(n);
  for (Index i = 0; i < n; ++i) w(i) = rng.uniform(0.1, 2.0);
  return w;
}

Matrix verify_matrix(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

double frame_set_distance(const std::vector<EuclideanMotion>& a,
                          const std::vector<EuclideanMotion>& b) {
  double worst = 0.0;
  for (const auto& ga : a) {
    double best = 1e300;
    for (const auto& gb : b) best = std::min(best, motion_distance(ga, gb));
    worst = std::max(worst, best);
  }
  for (const auto& gb : b) {
    double best = 1e300;
    for (const auto& ga : a) best = std::min(best, motion_distance(ga, gb));
    worst = std::max(worst, best);
  }
  return worst;
}

double feature_distance(const FeatureMatrix& a, const FeatureMatrix& b) {
  return std::sqrt((a.u - b.u).squaredNorm() + (a.U - b.U).squaredNorm());
}

double feature_norm(const FeatureMatrix& a) {
  return std::sqrt(a.u.squaredNorm() + a.U.squaredNorm());
}

}  // namespace

int cmd_verify(const GlobalOptions& opts, const VerifyOptions& vopts) {
  const std::uint64_t seed = opts.seed_given ? opts.seed : 0;
  const int trials = vopts.trials;
  if (trials < 0) throw ConfigError("trials must be non-negative");
  std::vector<PropertyResult> results;

  auto frame_subset = [&](std::vector<EuclideanMotion> F) {
    if (vopts.inject_bug && F.size() > 1) F.resize(1);
    return F;
  };

  {  // frame construction commutes with rigid motions (as a set)
    Rng rng = Rng(seed).fork(0x66726d65);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Points V = verify_points(rng, 12, 1.0);
      const Weights w = verify_weights(rng, 12);
      const EuclideanMotion g = random_motion(rng, 1.0, true);
      std::vector<EuclideanMotion> expected;
      for (const EuclideanMotion& f : pca_frame(V, w)) expected.push_back(compose(g, f));
      worst = std::max(worst, frame_set_distance(expected, pca_frame(act_points(g, V), w)));
    }
    results.push_back({"frame-equivariance", trials, worst, 1e-6});
  }

  {  // frame averaging renders an arbitrary backbone equivariant
    Rng rng = Rng(seed).fork(0x66617176);
    const FeatureAction in{2, 4}, outa{1, 3};
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Matrix W1 = verify_matrix(rng, 16, in.invariant_dim + 3 * in.equivariant_rows);
      const Matrix W2 = verify_matrix(rng, outa.invariant_dim + 3 * outa.equivariant_rows, 16);
      auto phi = [&](const FaValue& v) -> FaValue {
        const auto& V = std::get<FeatureMatrix>(v);
        const Vector y = W2 * (W1 * flatten(V)).array().tanh().matrix();
        return unflatten(y, outa.invariant_dim, outa.equivariant_rows);
      };
      FeatureMatrix V;
      V.u = verify_matrix(rng, in.invariant_dim, 1);
      V.U = verify_points(rng, in.equivariant_rows, 1.0);
      const EuclideanMotion g = random_motion(rng, 1.0, true);
      const FeatureMatrix Vg = act_features(g, V);

      const auto out1 = std::get<FeatureMatrix>(
          fa_apply(phi, frame_subset(pca_frame(V.U)), in, outa, FaValue(V)));
      const auto out2 = std::get<FeatureMatrix>(
          fa_apply(phi, frame_subset(pca_frame(Vg.U)), in, outa, FaValue(Vg)));
      const FeatureMatrix lhs = act_features(g, out1);
      worst = std::max(worst,
                       feature_distance(lhs, out2) / std::max(1.0, feature_norm(lhs)));
    }
    results.push_back({"fa-equivariance", trials, worst, 1e-5});
  }

  {  // pointwise implicit decoding is invariant under joint motion of (Z, x)
    Rng rng = Rng(seed).fork(0x696d7076);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Matrix W1 = verify_matrix(rng, 16, 15);
      const Matrix W2 = verify_matrix(rng, 1, 16);
      auto psi = [&](const FeatureMatrix& Z, const Vec3& x) {
        Vector in(15);
        in << flatten(Z), x;
        return (W2 * (W1 * in).array().tanh().matrix())(0);
      };
      FeatureMatrix Z;
      Z.u = Vector(0);
      Z.U = verify_points(rng, 4, 1.0);
      const Vec3 x = verify_points(rng, 1, 1.0).row(0).transpose();
      const EuclideanMotion g = random_motion(rng, 1.0, true);
      const FeatureMatrix Zg = act_features(g, Z);

      const double f1 = fa_apply_pointwise(psi, frame_subset(pca_frame(Z.U)), Z, x);
      const double f2 =
          fa_apply_pointwise(psi, frame_subset(pca_frame(Zg.U)), Zg, act_point(g, x));
      worst = std::max(worst, std::abs(f1 - f2) / std::max(1.0, std::abs(f1)));
    }
    results.push_back({"implicit-invariance", trials, worst, 1e-5});
  }

  {  // hard part weights give per-part equivariance end to end
    Rng rng = Rng(seed).fork(0x70617274);
    ArticulatedChainSpec spec;
    spec.rings_per_segment = 2;
    spec.ring_size = 4;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const ArticulatedChainSpec posed = random_pose(spec, 0.8, rng);
      const ChainMesh mesh = gen_chain(posed);
      const Index n = mesh.X.rows();
      Rng model_rng = rng.fork(kInitStream, static_cast<std::uint64_t>(t));
      const PiecewiseMeshAE model = make_piecewise_mesh_ae(
          n, adjacency_from_faces(n, mesh.faces), mesh.weights, {1, 3}, 6, 1, model_rng);

      std::vector<EuclideanMotion> motions;
      for (int j = 0; j < spec.segments; ++j) motions.push_back(random_motion(rng, 0.5));
      Points moved(n, 3);
      for (Index i = 0; i < n; ++i) {
        Index part = 0;
        mesh.weights.W.row(i).maxCoeff(&part);
        moved.row(i) =
            act_point(motions[static_cast<size_t>(part)], mesh.X.row(i).transpose())
                .transpose();
      }

      const std::vector<FeatureMatrix> Z = encode_piecewise(model, mesh.X);
      const std::vector<FeatureMatrix> Zm = encode_piecewise(model, moved);
      std::vector<FeatureMatrix> Zexp;
      for (size_t j = 0; j < Z.size(); ++j)
        Zexp.push_back(act_features(motions[j], Z[j]));
      for (size_t j = 0; j < Z.size(); ++j)
        worst = std::max(worst, feature_distance(Zexp[j], Zm[j]) /
                                    std::max(1.0, feature_norm(Zexp[j])));

      const Points Y = decode_piecewise(model, Z);
      const Points Ym = decode_piecewise(model, Zexp);
      Points Yexp(n, 3);
      for (Index i = 0; i < n; ++i) {
        Index part = 0;
        mesh.weights.W.row(i).maxCoeff(&part);
        Yexp.row(i) =
            act_point(motions[static_cast<size_t>(part)], Y.row(i).transpose()).transpose();
      }
      worst = std::max(worst, (Ym - Yexp).norm() / std::max(1.0, Yexp.norm()));
    }
    results.push_back({"part-equivariance", trials, worst, 1e-5});
  }

  {  // reverse-mode gradients agree with central finite differences
    double worst = 0.0;
    if (trials > 0) {
      Rng rng = Rng(seed).fork(0x67726164);
      std::vector<std::vector<int>> ring(6);
      for (int i = 0; i < 6; ++i) ring[i] = {(i + 5) % 6, (i + 1) % 6};
      GlobalMeshAE model = make_global_mesh_ae(6, ring, {1, 3}, 4, 1, rng);
      const Points X = verify_points(rng, 6, 1.0);
      const FeatureMatrix Z0 = encode_global(model, X);
      const std::vector<std::vector<EuclideanMotion>> frames = {pca_frame(Z0.U)};
      worst = ad::grad_check(
          [&](ad::Tape& tape, const VarMap& vars) {
            return recon_loss_taped(model, tape, vars, {X}, &frames);
          },
          model.params);
    }
    results.push_back({"gradient-check", trials > 0 ? 1 : 0, worst, 1e-3});
  }

  bool all_pass = true;
  for (const PropertyResult& r : results) {
    char line[160];
    std::snprintf(line, sizeof line, "%-20s trials=%-4d max-residual=%.3e tol=%.0e %s",
                  r.name.c_str(), r.trials, r.residual, r.tol,
                  r.pass() ? "PASS" : "FAIL");
    std::cout << line << '\n';
    all_pass = all_pass && r.pass();
  }
  return all_pass ? 0 : 1;
}

// ---- interp ----------------------------------------------------------------

int cmd_interp(const GlobalOptions& opts) {
  const Config cfg = load_config(opts);
  const std::string kind = cfg.str("model", "kind", "global-mesh");
  const std::string checkpoint = cfg.str("interp", "checkpoint");
  const MeshData A = load_obj(cfg.str("interp", "shape_a"));
  const MeshData B = load_obj(cfg.str("interp", "shape_b"));
  const int steps = static_cast<int>(cfg.integer("interp", "steps", 11));
  if (steps < 2) throw ConfigError("interp.steps must be ≥ 2");
  if (A.X.rows() != B.X.rows())
    throw ConfigError("interp endpoints have different vertex counts");

  Dataset ds;
  ds.kind = "chains";
  ds.shapes = {A.X};
  ds.faces = A.faces;
  const std::uint64_t seed = pick_seed(opts, cfg, "interp");
  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  ad::AdamState ignored;

  auto emit = [&](int i, const Points& Y) {
    char name[64];
    std::snprintf(name, sizeof name, "interp_%03d.obj", i);
    save_obj((out / name).string(), Y, A.faces);
    std::cout << "wrote " << (out / name).string() << '\n';
  };

  if (kind == "global-mesh") {
    GlobalMeshAE model = build_global(cfg, ds, seed);
    load_training_state(checkpoint, model.params, ignored);
    const FeatureMatrix Za = encode_global(model, A.X);
    const FeatureMatrix Zb = encode_global(model, B.X);
    for (int i = 0; i < steps; ++i) {
      const double t = static_cast<double>(i) / (steps - 1);
      emit(i, decode_global(model, interpolate(Za, Zb, t)));
    }
  } else if (kind == "piecewise") {
    ds.dir = cfg.str("dataset", "dir");
    PiecewiseMeshAE model = build_piecewise(cfg, ds, seed);
    load_training_state(checkpoint, model.params, ignored);
    const std::vector<FeatureMatrix> Za = encode_piecewise(model, A.X);
    const std::vector<FeatureMatrix> Zb = encode_piecewise(model, B.X);
    for (int i = 0; i < steps; ++i) {
      const double t = static_cast<double>(i) / (steps - 1);
      emit(i, decode_piecewise(model, interpolate(Za, Zb, t)));
    }
  } else {
    throw ConfigError("interp needs a mesh model, got kind: " + kind);
  }
  return 0;
}

// ---- bench -------------------------------------------------------------

int cmd_bench(const GlobalOptions& opts) {
  const Config cfg = load_config(opts);
  const std::uint64_t seed = pick_seed(opts, cfg, "bench");
  const int runs = std::max(20, static_cast<int>(cfg.integer("bench", "runs", 20)));

  const ArticulatedChainSpec base = chain_spec_from(cfg);
  Rng rng(seed);
  const ChainMesh rest = gen_chain(base);
  const Index n = rest.X.rows();
  const auto adjacency = adjacency_from_faces(n, rest.faces);

  LatentDims dims = dims_from(cfg);
  const Index hidden = cfg.integer("model", "hidden", 32);
  const int rounds = static_cast<int>(cfg.integer("model", "rounds", 2));
  Rng init = Rng(seed).fork(kInitStream);
  GlobalMeshAE fa_model = make_global_mesh_ae(n, adjacency, dims, hidden, rounds, init);
  GlobalMeshAE bare = fa_model;
  bare.use_fa = false;
  Rng init_pw = Rng(seed).fork(kInitStream, 1);
  PiecewiseMeshAE piecewise = make_piecewise_mesh_ae(n, adjacency, rest.weights, dims,
                                                     hidden, rounds, init_pw);

  std::vector<Points> pool;
  for (int i = 0; i < 16; ++i)
    pool.push_back(gen_chain(random_pose(base, 1.0, rng)).X);

  struct Variant {
    std::string name;
    std::function<void(const Points&)> forward;
  };
  const std::vector<Variant> variants = {
      {"backbone", [&](const Points& X) { encode_global(bare, X); }},
      {"fa", [&](const Points& X) { encode_global(fa_model, X); }},
      {"piecewise", [&](const Points& X) { encode_piecewise(piecewise, X); }},
  };

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  std::ofstream csv((out / "bench.csv").string());
  csv << "variant,batch,median_ms\n";
  for (const Variant& v : variants) {
    for (int batch : {1, 4, 16}) {
      auto run_once = [&] {
        for (int b = 0; b < batch; ++b) v.forward(pool[static_cast<size_t>(b)]);
      };
      run_once();  // warm caches before timing
      std::vector<double> times;
      for (int r = 0; r < runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        run_once();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
      const double median = times[times.size() / 2];
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", median);
      csv << v.name << ',' << batch << ',' << buf << '\n';
      std::cout << v.name << " batch " << batch << " median " << buf << " ms\n";
    }
  }
  std::cout << "wrote " << (out / "bench.csv").string() << '\n';
  return 0;
}

}  // namespace eqfa::cli
