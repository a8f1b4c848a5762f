#include "eqfa/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "eqfa/errors.hpp"
#include "eqfa/fa.hpp"
#include "eqfa/linalg3.hpp"

namespace eqfa {

ad::Var act_rows_taped(ad::Tape& tape, ad::Var U, const EuclideanMotion& g) {
  const Index rows = tape.value(U).rows();
  ad::Var moved = ad::matmul(U, tape.constant(Matrix(g.R.transpose())));
  return ad::add(moved, ad::broadcast_rows(tape.constant(Matrix(g.t.transpose())), rows));
}

ad::Var act_rows_inverse_taped(ad::Tape& tape, ad::Var U, const EuclideanMotion& g) {
  const Index rows = tape.value(U).rows();
  ad::Var centered =
      ad::sub(U, ad::broadcast_rows(tape.constant(Matrix(g.t.transpose())), rows));
  return ad::matmul(centered, tape.constant(Matrix(g.R)));
}

namespace {

TapedFeature split_latent_row(ad::Tape& tape, ad::Var row, LatentDims dims) {
  ad::Var u = ad::slice(row, 0, 0, 1, dims.m);
  ad::Var U =
      ad::reshape_rowmajor(ad::slice(row, 0, dims.m, 1, 3 * dims.d), dims.d, 3);
  (void)tape;
  return {u, U};
}

/// One frame-averaged encoder pass: the input moves by g^-1 off-tape (it is
/// data), the output's equivariant rows move by g on-tape.
TapedFeature fa_encode_mesh(ad::Tape& tape, const VarMap& vars, const MeshNetConfig& cfg,
                            const std::string& prefix, const Points& X,
                            const std::vector<EuclideanMotion>& frame, LatentDims dims) {
  ad::Var acc_u{};
  ad::Var acc_U{};
  bool first = true;
  for (const EuclideanMotion& g : frame) {
    const Points Xg = act_points(inverse(g), X);
    ad::Var row = meshnet_forward(cfg, prefix, vars, tape.constant(Matrix(Xg)));
    TapedFeature z = split_latent_row(tape, row, dims);
    z.U = act_rows_taped(tape, z.U, g);
    if (first) {
      acc_u = z.u;
      acc_U = z.U;
      first = false;
    } else {
      acc_u = ad::add(acc_u, z.u);
      acc_U = ad::add(acc_U, z.U);
    }
  }
  const double inv = 1.0 / static_cast<double>(frame.size());
  return {ad::scale(acc_u, inv), ad::scale(acc_U, inv)};
}

/// One frame-averaged decoder pass: the latent moves by g^-1 on-tape, the
/// decoded mesh moves back by g on-tape.
ad::Var fa_decode_mesh(ad::Tape& tape, const VarMap& vars, const MlpConfig& cfg,
                       const std::string& prefix, const TapedFeature& Z,
                       const std::vector<EuclideanMotion>& frame, Index n,
                       LatentDims dims) {
  ad::Var acc{};
  bool first = true;
  for (const EuclideanMotion& g : frame) {
    ad::Var Ug = act_rows_inverse_taped(tape, Z.U, g);
    ad::Var in = ad::concat_cols(Z.u, ad::reshape_rowmajor(Ug, 1, 3 * dims.d));
    ad::Var Y = ad::reshape_rowmajor(mlp_forward(cfg, prefix, vars, in), n, 3);
    Y = act_rows_taped(tape, Y, g);
    acc = first ? Y : ad::add(acc, Y);
    first = false;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(frame.size()));
}

Points value_as_points(const Matrix& v) {
  Points p(v.rows(), 3);
  p = v;
  return p;
}

}  // namespace

// ---- global mesh autoencoder ------------------------------------------

GlobalMeshAE make_global_mesh_ae(Index n, std::vector<std::vector<int>> adjacency,
                                 LatentDims dims, Index hidden, int rounds, Rng& rng,
                                 bool use_fa) {
  if (n < 3) throw InvalidSpecError("mesh model needs at least 3 vertices");
  if (dims.d < 3) throw InvalidSpecError("equivariant latent needs d >= 3");
  if (static_cast<Index>(adjacency.size()) != n)
    throw InvalidSpecError("adjacency size must match the vertex count");
  GlobalMeshAE m;
  m.n = n;
  m.dims = dims;
  m.use_fa = use_fa;
  m.encoder.rounds = rounds;
  m.encoder.in_width = 3;
  m.encoder.hidden = hidden;
  m.encoder.out_width = dims.flat();
  m.encoder.global_pool = true;
  m.encoder.activation = Activation::kElu;
  m.encoder.adjacency = std::move(adjacency);
  m.decoder.widths = {dims.flat(), hidden, hidden, hidden, hidden, 3 * n};
  m.decoder.activation = Activation::kElu;
  m.decoder.skip_concat_layer = 2;
  m.params = meshnet_init(m.encoder, "enc", rng);
  ad::ParamMap dec = mlp_init(m.decoder, "dec", rng);
  m.params.insert(dec.begin(), dec.end());
  return m;
}

TapedFeature encode_global_taped(const GlobalMeshAE& model, ad::Tape& tape,
                                 const VarMap& vars, const Points& X) {
  if (X.rows() != model.n)
    throw ShapeMismatchError("encode_global: input vertex count mismatch");
  if (!model.use_fa) {
    ad::Var row = meshnet_forward(model.encoder, "enc", vars, tape.constant(Matrix(X)));
    return split_latent_row(tape, row, model.dims);
  }
  return fa_encode_mesh(tape, vars, model.encoder, "enc", X, pca_frame(X), model.dims);
}

ad::Var decode_global_taped(const GlobalMeshAE& model, ad::Tape& tape, const VarMap& vars,
                            const TapedFeature& Z,
                            const std::vector<EuclideanMotion>* frame_override) {
  if (!model.use_fa) {
    ad::Var in =
        ad::concat_cols(Z.u, ad::reshape_rowmajor(Z.U, 1, 3 * model.dims.d));
    return ad::reshape_rowmajor(mlp_forward(model.decoder, "dec", vars, in), model.n, 3);
  }
  std::vector<EuclideanMotion> local;
  if (frame_override == nullptr) local = pca_frame(value_as_points(tape.value(Z.U)));
  const std::vector<EuclideanMotion>& frame = frame_override ? *frame_override : local;
  return fa_decode_mesh(tape, vars, model.decoder, "dec", Z, frame, model.n, model.dims);
}

FeatureMatrix encode_global(const GlobalMeshAE& model, const Points& X) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  const TapedFeature z = encode_global_taped(model, tape, vars, X);
  FeatureMatrix Z;
  Z.u = Vector(tape.value(z.u).transpose());
  Z.U = value_as_points(tape.value(z.U));
  return Z;
}

Points decode_global(const GlobalMeshAE& model, const FeatureMatrix& Z) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  const TapedFeature tz{tape.constant(Matrix(Z.u.transpose())),
                        tape.constant(Matrix(Z.U))};
  return value_as_points(tape.value(decode_global_taped(model, tape, vars, tz)));
}

ad::Var recon_loss_taped(const GlobalMeshAE& model, ad::Tape& tape, const VarMap& vars,
                         const std::vector<Points>& batch,
                         const std::vector<std::vector<EuclideanMotion>>* decode_frames) {
  if (batch.empty()) throw EmptyBatchError("recon_loss: empty batch");
  ad::Var acc{};
  bool first = true;
  for (size_t i = 0; i < batch.size(); ++i) {
    const TapedFeature z = encode_global_taped(model, tape, vars, batch[i]);
    const std::vector<EuclideanMotion>* f =
        decode_frames ? &(*decode_frames)[i] : nullptr;
    ad::Var Y = decode_global_taped(model, tape, vars, z, f);
    ad::Var d = ad::sub(Y, tape.constant(Matrix(batch[i])));
    ad::Var fro = ad::sqrt(ad::sum_all(ad::mul(d, d)));
    acc = first ? fro : ad::add(acc, fro);
    first = false;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(batch.size()));
}

double recon_loss(const GlobalMeshAE& model, const std::vector<Points>& batch) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  return tape.value(recon_loss_taped(model, tape, vars, batch))(0, 0);
}

// ---- implicit VAE -------------------------------------------------------

ImplicitVAE make_implicit_vae(LatentDims dims, Index hidden, SaldConfig sald, Rng& rng) {
  if (dims.d < 3) throw InvalidSpecError("equivariant latent needs d >= 3");
  ImplicitVAE m;
  m.dims = dims;
  m.sald = sald;
  m.encoder.point_widths = {3, hidden, hidden, hidden};
  m.encoder.head_widths = {hidden, hidden, dims.flat() + dims.d};
  m.decoder.widths = {dims.m + 3 * (dims.d + 1), hidden, hidden, hidden, 1};
  m.decoder.activation = Activation::kTanh;
  m.decoder.skip_concat_layer = 2;
  m.params = pointnet_init(m.encoder, "enc", rng);
  ad::ParamMap dec = mlp_init(m.decoder, "dec", rng);
  m.params.insert(dec.begin(), dec.end());
  m.params["dec.alpha"] = Matrix::Ones(1, 1);
  return m;
}

EncodedDist encode_pc_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                            const Points& P, FrameDiagnostics* diag) {
  const LatentDims dims = model.dims;
  const std::vector<EuclideanMotion> frame = pca_frame(P, diag);
  ad::Var acc_u{};
  ad::Var acc_U{};
  ad::Var acc_eta{};
  bool first = true;
  for (const EuclideanMotion& g : frame) {
    const Points Pg = act_points(inverse(g), P);
    ad::Var row = pointnet_forward(model.encoder, "enc", vars, tape.constant(Matrix(Pg)));
    ad::Var u = ad::slice(row, 0, 0, 1, dims.m);
    ad::Var U =
        ad::reshape_rowmajor(ad::slice(row, 0, dims.m, 1, 3 * dims.d), dims.d, 3);
    ad::Var eta = ad::slice(row, 0, dims.flat(), 1, dims.d);
    U = act_rows_taped(tape, U, g);
    if (first) {
      acc_u = u;
      acc_U = U;
      acc_eta = eta;
      first = false;
    } else {
      acc_u = ad::add(acc_u, u);
      acc_U = ad::add(acc_U, U);
      acc_eta = ad::add(acc_eta, eta);
    }
  }
  const double inv = 1.0 / static_cast<double>(frame.size());
  EncodedDist out;
  out.mu = {ad::scale(acc_u, inv), ad::scale(acc_U, inv)};
  out.eta = ad::reshape_rowmajor(ad::scale(acc_eta, inv), dims.d, 1);
  return out;
}

EncodedPc encode_pc(const ImplicitVAE& model, const Points& P) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  EncodedPc out;
  const EncodedDist e = encode_pc_taped(model, tape, vars, P, &out.frame_diag);
  out.mu.u = Vector(tape.value(e.mu.u).transpose());
  out.mu.U = value_as_points(tape.value(e.mu.U));
  out.eta = Vector(tape.value(e.eta));
  return out;
}

FeatureMatrix sample_latent(const FeatureMatrix& mu, const Vector& eta, Rng& rng) {
  const Index d = mu.U.rows();
  const Index m = mu.u.size();
  if (eta.size() != d && eta.size() != d + m)
    throw DimensionMismatchError("sample_latent: eta must have d or d + m entries");
  FeatureMatrix out = mu;
  if (eta.size() == d + m) {
    for (Index i = 0; i < m; ++i) {
      const double s = std::exp(std::clamp(eta(d + i), -20.0, 5.0));
      out.u(i) = mu.u(i) + s * rng.normal();
    }
  }
  for (Index j = 0; j < d; ++j) {
    const double s = std::exp(std::clamp(eta(j), -20.0, 5.0));
    for (int c = 0; c < 3; ++c) out.U(j, c) = mu.U(j, c) + s * rng.normal();
  }
  return out;
}

TapedFeature sample_latent_taped(ad::Tape& tape, const TapedFeature& mu, ad::Var eta,
                                 Rng& rng) {
  const Index d = tape.value(mu.U).rows();
  const Index m = tape.value(mu.u).cols();
  const Index len = tape.value(eta).rows();
  if (len != d && len != d + m)
    throw DimensionMismatchError("sample_latent: eta must have d or d + m entries");
  ad::Var etac = ad::clamp(eta, -20.0, 5.0);
  ad::Var u = mu.u;
  if (len == d + m && m > 0) {
    Matrix eps_u(1, m);
    for (Index i = 0; i < m; ++i) eps_u(0, i) = rng.normal();
    ad::Var su = ad::exp(ad::reshape_rowmajor(ad::slice(etac, d, 0, m, 1), 1, m));
    u = ad::add(mu.u, ad::mul(su, tape.constant(std::move(eps_u))));
  }
  Matrix eps_U(d, 3);
  for (Index j = 0; j < d; ++j)
    for (int c = 0; c < 3; ++c) eps_U(j, c) = rng.normal();
  ad::Var s = ad::exp(ad::slice(etac, 0, 0, d, 1));
  ad::Var noise = ad::mul(ad::broadcast_cols(s, 3), tape.constant(std::move(eps_U)));
  return {u, ad::add(mu.U, noise)};
}

ad::Var decode_implicit_rows_taped(const ImplicitVAE& model, ad::Tape& tape,
                                   const VarMap& vars, const TapedFeature& Z,
                                   const Points& probes,
                                   const std::vector<EuclideanMotion>* frame_override) {
  const LatentDims dims = model.dims;
  const Index S = probes.rows();
  if (S == 0) throw EmptySampleError("decode_implicit: no probe points");
  std::vector<EuclideanMotion> local;
  if (frame_override == nullptr) local = pca_frame(value_as_points(tape.value(Z.U)));
  const std::vector<EuclideanMotion>& frame = frame_override ? *frame_override : local;
  ad::Var alpha = vars.at("dec.alpha");
  ad::Var acc{};
  bool first = true;
  for (const EuclideanMotion& g : frame) {
    ad::Var Ug = act_rows_inverse_taped(tape, Z.U, g);
    ad::Var lat = ad::concat_cols(Z.u, ad::reshape_rowmajor(Ug, 1, 3 * dims.d));
    const Points Pg = act_points(inverse(g), probes);
    ad::Var in = ad::concat_cols(ad::broadcast_rows(lat, S), tape.constant(Matrix(Pg)));
    ad::Var y = mlp_forward(model.decoder, "dec", vars, in);
    const Matrix rad =
        (Pg.rowwise().norm().array() - model.sald.radial_r0).matrix();
    y = ad::add(y, ad::matmul(tape.constant(rad), alpha));
    acc = first ? y : ad::add(acc, y);
    first = false;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(frame.size()));
}

double decode_implicit(const ImplicitVAE& model, const FeatureMatrix& Z, const Vec3& x) {
  const LatentDims dims = model.dims;
  const double alpha = model.params.at("dec.alpha")(0, 0);
  auto psi = [&model, &dims, alpha](const FeatureMatrix& z, const Vec3& p) {
    Matrix row(1, dims.m + 3 * dims.d + 3);
    for (Index i = 0; i < dims.m; ++i) row(0, i) = z.u(i);
    for (Index j = 0; j < dims.d; ++j)
      for (int c = 0; c < 3; ++c) row(0, dims.m + 3 * j + c) = z.U(j, c);
    for (int c = 0; c < 3; ++c) row(0, dims.m + 3 * dims.d + c) = p(c);
    ad::Tape tape;
    const VarMap vars = bind_params_const(tape, model.params);
    ad::Var y = mlp_forward(model.decoder, "dec", vars, tape.constant(std::move(row)));
    return tape.value(y)(0, 0) + alpha * (p.norm() - model.sald.radial_r0);
  };
  return fa_apply_pointwise(psi, pca_frame(Points(Z.U)), Z, x);
}

Vector decode_implicit_batch(const ImplicitVAE& model, const FeatureMatrix& Z,
                             const Points& X) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  const TapedFeature tz{tape.constant(Matrix(Z.u.transpose())),
                        tape.constant(Matrix(Z.U))};
  return Vector(tape.value(decode_implicit_rows_taped(model, tape, vars, tz, X)));
}

ScalarField implicit_field(const ImplicitVAE& model, const FeatureMatrix& Z) {
  auto value = [model, Z](const Vec3& x) { return decode_implicit(model, Z, x); };
  return make_field(value, model.sald.fd_step);
}

SaldQueries sample_sald_queries(const Points& cloud, const SaldConfig& cfg, Rng& rng) {
  if (cloud.rows() == 0) throw EmptyCloudError("sald queries: empty cloud");
  if (cfg.samples <= 0) throw InvalidSpecError("sald sample count must be positive");
  const Index S = cfg.samples;
  const Index nu = S / 2;
  const double sigma = cfg.gauss_sigma_rel * (cfg.box_hi - cfg.box_lo).norm();
  SaldQueries out;
  out.q.resize(S, 3);
  for (Index s = 0; s < nu; ++s)
    for (int c = 0; c < 3; ++c) out.q(s, c) = rng.uniform(cfg.box_lo(c), cfg.box_hi(c));
  for (Index s = nu; s < S; ++s) {
    const Index p = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cloud.rows())));
    for (int c = 0; c < 3; ++c) out.q(s, c) = cloud(p, c) + sigma * rng.normal();
  }
  out.h.resize(S);
  out.grad_h.resize(S, 3);
  for (Index s = 0; s < S; ++s) {
    Index best = 0;
    double best_sq = (out.q.row(s) - cloud.row(0)).squaredNorm();
    for (Index p = 1; p < cloud.rows(); ++p) {
      const double sq = (out.q.row(s) - cloud.row(p)).squaredNorm();
      if (sq < best_sq) {
        best_sq = sq;
        best = p;
      }
    }
    const double h = std::sqrt(best_sq);
    out.h(s) = h;
    if (h > 1e-15)
      out.grad_h.row(s) = (out.q.row(s) - cloud.row(best)) / h;
    else
      out.grad_h.row(s).setZero();
  }
  return out;
}

ad::Var sald_loss_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                        const TapedFeature& Z, const SaldQueries& queries,
                        const std::vector<EuclideanMotion>* frame_override) {
  const Index S = queries.q.rows();
  if (S == 0) throw EmptySampleError("sald: no queries");
  const double step = model.sald.fd_step;
  Points probes(7 * S, 3);
  for (Index s = 0; s < S; ++s) {
    const Index base = 7 * s;
    probes.row(base) = queries.q.row(s);
    for (int axis = 0; axis < 3; ++axis) {
      Eigen::RowVector3d offset = Eigen::RowVector3d::Zero();
      offset(axis) = step;
      probes.row(base + 1 + 2 * axis) = queries.q.row(s) + offset;
      probes.row(base + 2 + 2 * axis) = queries.q.row(s) - offset;
    }
  }
  ad::Var F = decode_implicit_rows_taped(model, tape, vars, Z, probes, frame_override);
  ad::Var M = ad::reshape_rowmajor(F, S, 7);
  ad::Var fq = ad::slice(M, 0, 0, S, 1);
  auto central = [&](Index cp, Index cm) {
    return ad::scale(ad::sub(ad::slice(M, 0, cp, S, 1), ad::slice(M, 0, cm, S, 1)),
                     1.0 / (2.0 * step));
  };
  ad::Var G = ad::concat_cols(ad::concat_cols(central(1, 2), central(3, 4)), central(5, 6));
  ad::Var t1 = ad::abs(ad::sub(ad::abs(fq), tape.constant(Matrix(queries.h))));
  ad::Var gm = ad::norm_rows(ad::sub(G, tape.constant(Matrix(queries.grad_h))));
  ad::Var gp = ad::norm_rows(ad::add(G, tape.constant(Matrix(queries.grad_h))));
  ad::Var tau = ad::add(t1, ad::minimum(gm, gp));
  return ad::mean_all(tau);
}

namespace {

ad::Var implicit_batch_core(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                            const std::vector<Points>& batch, Rng& rng,
                            std::vector<TapedFeature>* mus, std::vector<ad::Var>* etas) {
  if (batch.empty()) throw EmptyBatchError("implicit loss: empty batch");
  ad::Var acc{};
  bool first = true;
  for (const Points& cloud : batch) {
    const EncodedDist e = encode_pc_taped(model, tape, vars, cloud);
    const TapedFeature z = sample_latent_taped(tape, e.mu, e.eta, rng);
    const SaldQueries qs = sample_sald_queries(cloud, model.sald, rng);
    ad::Var li = sald_loss_taped(model, tape, vars, z, qs);
    acc = first ? li : ad::add(acc, li);
    first = false;
    if (mus) mus->push_back(e.mu);
    if (etas) etas->push_back(e.eta);
  }
  return ad::scale(acc, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

ad::Var sald_loss_batch_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                              const std::vector<Points>& batch, Rng& rng) {
  return implicit_batch_core(model, tape, vars, batch, rng, nullptr, nullptr);
}

double sald_loss(const ImplicitVAE& model, const std::vector<Points>& batch, Rng& rng) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  return tape.value(sald_loss_batch_taped(model, tape, vars, batch, rng))(0, 0);
}

double sald_loss_field(const ScalarField& f, const SaldQueries& queries) {
  const Index S = queries.q.rows();
  if (S == 0) throw EmptySampleError("sald: no queries");
  double acc = 0.0;
  for (Index s = 0; s < S; ++s) {
    const Vec3 x = queries.q.row(s).transpose();
    const double fv = f.value(x);
    const Vec3 gf = f.gradient(x);
    const Vec3 gh = queries.grad_h.row(s).transpose();
    acc += std::abs(std::abs(fv) - queries.h(s)) +
           std::min((gf - gh).norm(), (gf + gh).norm());
  }
  return acc / static_cast<double>(S);
}

ad::Var vae_loss_taped(ad::Tape& tape, const std::vector<TapedFeature>& mus,
                       const std::vector<ad::Var>& etas) {
  if (mus.empty() || mus.size() != etas.size())
    throw EmptyBatchError("vae_loss: empty or mismatched batch");
  (void)tape;
  ad::Var acc{};
  bool first = true;
  for (size_t i = 0; i < mus.size(); ++i) {
    ad::Var term = ad::add(
        ad::add(ad::sum_all(ad::abs(mus[i].u)), ad::sum_all(ad::abs(mus[i].U))),
        ad::sum_all(ad::abs(ad::shift(etas[i], 1.0))));
    acc = first ? term : ad::add(acc, term);
    first = false;
  }
  return acc;
}

double vae_loss(const std::vector<FeatureMatrix>& mus, const std::vector<Vector>& etas) {
  if (mus.empty() || mus.size() != etas.size())
    throw EmptyBatchError("vae_loss: empty or mismatched batch");
  double acc = 0.0;
  for (size_t i = 0; i < mus.size(); ++i) {
    const double term = mus[i].u.array().abs().sum() + mus[i].U.array().abs().sum() +
                        (etas[i].array() + 1.0).abs().sum();
    acc += term;
  }
  return acc;
}

ad::Var combined_implicit_loss_taped(const ImplicitVAE& model, ad::Tape& tape,
                                     const VarMap& vars, const std::vector<Points>& batch,
                                     Rng& rng) {
  std::vector<TapedFeature> mus;
  std::vector<ad::Var> etas;
  ad::Var sald = implicit_batch_core(model, tape, vars, batch, rng, &mus, &etas);
  return ad::add(sald, ad::scale(vae_loss_taped(tape, mus, etas), model.vae_weight));
}

double combined_implicit_loss(const ImplicitVAE& model, const std::vector<Points>& batch,
                              Rng& rng) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  return tape.value(combined_implicit_loss_taped(model, tape, vars, batch, rng))(0, 0);
}

// ---- piecewise autoencoder ----------------------------------------------

PartWeights make_part_weights(Matrix W) {
  if (W.rows() == 0 || W.cols() == 0)
    throw InvalidSpecError("part weights must be nonempty");
  bool hard = true;
  for (Index i = 0; i < W.rows(); ++i) {
    double sum = 0.0;
    for (Index j = 0; j < W.cols(); ++j) {
      const double v = W(i, j);
      if (v < -1e-12 || v > 1.0 + 1e-12)
        throw InvalidSpecError("part weights must lie in [0, 1]");
      if (v != 0.0 && v != 1.0) hard = false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-8)
      throw InvalidSpecError("part weight rows must sum to 1");
  }
  return {std::move(W), hard};
}

PartWeights sharpen(const PartWeights& W, double temperature) {
  if (temperature <= 0.0) throw InvalidSpecError("sharpen: temperature must be positive");
  Matrix S(W.W.rows(), W.W.cols());
  for (Index i = 0; i < S.rows(); ++i) {
    double sum = 0.0;
    for (Index j = 0; j < S.cols(); ++j) {
      S(i, j) = std::pow(std::max(W.W(i, j), 0.0), 1.0 / temperature);
      sum += S(i, j);
    }
    S.row(i) /= sum;
  }
  return make_part_weights(std::move(S));
}

Points part_geometry(const Points& X, const PartWeights& W, Index part) {
  if (part < 0 || part >= W.W.cols()) throw InvalidSpecError("part index out of range");
  if (X.rows() != W.W.rows())
    throw ShapeMismatchError("part_geometry: weight rows must match vertices");
  const Weights w = W.W.col(part);
  const Vec3 c = weighted_centroid(X, w);
  Points out(X.rows(), 3);
  for (Index i = 0; i < X.rows(); ++i)
    out.row(i) = (1.0 - w(i)) * c.transpose() + w(i) * X.row(i);
  return out;
}

PiecewiseMeshAE make_piecewise_mesh_ae(Index n, std::vector<std::vector<int>> adjacency,
                                       PartWeights parts, LatentDims dims, Index hidden,
                                       int rounds, Rng& rng) {
  if (parts.W.rows() != n) throw InvalidSpecError("part weights must have n rows");
  GlobalMeshAE base =
      make_global_mesh_ae(n, std::move(adjacency), dims, hidden, rounds, rng);
  PiecewiseMeshAE m;
  m.n = n;
  m.dims = dims;
  m.parts = std::move(parts);
  m.encoder = std::move(base.encoder);
  m.decoder = std::move(base.decoder);
  m.params = std::move(base.params);
  return m;
}

std::vector<TapedFeature> encode_piecewise_taped(const PiecewiseMeshAE& model,
                                                 ad::Tape& tape, const VarMap& vars,
                                                 const Points& X) {
  if (X.rows() != model.n)
    throw ShapeMismatchError("encode_piecewise: input vertex count mismatch");
  const Index k = model.parts.W.cols();
  std::vector<TapedFeature> out;
  out.reserve(static_cast<size_t>(k));
  for (Index j = 0; j < k; ++j) {
    std::vector<EuclideanMotion> frame;
    Points Xj;
    try {
      frame = pca_frame(X, Weights(model.parts.W.col(j)));
      Xj = part_geometry(X, model.parts, j);
    } catch (const ZeroWeightError& e) {
      throw ZeroWeightError("part " + std::to_string(j) + ": " + e.what());
    } catch (const TooFewPointsError& e) {
      throw TooFewPointsError("part " + std::to_string(j) + ": " + e.what());
    }
    out.push_back(fa_encode_mesh(tape, vars, model.encoder, "enc", Xj, frame, model.dims));
  }
  return out;
}

ad::Var decode_piecewise_taped(
    const PiecewiseMeshAE& model, ad::Tape& tape, const VarMap& vars,
    const std::vector<TapedFeature>& Z,
    const std::vector<std::vector<EuclideanMotion>>* frame_override) {
  const Index k = model.parts.W.cols();
  if (static_cast<Index>(Z.size()) != k)
    throw DimensionMismatchError("decode_piecewise: latent count must equal part count");
  ad::Var acc{};
  bool first = true;
  for (Index j = 0; j < k; ++j) {
    std::vector<EuclideanMotion> local;
    if (frame_override == nullptr) {
      try {
        local = pca_frame(value_as_points(tape.value(Z[static_cast<size_t>(j)].U)));
      } catch (const TooFewPointsError& e) {
        throw TooFewPointsError("part " + std::to_string(j) + ": " + e.what());
      }
    }
    const std::vector<EuclideanMotion>& frame =
        frame_override ? (*frame_override)[static_cast<size_t>(j)] : local;
    ad::Var Yj = fa_decode_mesh(tape, vars, model.decoder, "dec",
                                Z[static_cast<size_t>(j)], frame, model.n, model.dims);
    ad::Var wj = ad::broadcast_cols(tape.constant(Matrix(model.parts.W.col(j))), 3);
    ad::Var term = ad::mul(wj, Yj);
    acc = first ? term : ad::add(acc, term);
    first = false;
  }
  return acc;
}

std::vector<FeatureMatrix> encode_piecewise(const PiecewiseMeshAE& model, const Points& X) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  const std::vector<TapedFeature> taped = encode_piecewise_taped(model, tape, vars, X);
  std::vector<FeatureMatrix> out;
  out.reserve(taped.size());
  for (const TapedFeature& z : taped) {
    FeatureMatrix Z;
    Z.u = Vector(tape.value(z.u).transpose());
    Z.U = value_as_points(tape.value(z.U));
    out.push_back(std::move(Z));
  }
  return out;
}

Points decode_piecewise(const PiecewiseMeshAE& model,
                        const std::vector<FeatureMatrix>& Z) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  std::vector<TapedFeature> taped;
  taped.reserve(Z.size());
  for (const FeatureMatrix& z : Z)
    taped.push_back(
        {tape.constant(Matrix(z.u.transpose())), tape.constant(Matrix(z.U))});
  return value_as_points(tape.value(decode_piecewise_taped(model, tape, vars, taped)));
}

ad::Var recon_loss_piecewise_taped(
    const PiecewiseMeshAE& model, ad::Tape& tape, const VarMap& vars,
    const std::vector<Points>& batch,
    const std::vector<std::vector<std::vector<EuclideanMotion>>>* decode_frames) {
  if (batch.empty()) throw EmptyBatchError("recon_loss: empty batch");
  ad::Var acc{};
  bool first = true;
  for (size_t i = 0; i < batch.size(); ++i) {
    const std::vector<TapedFeature> z = encode_piecewise_taped(model, tape, vars, batch[i]);
    const std::vector<std::vector<EuclideanMotion>>* f =
        decode_frames ? &(*decode_frames)[i] : nullptr;
    ad::Var Y = decode_piecewise_taped(model, tape, vars, z, f);
    ad::Var d = ad::sub(Y, tape.constant(Matrix(batch[i])));
    ad::Var fro = ad::sqrt(ad::sum_all(ad::mul(d, d)));
    acc = first ? fro : ad::add(acc, fro);
    first = false;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(batch.size()));
}

double recon_loss(const PiecewiseMeshAE& model, const std::vector<Points>& batch) {
  ad::Tape tape;
  const VarMap vars = bind_params_const(tape, model.params);
  return tape.value(recon_loss_piecewise_taped(model, tape, vars, batch))(0, 0);
}

// ---- training -------------------------------------------------------------

namespace {

constexpr std::uint64_t kEpochStream = 0x65706f63;   // shuffle order per epoch
constexpr std::uint64_t kBatchStream = 0x62617463;   // per-batch draws

void validate_train(const TrainConfig& cfg, size_t count) {
  if (count == 0) throw EmptyBatchError("train: empty dataset");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
}

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

/// Shared minibatch loop over per-sample losses: gradients accumulate per
/// sample in shuffle order and are averaged over the batch.
template <class SampleLossFn>
TrainResult train_per_sample(ad::ParamMap& params, Index count, const TrainConfig& cfg,
                             ad::AdamState& state, SampleLossFn&& sample_loss) {
  validate_train(cfg, static_cast<size_t>(count));
  TrainResult result;
  for (int e = cfg.start_epoch; e < cfg.start_epoch + cfg.epochs; ++e) {
    Rng epoch_rng = Rng(cfg.seed).fork(kEpochStream, static_cast<std::uint64_t>(e));
    const std::vector<Index> order = shuffled_indices(count, epoch_rng);
    double epoch_sum = 0.0;
    for (Index b = 0; b < count; b += cfg.batch_size) {
      const Index hi = std::min(count, b + cfg.batch_size);
      ad::ParamMap grads;
      for (const auto& [name, value] : params)
        grads.emplace(name, Matrix::Zero(value.rows(), value.cols()));
      for (Index s = b; s < hi; ++s) {
        ad::Tape tape;
        const VarMap vars = bind_params(tape, params);
        ad::Var loss = sample_loss(tape, vars, order[static_cast<size_t>(s)]);
        tape.backward(loss);
        epoch_sum += tape.value(loss)(0, 0);
        for (const auto& [name, var] : vars) grads[name] += tape.grad(var);
      }
      const double inv = 1.0 / static_cast<double>(hi - b);
      for (auto& [name, g] : grads) g *= inv;
      ad::adam_step(params, grads, state, cfg.adam);
    }
    const double epoch_loss = epoch_sum / static_cast<double>(count);
    result.loss_history.push_back(epoch_loss);
    if (cfg.on_epoch) cfg.on_epoch(e, epoch_loss);
  }
  return result;
}

}  // namespace

TrainResult train_global(GlobalMeshAE& model, const std::vector<Points>& data,
                         const TrainConfig& cfg, ad::AdamState& state) {
  return train_per_sample(
      model.params, static_cast<Index>(data.size()), cfg, state,
      [&model, &data](ad::Tape& tape, const VarMap& vars, Index idx) {
        return recon_loss_taped(model, tape, vars, {data[static_cast<size_t>(idx)]});
      });
}

TrainResult train_piecewise(PiecewiseMeshAE& model, const std::vector<Points>& data,
                            const TrainConfig& cfg, ad::AdamState& state) {
  return train_per_sample(
      model.params, static_cast<Index>(data.size()), cfg, state,
      [&model, &data](ad::Tape& tape, const VarMap& vars, Index idx) {
        return recon_loss_piecewise_taped(model, tape, vars,
                                          {data[static_cast<size_t>(idx)]});
      });
}

TrainResult train_implicit(ImplicitVAE& model, const std::vector<Points>& clouds,
                           const TrainConfig& cfg, ad::AdamState& state) {
  validate_train(cfg, clouds.size());
  const Index count = static_cast<Index>(clouds.size());
  TrainResult result;
  for (int e = cfg.start_epoch; e < cfg.start_epoch + cfg.epochs; ++e) {
    Rng epoch_rng = Rng(cfg.seed).fork(kEpochStream, static_cast<std::uint64_t>(e));
    const std::vector<Index> order = shuffled_indices(count, epoch_rng);
    double epoch_sum = 0.0;
    Index batches = 0;
    for (Index b = 0; b < count; b += cfg.batch_size) {
      const Index hi = std::min(count, b + cfg.batch_size);
      std::vector<Points> batch;
      batch.reserve(static_cast<size_t>(hi - b));
      for (Index s = b; s < hi; ++s)
        batch.push_back(clouds[static_cast<size_t>(order[static_cast<size_t>(s)])]);
      Rng batch_rng = epoch_rng.fork(kBatchStream, static_cast<std::uint64_t>(batches));
      ad::Tape tape;
      const VarMap vars = bind_params(tape, model.params);
      ad::Var loss = combined_implicit_loss_taped(model, tape, vars, batch, batch_rng);
      tape.backward(loss);
      epoch_sum += tape.value(loss)(0, 0);
      ad::ParamMap grads;
      for (const auto& [name, var] : vars) grads.emplace(name, tape.grad(var));
      ad::adam_step(model.params, grads, state, cfg.adam);
      ++batches;
    }
    const double epoch_loss = epoch_sum / static_cast<double>(batches);
    result.loss_history.push_back(epoch_loss);
    if (cfg.on_epoch) cfg.on_epoch(e, epoch_loss);
  }
  return result;
}

// ---- checkpointing ---------------------------------------------------------

void save_training_state(const std::string& path, const ad::ParamMap& params,
                         const ad::AdamState& state) {
  ad::ParamMap blob = params;
  for (const auto& [name, value] : state.m) blob["adam.m." + name] = value;
  for (const auto& [name, value] : state.v) blob["adam.v." + name] = value;
  Matrix step(1, 1);
  step(0, 0) = static_cast<double>(state.step);
  blob["adam.step"] = step;
  ad::save_checkpoint(path, blob);
}

void load_training_state(const std::string& path, ad::ParamMap& params,
                         ad::AdamState& state) {
  const ad::ParamMap blob = ad::load_checkpoint(path);
  params.clear();
  state = {};
  for (const auto& [name, value] : blob) {
    if (name == "adam.step")
      state.step = static_cast<long>(value(0, 0));
    else if (name.rfind("adam.m.", 0) == 0)
      state.m[name.substr(7)] = value;
    else if (name.rfind("adam.v.", 0) == 0)
      state.v[name.substr(7)] = value;
    else
      params[name] = value;
  }
}

}  // namespace eqfa
