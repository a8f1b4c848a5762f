#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eqfa/ad.hpp"
#include "eqfa/backbones.hpp"
#include "eqfa/frames.hpp"
#include "eqfa/group.hpp"
#include "eqfa/rng.hpp"
#include "eqfa/types.hpp"

namespace eqfa {

/// Latent layout: u in R^m (invariant) plus U in R^{d x 3} (equivariant).
struct LatentDims {
  Index m = 8;
  Index d = 8;
  Index flat() const { return m + 3 * d; }
};

/// A latent living on a tape: u is a 1 x m row, U a d x 3 block. The row
/// layout matches flatten(): u first, then U row-major.
struct TapedFeature {
  ad::Var u;
  ad::Var U;
};

/// rho(g) on a taped equivariant block: U R^T + 1 t^T.
ad::Var act_rows_taped(ad::Tape& tape, ad::Var U, const EuclideanMotion& g);
/// rho(g)^-1 on a taped equivariant block: (U - 1 t^T) R.
ad::Var act_rows_inverse_taped(ad::Tape& tape, ad::Var U, const EuclideanMotion& g);

// ---- global mesh autoencoder ------------------------------------------

/// Mesh -> latent -> mesh autoencoder over a fixed template graph. With
/// use_fa the encoder and decoder are frame-averaged over the uniform-weight
/// frame of their input; without it the raw backbones run as-is (the
/// baseline whose rotation robustness the evaluation compares against).
struct GlobalMeshAE {
  Index n = 0;
  LatentDims dims;
  MeshNetConfig encoder;  // global mean-pool head onto m + 3d
  MlpConfig decoder;      // m + 3d -> ... -> 3n
  ad::ParamMap params;    // keys "enc.*" and "dec.*"
  bool use_fa = true;
};

GlobalMeshAE make_global_mesh_ae(Index n, std::vector<std::vector<int>> adjacency,
                                 LatentDims dims, Index hidden, int rounds, Rng& rng,
                                 bool use_fa = true);

/// Frame-averaged encoder: frame from pca_frame(X, 1); the backbone output
/// row splits into (u, U) and U moves with each frame element.
TapedFeature encode_global_taped(const GlobalMeshAE& model, ad::Tape& tape,
                                 const VarMap& vars, const Points& X);

/// Frame-averaged decoder: frame from pca_frame(U, 1) on the latent's
/// current value (the frame itself is never differentiated through). Pass
/// frame_override to pin the frame, e.g. for finite-difference checks.
/// Throws TooFewPointsError when U has fewer than 3 rows.
ad::Var decode_global_taped(const GlobalMeshAE& model, ad::Tape& tape, const VarMap& vars,
                            const TapedFeature& Z,
                            const std::vector<EuclideanMotion>* frame_override = nullptr);

FeatureMatrix encode_global(const GlobalMeshAE& model, const Points& X);
Points decode_global(const GlobalMeshAE& model, const FeatureMatrix& Z);

/// (1/N) sum_i ||decode(encode(X_i)) - X_i||_F. decode_frames, when given,
/// pins the decoder frame per sample. Throws EmptyBatchError.
ad::Var recon_loss_taped(const GlobalMeshAE& model, ad::Tape& tape, const VarMap& vars,
                         const std::vector<Points>& batch,
                         const std::vector<std::vector<EuclideanMotion>>* decode_frames = nullptr);
double recon_loss(const GlobalMeshAE& model, const std::vector<Points>& batch);

// ---- implicit VAE -------------------------------------------------------

/// Monte-Carlo and finite-difference knobs for the surface-distance loss.
struct SaldConfig {
  Vec3 box_lo = Vec3::Constant(-1.0);  // integration domain Omega
  Vec3 box_hi = Vec3::Constant(1.0);
  Index samples = 512;           // queries per shape per step
  double fd_step = 1e-5;         // central-difference step for grad f
  double gauss_sigma_rel = 0.05;  // near-surface sigma = rel * box diagonal
  double radial_r0 = 0.5;        // zero radius of the decoder's radial term
};

/// Point cloud -> distribution over latents -> implicit surface. The
/// encoder emits (mu, eta): mu is an (m, d x 3) latent mean and eta one
/// log-std scalar per equivariant row. The pointwise decoder reads
/// [u, U, x] as one row of width m + 3(d+1) and adds a trained radial term
/// alpha * (|x| - r0) so the field always crosses zero along rays.
struct ImplicitVAE {
  LatentDims dims{0, 8};
  PointNetConfig encoder;  // head output width m + 3d + d
  MlpConfig decoder;       // m + 3(d+1) -> ... -> 1
  SaldConfig sald;
  double vae_weight = 0.001;
  ad::ParamMap params;  // "enc.*", "dec.*", and the scalar "dec.alpha"
};

ImplicitVAE make_implicit_vae(LatentDims dims, Index hidden, SaldConfig sald, Rng& rng);

struct EncodedDist {
  TapedFeature mu;
  ad::Var eta;  // d x 1
};

/// Frame-averaged PointNet encoder; eta is averaged untransformed (it is
/// invariant by construction). Throws TooFewPointsError for n < 3.
EncodedDist encode_pc_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                            const Points& P, FrameDiagnostics* diag = nullptr);

struct EncodedPc {
  FeatureMatrix mu;
  Vector eta;
  FrameDiagnostics frame_diag;  // degenerate inputs are reported, not rejected
};
EncodedPc encode_pc(const ImplicitVAE& model, const Points& P);

/// Reparameterized draw: every equivariant row j gets mu_j plus an
/// isotropic normal scaled by exp(eta_j); eta is clamped to [-20, 5] first.
/// With eta of length d + m, the extra entries put per-coordinate noise on
/// the invariant part; with length d the invariant part passes through.
/// Draw order is invariant coordinates first, then rows of U (3 normals
/// each), so the plain and taped paths consume the rng identically.
FeatureMatrix sample_latent(const FeatureMatrix& mu, const Vector& eta, Rng& rng);
TapedFeature sample_latent_taped(ad::Tape& tape, const TapedFeature& mu, ad::Var eta,
                                 Rng& rng);

/// Decoder values at many probe points for one latent: the frame comes from
/// the latent's equivariant part; each frame element moves (Z, x) jointly
/// and the S x 1 results are averaged.
ad::Var decode_implicit_rows_taped(const ImplicitVAE& model, ad::Tape& tape,
                                   const VarMap& vars, const TapedFeature& Z,
                                   const Points& probes,
                                   const std::vector<EuclideanMotion>* frame_override = nullptr);

/// Pointwise field value; invariant under joint motion of (Z, x).
double decode_implicit(const ImplicitVAE& model, const FeatureMatrix& Z, const Vec3& x);
/// Batched evaluation of the same field (one tape for all points).
Vector decode_implicit_batch(const ImplicitVAE& model, const FeatureMatrix& Z,
                             const Points& X);
/// The field as a ScalarField with a central-difference gradient.
ScalarField implicit_field(const ImplicitVAE& model, const FeatureMatrix& Z);

/// Query points with their exact unsigned distance to the cloud and the
/// unit direction away from the nearest cloud point (lowest index on ties).
/// Half the queries are uniform in the box, half Gaussian perturbations of
/// uniformly chosen cloud points. Throws EmptyCloudError.
struct SaldQueries {
  Points q;
  Vector h;
  Points grad_h;
};
SaldQueries sample_sald_queries(const Points& cloud, const SaldConfig& cfg, Rng& rng);

/// Mean over queries of tau = ||f| - h| + min(|grad f - grad h|, |grad f +
/// grad h|), with grad f taken by taped central differences of step
/// cfg.fd_step. Probes are laid out 7 per query: center, +-x, +-y, +-z.
ad::Var sald_loss_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                        const TapedFeature& Z, const SaldQueries& queries,
                        const std::vector<EuclideanMotion>* frame_override = nullptr);

/// Batch loss (1/N) sum_i mean-tau with the latent reparameterized per
/// sample. Per sample the rng serves the latent draw first, then the
/// queries. Throws EmptyBatchError / EmptyCloudError.
ad::Var sald_loss_batch_taped(const ImplicitVAE& model, ad::Tape& tape, const VarMap& vars,
                              const std::vector<Points>& batch, Rng& rng);
double sald_loss(const ImplicitVAE& model, const std::vector<Points>& batch, Rng& rng);

/// The same integrand for an arbitrary field at fixed queries, using the
/// field's own gradient closure; the oracle form tests compare against.
double sald_loss_field(const ScalarField& f, const SaldQueries& queries);

/// sum_i ||mu_i||_1 + ||eta_i + 1||_1 over all entries (a sum over the
/// batch, not a mean). Throws EmptyBatchError.
ad::Var vae_loss_taped(ad::Tape& tape, const std::vector<TapedFeature>& mus,
                       const std::vector<ad::Var>& etas);
double vae_loss(const std::vector<FeatureMatrix>& mus, const std::vector<Vector>& etas);

/// sald + vae_weight * vae on one rng stream (identical draws to
/// sald_loss_batch_taped called with the same starting state).
ad::Var combined_implicit_loss_taped(const ImplicitVAE& model, ad::Tape& tape,
                                     const VarMap& vars, const std::vector<Points>& batch,
                                     Rng& rng);
double combined_implicit_loss(const ImplicitVAE& model, const std::vector<Points>& batch,
                              Rng& rng);

// ---- piecewise autoencoder ----------------------------------------------

/// Row-stochastic vertex-to-part assignment. hard means every entry is 0
/// or 1 (exactly one 1 per row).
struct PartWeights {
  Matrix W;  // n x k
  bool hard = false;
};

/// Validates rows sum to 1 within 1e-8 and entries lie in [0, 1]; detects
/// hardness. Throws InvalidSpecError.
PartWeights make_part_weights(Matrix W);

/// Row-wise power sharpening: rows proportional to w^(1/temperature),
/// renormalized; temperature -> 0 approaches the hard assignment.
PartWeights sharpen(const PartWeights& W, double temperature);

/// Part j's geometry: vertices fade toward the part's weighted centroid,
/// X_j = (1 - w_j) c_j^T + w_j (.) X with c_j = weighted_centroid(X, w_j).
/// Throws ZeroWeightError when column j sums to zero.
Points part_geometry(const Points& X, const PartWeights& W, Index part);

/// Shared encoder/decoder applied per part: part j is encoded under the
/// frame pca_frame(X, w_j) and decoded meshes are blended by W. k = 1 with
/// all-ones weights reproduces the global model bit for bit.
struct PiecewiseMeshAE {
  Index n = 0;
  LatentDims dims;  // per part
  PartWeights parts;
  MeshNetConfig encoder;
  MlpConfig decoder;
  ad::ParamMap params;  // same key scheme as GlobalMeshAE
};

PiecewiseMeshAE make_piecewise_mesh_ae(Index n, std::vector<std::vector<int>> adjacency,
                                       PartWeights parts, LatentDims dims, Index hidden,
                                       int rounds, Rng& rng);

/// Z_j = FA(phi)(X_j) under part j's weighted frame. Frame errors carry the
/// part index in their message.
std::vector<TapedFeature> encode_piecewise_taped(const PiecewiseMeshAE& model,
                                                 ad::Tape& tape, const VarMap& vars,
                                                 const Points& X);
/// Y = sum_j w_j (.) FA(psi)(Z_j), each part under the frame of its own U.
ad::Var decode_piecewise_taped(
    const PiecewiseMeshAE& model, ad::Tape& tape, const VarMap& vars,
    const std::vector<TapedFeature>& Z,
    const std::vector<std::vector<EuclideanMotion>>* frame_override = nullptr);

std::vector<FeatureMatrix> encode_piecewise(const PiecewiseMeshAE& model, const Points& X);
Points decode_piecewise(const PiecewiseMeshAE& model, const std::vector<FeatureMatrix>& Z);

ad::Var recon_loss_piecewise_taped(
    const PiecewiseMeshAE& model, ad::Tape& tape, const VarMap& vars,
    const std::vector<Points>& batch,
    const std::vector<std::vector<std::vector<EuclideanMotion>>>* decode_frames = nullptr);
double recon_loss(const PiecewiseMeshAE& model, const std::vector<Points>& batch);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  int epochs = 200;
  int start_epoch = 0;  // resume offset; epoch streams depend only on (seed, epoch)
  Index batch_size = 16;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;  // optional progress hook
};

struct TrainResult {
  std::vector<double> loss_history;  // one mean objective per epoch
};

/// Minibatch Adam. Shuffling, batching, and every gradient reduction are in
/// fixed order, so a (seed, start_epoch, state) triple fully determines the
/// result; resuming reproduces an uninterrupted run.
TrainResult train_global(GlobalMeshAE& model, const std::vector<Points>& data,
                         const TrainConfig& cfg, ad::AdamState& state);
TrainResult train_piecewise(PiecewiseMeshAE& model, const std::vector<Points>& data,
                            const TrainConfig& cfg, ad::AdamState& state);
TrainResult train_implicit(ImplicitVAE& model, const std::vector<Points>& clouds,
                           const TrainConfig& cfg, ad::AdamState& state);

/// Parameters plus optimizer moments in one checkpoint file; moments are
/// stored under "adam.m." / "adam.v." prefixes and the step count as a 1x1
/// "adam.step". Loading a file without moments yields a fresh state.
void save_training_state(const std::string& path, const ad::ParamMap& params,
                         const ad::AdamState& state);
void load_training_state(const std::string& path, ad::ParamMap& params,
                         ad::AdamState& state);

}  // namespace eqfa
