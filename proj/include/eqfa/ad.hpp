#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eqfa/types.hpp"

namespace eqfa::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy, valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

/// Named parameter tensors. std::map keeps iteration (and therefore every
/// gradient reduction and checkpoint) in deterministic name order.
using ParamMap = std::map<std::string, Matrix>;

/// Eager reverse-mode tape over dense matrices. Scalars are 1x1. Forward
/// values are computed at op-recording time; backward() walks the nodes
/// once in reverse. A tape is single-shot: record, backward, discard.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input; gradients never flow into it.
  Var constant(Matrix v);
  /// Tracked input (parameter or anything differentiated against).
  Var leaf(Matrix v);

  const Matrix& value(Var v) const { return nodes_[check(v)].value; }
  /// Gradient of the last backward()'s loss; zeros for untouched nodes.
  Matrix grad(Var v) const;

  /// Reverse pass from a 1x1 loss. Throws NotScalarLossError otherwise;
  /// throws Error on a second call (one pass per recording).
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

  struct Node {
    Matrix value;
    Matrix grad;  // allocated during backward for nodes that need it
    bool requires_grad = false;
    std::function<void(Tape&)> pull;  // accumulates into parent grads
  };

  Node& node(int i) { return nodes_[static_cast<size_t>(i)]; }
  const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> pull);

 private:
  int check(Var v) const;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitives ------------------------------------------------------
// All shapes are (rows x cols); mismatches throw ShapeMismatchError.

Var matmul(Var a, Var b);
Var add(Var a, Var b);       // same shape
Var sub(Var a, Var b);       // same shape
Var mul(Var a, Var b);       // elementwise, same shape
Var minimum(Var a, Var b);   // elementwise; ties route gradient to a
Var scale(Var a, double c);  // c * a
Var shift(Var a, double c);  // a + c elementwise
Var relu(Var a);
Var elu(Var a);
Var tanh(Var a);
Var abs(Var a);
Var exp(Var a);
Var sqrt(Var a);  // gradient clamped to 0 at exact zeros
Var clamp(Var a, double lo, double hi);
Var max_rows(Var a);   // n x c -> 1 x c; ties route gradient to lowest row
Var mean_rows(Var a);  // n x c -> 1 x c
Var sum_all(Var a);    // -> 1 x 1
Var mean_all(Var a);   // -> 1 x 1
Var norm_rows(Var a);  // n x c -> n x 1 of row norms; zero rows get zero grad
Var concat_rows(Var a, Var b);  // vertical stack
Var concat_cols(Var a, Var b);  // horizontal stack
Var slice(Var a, Index row0, Index col0, Index rows, Index cols);
Var reshape_rowmajor(Var a, Index rows, Index cols);
Var broadcast_rows(Var v, Index n);  // 1 x c -> n x c
Var broadcast_cols(Var v, Index c);  // n x 1 -> n x c
/// out.row(i) = mean of a.row(j) over j in nbrs[i]; empty nbrs give zero.
/// The adjacency is copied into the node, so it need not outlive the call.
Var neighbor_mean(Var a, const std::vector<std::vector<int>>& nbrs);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }

// ---- optimizer -------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  ParamMap m;
  ParamMap v;
};

/// Standard Adam with bias correction. Moments are created on first use.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const AdamConfig& cfg = {});

// ---- verification ----------------------------------------------------

/// f builds a 1x1 loss on the given tape from leaves bound per name.
using TapedScalarFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

/// Max over all parameter entries of
///   |analytic - central difference| / max(1, |analytic|).
double grad_check(const TapedScalarFn& f, const ParamMap& params, double eps = 1e-5);

// ---- checkpointing ---------------------------------------------------
// Flat little-endian binary: magic "EQF1", then per tensor: u64 name
// length, name bytes, u64 rank (always 2), u64 extents, f64 data in
// row-major order. Round trips are bit exact.

void save_checkpoint(const std::string& path, const ParamMap& tensors);
ParamMap load_checkpoint(const std::string& path);

}  // namespace eqfa::ad
