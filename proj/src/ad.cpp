#include "eqfa/ad.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <utility>

#include "eqfa/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace eqfa::ad {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeMismatchError(msg);
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> pull) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix v) { return push(std::move(v), false, nullptr); }

Var Tape::leaf(Matrix v) { return push(std::move(v), true, nullptr); }

int Tape::check(Var v) const {
  if (v.tape != this || v.idx < 0 || v.idx >= size())
    throw Error("Var does not belong to this tape");
  return v.idx;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(check(v))];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  const int li = check(loss);
  auto& ln = nodes_[static_cast<size_t>(li)];
  if (ln.value.size() != 1) throw NotScalarLossError("backward: loss must be 1x1");
  if (backward_done_) throw Error("backward: tape already differentiated");
  backward_done_ = true;

  for (auto& n : nodes_)
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  if (ln.grad.size() == 0) ln.grad = Matrix::Zero(1, 1);
  ln.grad(0, 0) = 1.0;

  for (int i = li; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.pull) n.pull(*this);
  }
}

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw Error("null Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw Error("operands on different tapes");
  return *a.tape;
}

/// Record a node, then bind its pull closure knowing the result index.
/// `bwd(tape, result_index)` must accumulate into parent grads with +=.
template <class Bwd>
Var record(Tape& t, Matrix value, bool rg, Bwd&& bwd) {
  Var r = t.push(std::move(value), rg, nullptr);
  if (rg) {
    const int ir = r.idx;
    t.node(ir).pull = [ir, bwd = std::forward<Bwd>(bwd)](Tape& t) { bwd(t, ir); };
  }
  return r;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.cols() == B.rows(), "matmul: inner extents differ");
  const int ia = a.idx, ib = b.idx;
  return record(t, A * B, t.node(ia).requires_grad || t.node(ib).requires_grad,
                [ia, ib](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  if (t.node(ia).requires_grad)
                    t.node(ia).grad.noalias() += g * t.node(ib).value.transpose();
                  if (t.node(ib).requires_grad)
                    t.node(ib).grad.noalias() += t.node(ia).value.transpose() * g;
                });
}

namespace {

template <class Combine, class BwdA, class BwdB>
Var binary_same_shape(Var a, Var b, const char* name, Combine&& fwd, BwdA&& ba, BwdB&& bb) {
  Tape& t = tape_of(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), name);
  const int ia = a.idx, ib = b.idx;
  return record(t, fwd(A, B), t.node(ia).requires_grad || t.node(ib).requires_grad,
                [ia, ib, ba, bb](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  if (t.node(ia).requires_grad) ba(t, ia, ib, g);
                  if (t.node(ib).requires_grad) bb(t, ia, ib, g);
                });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(
      a, b, "add: shapes differ", [](const Matrix& A, const Matrix& B) { return Matrix(A + B); },
      [](Tape& t, int ia, int, const Matrix& g) { t.node(ia).grad += g; },
      [](Tape& t, int, int ib, const Matrix& g) { t.node(ib).grad += g; });
}

Var sub(Var a, Var b) {
  return binary_same_shape(
      a, b, "sub: shapes differ", [](const Matrix& A, const Matrix& B) { return Matrix(A - B); },
      [](Tape& t, int ia, int, const Matrix& g) { t.node(ia).grad += g; },
      [](Tape& t, int, int ib, const Matrix& g) { t.node(ib).grad -= g; });
}

Var mul(Var a, Var b) {
  return binary_same_shape(
      a, b, "mul: shapes differ",
      [](const Matrix& A, const Matrix& B) { return Matrix(A.cwiseProduct(B)); },
      [](Tape& t, int ia, int ib, const Matrix& g) {
        t.node(ia).grad += g.cwiseProduct(t.node(ib).value);
      },
      [](Tape& t, int ia, int ib, const Matrix& g) {
        t.node(ib).grad += g.cwiseProduct(t.node(ia).value);
      });
}

Var minimum(Var a, Var b) {
  return binary_same_shape(
      a, b, "minimum: shapes differ",
      [](const Matrix& A, const Matrix& B) { return Matrix(A.cwiseMin(B)); },
      [](Tape& t, int ia, int ib, const Matrix& g) {
        const Matrix mask =
            (t.node(ia).value.array() <= t.node(ib).value.array()).cast<double>().matrix();
        t.node(ia).grad += g.cwiseProduct(mask);
      },
      [](Tape& t, int ia, int ib, const Matrix& g) {
        const Matrix mask =
            (t.node(ia).value.array() > t.node(ib).value.array()).cast<double>().matrix();
        t.node(ib).grad += g.cwiseProduct(mask);
      });
}

namespace {

template <class Fwd, class Bwd>
Var unary(Var a, Fwd&& fwd, Bwd&& bwd) {
  Tape& t = tape_of(a);
  const int ia = a.idx;
  return record(t, fwd(t.value(a)), t.node(ia).requires_grad,
                [ia, bwd](Tape& t, int ir) {
                  bwd(t.node(ia).value, t.node(ir).value, t.node(ir).grad, t.node(ia).grad);
                });
}

}  // namespace

Var scale(Var a, double c) {
  return unary(
      a, [c](const Matrix& A) { return Matrix(c * A); },
      [c](const Matrix&, const Matrix&, const Matrix& g, Matrix& ga) { ga += c * g; });
}

Var shift(Var a, double c) {
  return unary(
      a, [c](const Matrix& A) { return Matrix((A.array() + c).matrix()); },
      [](const Matrix&, const Matrix&, const Matrix& g, Matrix& ga) { ga += g; });
}

Var relu(Var a) {
  return unary(
      a, [](const Matrix& A) { return Matrix(A.cwiseMax(0.0)); },
      [](const Matrix& A, const Matrix&, const Matrix& g, Matrix& ga) {
        ga += g.cwiseProduct((A.array() > 0.0).cast<double>().matrix());
      });
}

Var elu(Var a) {
  return unary(
      a,
      [](const Matrix& A) {
        return Matrix((A.array().max(0.0) + (A.array().min(0.0).exp() - 1.0)).matrix());
      },
      [](const Matrix& A, const Matrix&, const Matrix& g, Matrix& ga) {
        const Matrix d = (A.array() > 0.0).select(Matrix::Ones(A.rows(), A.cols()),
                                                  A.array().exp().matrix());
        ga += g.cwiseProduct(d);
      });
}

Var tanh(Var a) {
  return unary(
      a, [](const Matrix& A) { return Matrix(A.array().tanh().matrix()); },
      [](const Matrix&, const Matrix& out, const Matrix& g, Matrix& ga) {
        ga += g.cwiseProduct((1.0 - out.array().square()).matrix());
      });
}

Var abs(Var a) {
  return unary(
      a, [](const Matrix& A) { return Matrix(A.cwiseAbs()); },
      [](const Matrix& A, const Matrix&, const Matrix& g, Matrix& ga) {
        ga += g.cwiseProduct(A.array().sign().matrix());
      });
}

Var exp(Var a) {
  return unary(
      a, [](const Matrix& A) { return Matrix(A.array().exp().matrix()); },
      [](const Matrix&, const Matrix& out, const Matrix& g, Matrix& ga) {
        ga += g.cwiseProduct(out);
      });
}

Var sqrt(Var a) {
  return unary(
      a, [](const Matrix& A) { return Matrix(A.array().sqrt().matrix()); },
      [](const Matrix&, const Matrix& out, const Matrix& g, Matrix& ga) {
        // d/dx sqrt = 1/(2 sqrt); suppressed at exact zeros to keep
        // perfectly reconstructed samples from poisoning the batch.
        const Matrix d =
            (out.array() > 0.0).select((0.5 / out.array()).matrix(),
                                       Matrix::Zero(out.rows(), out.cols()));
        ga += g.cwiseProduct(d);
      });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](const Matrix& A) { return Matrix(A.array().max(lo).min(hi).matrix()); },
      [lo, hi](const Matrix& A, const Matrix&, const Matrix& g, Matrix& ga) {
        const Matrix mask =
            ((A.array() > lo) && (A.array() < hi)).cast<double>().matrix();
        ga += g.cwiseProduct(mask);
      });
}

Var max_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(A.rows() >= 1, "max_rows: empty input");
  Matrix out(1, A.cols());
  std::vector<Index> arg(static_cast<size_t>(A.cols()));
  for (Index c = 0; c < A.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < A.rows(); ++r)
      if (A(r, c) > A(best, c)) best = r;  // strict: ties keep lowest row
    arg[static_cast<size_t>(c)] = best;
    out(0, c) = A(best, c);
  }
  const int ia = a.idx;
  return record(t, std::move(out), t.node(ia).requires_grad,
                [ia, arg = std::move(arg)](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  Matrix& ga = t.node(ia).grad;
                  for (Index c = 0; c < g.cols(); ++c)
                    ga(arg[static_cast<size_t>(c)], c) += g(0, c);
                });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(A.rows() >= 1, "mean_rows: empty input");
  const double inv = 1.0 / static_cast<double>(A.rows());
  const int ia = a.idx;
  return record(t, Matrix(A.colwise().mean()), t.node(ia).requires_grad,
                [ia, inv](Tape& t, int ir) {
                  const Matrix contrib = inv * t.node(ir).grad;
                  t.node(ia).grad.rowwise() += contrib.row(0);
                });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  const int ia = a.idx;
  return record(t, std::move(out), t.node(ia).requires_grad, [ia](Tape& t, int ir) {
    t.node(ia).grad.array() += t.node(ir).grad(0, 0);
  });
}

Var mean_all(Var a) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(A.size() >= 1, "mean_all: empty input");
  Matrix out(1, 1);
  out(0, 0) = A.mean();
  const double inv = 1.0 / static_cast<double>(A.size());
  const int ia = a.idx;
  return record(t, std::move(out), t.node(ia).requires_grad, [ia, inv](Tape& t, int ir) {
    t.node(ia).grad.array() += inv * t.node(ir).grad(0, 0);
  });
}

Var norm_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  Matrix out = A.rowwise().norm();
  const int ia = a.idx;
  return record(t, std::move(out), t.node(ia).requires_grad, [ia](Tape& t, int ir) {
    const Matrix& g = t.node(ir).grad;
    const Matrix& A = t.node(ia).value;
    const Matrix& n = t.node(ir).value;
    Matrix& ga = t.node(ia).grad;
    for (Index r = 0; r < A.rows(); ++r)
      if (n(r, 0) > 0.0) ga.row(r) += (g(r, 0) / n(r, 0)) * A.row(r);
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.cols() == B.cols(), "concat_rows: column counts differ");
  Matrix out(A.rows() + B.rows(), A.cols());
  out.topRows(A.rows()) = A;
  out.bottomRows(B.rows()) = B;
  const int ia = a.idx, ib = b.idx;
  const Index na = A.rows(), nb = B.rows();
  return record(t, std::move(out), t.node(ia).requires_grad || t.node(ib).requires_grad,
                [ia, ib, na, nb](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  if (t.node(ia).requires_grad) t.node(ia).grad += g.topRows(na);
                  if (t.node(ib).requires_grad) t.node(ib).grad += g.bottomRows(nb);
                });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.rows() == B.rows(), "concat_cols: row counts differ");
  Matrix out(A.rows(), A.cols() + B.cols());
  out.leftCols(A.cols()) = A;
  out.rightCols(B.cols()) = B;
  const int ia = a.idx, ib = b.idx;
  const Index ca = A.cols(), cb = B.cols();
  return record(t, std::move(out), t.node(ia).requires_grad || t.node(ib).requires_grad,
                [ia, ib, ca, cb](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  if (t.node(ia).requires_grad) t.node(ia).grad += g.leftCols(ca);
                  if (t.node(ib).requires_grad) t.node(ib).grad += g.rightCols(cb);
                });
}

Var slice(Var a, Index row0, Index col0, Index rows, Index cols) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(row0 >= 0 && col0 >= 0 && rows >= 0 && cols >= 0 && row0 + rows <= A.rows() &&
              col0 + cols <= A.cols(),
          "slice: block out of range");
  const int ia = a.idx;
  return record(t, Matrix(A.block(row0, col0, rows, cols)), t.node(ia).requires_grad,
                [ia, row0, col0, rows, cols](Tape& t, int ir) {
                  t.node(ia).grad.block(row0, col0, rows, cols) += t.node(ir).grad;
                });
}

namespace {

Matrix reorder_rowmajor(const Matrix& A, Index rows, Index cols) {
  Matrix out(rows, cols);
  Index k = 0;
  for (Index r = 0; r < A.rows(); ++r)
    for (Index c = 0; c < A.cols(); ++c) {
      out(k / cols, k % cols) = A(r, c);
      ++k;
    }
  return out;
}

}  // namespace

Var reshape_rowmajor(Var a, Index rows, Index cols) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(rows * cols == A.size(), "reshape: element count changes");
  const int ia = a.idx;
  const Index ar = A.rows(), ac = A.cols();
  return record(t, reorder_rowmajor(A, rows, cols), t.node(ia).requires_grad,
                [ia, ar, ac](Tape& t, int ir) {
                  t.node(ia).grad += reorder_rowmajor(t.node(ir).grad, ar, ac);
                });
}

Var broadcast_rows(Var v, Index n) {
  Tape& t = tape_of(v);
  const Matrix& A = t.value(v);
  require(A.rows() == 1, "broadcast_rows: input must be 1 x c");
  Matrix out = A.replicate(n, 1);
  const int ia = v.idx;
  return record(t, std::move(out), t.node(ia).requires_grad, [ia](Tape& t, int ir) {
    t.node(ia).grad += t.node(ir).grad.colwise().sum();
  });
}

Var broadcast_cols(Var v, Index c) {
  Tape& t = tape_of(v);
  const Matrix& A = t.value(v);
  require(A.cols() == 1, "broadcast_cols: input must be n x 1");
  Matrix out = A.replicate(1, c);
  const int ia = v.idx;
  return record(t, std::move(out), t.node(ia).requires_grad, [ia](Tape& t, int ir) {
    t.node(ia).grad += t.node(ir).grad.rowwise().sum();
  });
}

Var neighbor_mean(Var a, const std::vector<std::vector<int>>& nbrs) {
  Tape& t = tape_of(a);
  const Matrix& A = t.value(a);
  require(static_cast<Index>(nbrs.size()) == A.rows(), "neighbor_mean: adjacency size");
  Matrix out = Matrix::Zero(A.rows(), A.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    const auto& ns = nbrs[static_cast<size_t>(i)];
    if (ns.empty()) continue;
    for (int j : ns) out.row(i) += A.row(j);
    out.row(i) /= static_cast<double>(ns.size());
  }
  const int ia = a.idx;
  return record(t, std::move(out), t.node(ia).requires_grad,
                [ia, nbrs](Tape& t, int ir) {
                  const Matrix& g = t.node(ir).grad;
                  Matrix& ga = t.node(ia).grad;
                  for (Index i = 0; i < g.rows(); ++i) {
                    const auto& ns = nbrs[static_cast<size_t>(i)];
                    if (ns.empty()) continue;
                    const double inv = 1.0 / static_cast<double>(ns.size());
                    for (int j : ns) ga.row(j) += inv * g.row(i);
                  }
                });
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ShapeMismatchError("adam_step: missing gradient for " + name);
    const Matrix& g = it->second;
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeMismatchError("adam_step: gradient shape differs for " + name);
    Matrix& m = state.m.try_emplace(name, Matrix::Zero(p.rows(), p.cols())).first->second;
    Matrix& v = state.v.try_emplace(name, Matrix::Zero(p.rows(), p.cols())).first->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix mhat = m / bc1;
    const Matrix vhat = v / bc2;
    p.array() -= cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
  }
}

double grad_check(const TapedScalarFn& f, const ParamMap& params, double eps) {
  ParamMap analytic;
  {
    Tape t;
    std::map<std::string, Var> vars;
    for (const auto& [name, p] : params) vars[name] = t.leaf(p);
    Var loss = f(t, vars);
    t.backward(loss);
    for (const auto& [name, v] : vars) analytic[name] = t.grad(v);
  }

  auto eval = [&f](const ParamMap& p) {
    Tape t;
    std::map<std::string, Var> vars;
    for (const auto& [name, m] : p) vars[name] = t.leaf(m);
    return t.value(f(t, vars))(0, 0);
  };

  double worst = 0.0;
  ParamMap probe = params;
  for (auto& [name, p] : probe) {
    for (Index r = 0; r < p.rows(); ++r)
      for (Index c = 0; c < p.cols(); ++c) {
        const double keep = p(r, c);
        p(r, c) = keep + eps;
        const double hi = eval(probe);
        p(r, c) = keep - eps;
        const double lo = eval(probe);
        p(r, c) = keep;
        const double fd = (hi - lo) / (2.0 * eps);
        const double an = analytic[name](r, c);
        worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(an)));
      }
  }
  return worst;
}

namespace {

void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open " + path + " for writing");
  out.write("EQF1", 4);
  for (const auto& [name, m] : tensors) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, 2);
    write_u64(out, static_cast<uint64_t>(m.rows()));
    write_u64(out, static_cast<uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  if (!out) throw Error("checkpoint: write failed for " + path);
}

ParamMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "EQF1") throw Error("checkpoint: bad magic");
  ParamMap out;
  while (true) {
    uint64_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (in.eof()) break;
    if (!in) throw Error("checkpoint: truncated file");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in) throw Error("checkpoint: truncated name");
    const uint64_t rank = read_u64(in);
    if (rank != 2) throw Error("checkpoint: unsupported tensor rank");
    const uint64_t rows = read_u64(in);
    const uint64_t cols = read_u64(in);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw Error("checkpoint: truncated data");
        m(r, c) = v;
      }
    out[name] = std::move(m);
  }
  return out;
}

}  // namespace eqfa::ad
