#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "eqfa/ad.hpp"
#include "eqfa/errors.hpp"
#include "eqfa/rng.hpp"
#include "support/testers.hpp"

using namespace eqfa;
using ad::Tape;
using ad::Var;
using testing::random_matrix;

namespace {

/// Central-difference check of one primitive: loss = sum(op(inputs)).
/// Returns max relative error over all input entries.
double fd_check_op(const std::function<Var(Tape&, std::vector<Var>&)>& op,
                   std::vector<Matrix> inputs, double eps = 1e-5) {
  std::vector<Matrix> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(t.leaf(m));
    Var loss = ad::sum_all(op(t, vars));
    t.backward(loss);
    for (const auto& v : vars) analytic.push_back(t.grad(v));
  }
  auto eval = [&op](const std::vector<Matrix>& ins) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& m : ins) vars.push_back(t.leaf(m));
    return t.value(ad::sum_all(op(t, vars)))(0, 0);
  };
  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k)
    for (Index r = 0; r < inputs[k].rows(); ++r)
      for (Index c = 0; c < inputs[k].cols(); ++c) {
        const double keep = inputs[k](r, c);
        inputs[k](r, c) = keep + eps;
        const double hi = eval(inputs);
        inputs[k](r, c) = keep - eps;
        const double lo = eval(inputs);
        inputs[k](r, c) = keep;
        const double fd = (hi - lo) / (2.0 * eps);
        const double an = analytic[k](r, c);
        worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(an)));
      }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("matmul forward matches the naive triple loop") {
  Rng rng(81);
  const Matrix A = random_matrix(rng, 2, 3);
  const Matrix B = random_matrix(rng, 3, 4);
  Tape t;
  const Matrix C = t.value(ad::matmul(t.constant(A), t.constant(B)));
  REQUIRE(C.rows() == 2);
  REQUIRE(C.cols() == 4);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 4; ++j) {
      double s = 0.0;
      for (Index k = 0; k < 3; ++k) s += A(i, k) * B(k, j);
      CHECK(C(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  Tape t2;
  CHECK_THROWS_AS(ad::matmul(t2.constant(A), t2.constant(Matrix::Zero(4, 2))),
                  ShapeMismatchError);
}

TEST_CASE("relu and mean-reduce hand values") {
  Tape t;
  Matrix x(1, 3);
  x << -1, 0, 2;
  Matrix expect(1, 3);
  expect << 0, 0, 2;
  CHECK(t.value(ad::relu(t.constant(x))) == expect);
  const Matrix c = Matrix::Constant(5, 4, 3.25);
  CHECK(t.value(ad::mean_rows(t.constant(c))) == Matrix::Constant(1, 4, 3.25));
  CHECK(t.value(ad::mean_all(t.constant(c)))(0, 0) == 3.25);
}

TEST_CASE("backward of a plain sum is all ones") {
  Rng rng(82);
  Tape t;
  Var x = t.leaf(random_matrix(rng, 3, 5));
  t.backward(ad::sum_all(x));
  CHECK(t.grad(x) == Matrix::Ones(3, 5));
}

TEST_CASE("backward of |W x|^2 matches the symbolic gradient") {
  Rng rng(83);
  const Matrix W = random_matrix(rng, 4, 3);
  const Matrix x = random_matrix(rng, 3, 1);
  Tape t;
  Var xv = t.leaf(x);
  Var y = ad::matmul(t.constant(W), xv);
  t.backward(ad::sum_all(ad::mul(y, y)));
  const Matrix expect = 2.0 * W.transpose() * W * x;
  CHECK((t.grad(xv) - expect).norm() < 1e-12);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(84);
  const Matrix A = random_matrix(rng, 3, 4);
  const Matrix B = random_matrix(rng, 3, 4);
  // Keep inputs away from the kinks of abs/relu/minimum/clamp.
  const Matrix P = A.array().abs().matrix() + Matrix::Constant(3, 4, 0.5);

  auto u = [](std::function<Var(Var)> f) {
    return [f](Tape&, std::vector<Var>& v) { return f(v[0]); };
  };
  auto b2 = [](std::function<Var(Var, Var)> f) {
    return [f](Tape&, std::vector<Var>& v) { return f(v[0], v[1]); };
  };

  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::matmul(a, b); }),
                    {random_matrix(rng, 3, 4), random_matrix(rng, 4, 2)}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::add(a, b); }), {A, B}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::sub(a, b); }), {A, B}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::mul(a, b); }), {A, B}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::minimum(a, b); }),
                    {A, Matrix(B.array() + 0.05)}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::scale(a, -2.5); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::shift(a, 1.5); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::relu(a); }), {P}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::elu(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::tanh(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::abs(a); }), {P}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::exp(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::sqrt(a); }), {P}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::clamp(a, -0.4, 0.4); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::max_rows(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::mean_rows(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::mean_all(a); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::norm_rows(a); }), {P}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::concat_rows(a, b); }), {A, B}) < 1e-4);
  CHECK(fd_check_op(b2([](Var a, Var b) { return ad::concat_cols(a, b); }), {A, B}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::slice(a, 1, 1, 2, 2); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::reshape_rowmajor(a, 4, 3); }), {A}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::broadcast_rows(a, 5); }),
                    {random_matrix(rng, 1, 4)}) < 1e-4);
  CHECK(fd_check_op(u([](Var a) { return ad::broadcast_cols(a, 5); }),
                    {random_matrix(rng, 4, 1)}) < 1e-4);
  const std::vector<std::vector<int>> nbrs = {{1, 2}, {0}, {0, 1}};
  CHECK(fd_check_op(u([nbrs](Var a) { return ad::neighbor_mean(a, nbrs); }),
                    {random_matrix(rng, 3, 4)}) < 1e-4);
  // Composite: weighted sum to exercise mixed paths.
  CHECK(fd_check_op(b2([](Var a, Var b) {
          return ad::norm_rows(ad::sub(ad::tanh(a), ad::mul(a, b)));
        }),
        {A, B}) < 1e-4);
}

TEST_CASE("reshape follows row-major order") {
  Tape t;
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Matrix r = t.value(ad::reshape_rowmajor(t.constant(m), 3, 2));
  Matrix expect(3, 2);
  expect << 1, 2, 3, 4, 5, 6;
  CHECK(r == expect);
}

TEST_CASE("max_rows breaks ties toward the lowest row") {
  Tape t;
  Matrix m(3, 2);
  m << 1, 7, 5, 7, 5, 3;
  Var x = t.leaf(m);
  t.backward(ad::sum_all(ad::max_rows(x)));
  Matrix expect(3, 2);
  expect << 0, 1, 1, 0, 0, 0;
  CHECK(t.grad(x) == expect);
}

TEST_CASE("a random 3-layer MLP matches finite differences") {
  Rng rng(85);
  ad::ParamMap params;
  params["W0"] = random_matrix(rng, 5, 8);
  params["b0"] = random_matrix(rng, 1, 8, 0.1);
  params["W1"] = random_matrix(rng, 8, 8);
  params["b1"] = random_matrix(rng, 1, 8, 0.1);
  params["W2"] = random_matrix(rng, 8, 2);
  params["b2"] = random_matrix(rng, 1, 2, 0.1);
  const Matrix x = random_matrix(rng, 4, 5);

  auto f = [&x](Tape& t, const std::map<std::string, Var>& p) {
    Var h = t.constant(x);
    h = ad::tanh(ad::add(ad::matmul(h, p.at("W0")), ad::broadcast_rows(p.at("b0"), 4)));
    h = ad::tanh(ad::add(ad::matmul(h, p.at("W1")), ad::broadcast_rows(p.at("b1"), 4)));
    h = ad::add(ad::matmul(h, p.at("W2")), ad::broadcast_rows(p.at("b2"), 4));
    return ad::mean_all(ad::mul(h, h));
  };
  CHECK(ad::grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("grad_check is exact for linear maps and flags planted bugs") {
  Rng rng(86);
  ad::ParamMap params;
  params["w"] = random_matrix(rng, 1, 6);
  const Matrix c = random_matrix(rng, 6, 1);
  auto linear = [&c](Tape& t, const std::map<std::string, Var>& p) {
    return ad::matmul(p.at("w"), t.constant(c));
  };
  CHECK(ad::grad_check(linear, params, 1e-5) < 1e-10);

  // Deliberately wrong gradient: scale inside a custom pull would be
  // invisible to the forward value, so emulate a bug by checking a
  // different function than the one differentiated.
  ad::ParamMap p2;
  p2["w"] = random_matrix(rng, 1, 4);
  bool flip = true;
  auto buggy = [&flip](Tape& t, const std::map<std::string, Var>& p) {
    // Analytic pass sees 2*sum(w), finite differences see sum(w).
    Var w = p.at("w");
    Var out = ad::sum_all(w);
    if (flip) out = ad::scale(out, 2.0);
    flip = false;
    return out;
  };
  CHECK(ad::grad_check(buggy, p2, 1e-5) > 1e-2);
}

TEST_CASE("backward demands a scalar loss and runs once") {
  Rng rng(87);
  Tape t;
  Var x = t.leaf(random_matrix(rng, 2, 2));
  CHECK_THROWS_AS(t.backward(x), NotScalarLossError);
  Var loss = ad::sum_all(x);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  ad::ParamMap params;
  params["w"] = Matrix::Constant(2, 2, 1.5);
  ad::ParamMap grads;
  grads["w"] = Matrix::Zero(2, 2);
  ad::AdamState st;
  const ad::ParamMap before = params;
  for (int i = 0; i < 5; ++i) ad::adam_step(params, grads, st, {});
  CHECK(params["w"] == before.at("w"));
  CHECK(st.m["w"] == Matrix::Zero(2, 2));
  CHECK(st.v["w"] == Matrix::Zero(2, 2));
}

TEST_CASE("adam steps approach lr against a constant gradient") {
  ad::ParamMap params;
  params["w"] = Matrix::Zero(1, 1);
  ad::ParamMap grads;
  grads["w"] = Matrix::Constant(1, 1, 3.0);
  ad::AdamState st;
  ad::AdamConfig cfg;
  cfg.lr = 0.01;
  // After bias correction settles, each step moves against the gradient
  // sign by a magnitude approaching lr.
  for (int i = 0; i < 200; ++i) ad::adam_step(params, grads, st, cfg);
  CHECK(params["w"](0, 0) < 0.0);
  const double before = params["w"](0, 0);
  ad::adam_step(params, grads, st, cfg);
  CHECK(std::abs((before - params["w"](0, 0)) - cfg.lr) < 0.05 * cfg.lr);
}

TEST_CASE("adam finds the bottom of a quadratic bowl") {
  Rng rng(88);
  const Matrix target = random_matrix(rng, 3, 2);
  ad::ParamMap params;
  params["x"] = random_matrix(rng, 3, 2, 2.0);
  ad::AdamState st;
  ad::AdamConfig cfg;
  cfg.lr = 0.05;
  for (int i = 0; i < 500; ++i) {
    Tape t;
    Var x = t.leaf(params["x"]);
    Var d = ad::sub(x, t.constant(target));
    t.backward(ad::sum_all(ad::mul(d, d)));
    ad::ParamMap grads;
    grads["x"] = t.grad(x);
    ad::adam_step(params, grads, st, cfg);
  }
  CHECK((params["x"] - target).norm() < 1e-2);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  Rng rng(89);
  ad::ParamMap tensors;
  tensors["enc.W0"] = random_matrix(rng, 4, 7);
  tensors["enc.b0"] = random_matrix(rng, 1, 7);
  tensors["dec/W"] = random_matrix(rng, 9, 2);
  tensors["step"] = Matrix::Constant(1, 1, 12345.0);

  const std::string path =
      (std::filesystem::temp_directory_path() / "eqfa_ckpt_test.bin").string();
  ad::save_checkpoint(path, tensors);
  const ad::ParamMap back = ad::load_checkpoint(path);
  REQUIRE(back.size() == tensors.size());
  for (const auto& [name, m] : tensors) {
    REQUIRE(back.count(name) == 1);
    CHECK(back.at(name) == m);
  }
  std::filesystem::remove(path);
}

TEST_CASE("forward values are deterministic across identical tapes") {
  Rng rng(90);
  const Matrix A = random_matrix(rng, 6, 6);
  const Matrix B = random_matrix(rng, 6, 6);
  auto run = [&] {
    Tape t;
    Var x = t.constant(A);
    Var y = t.constant(B);
    return t.value(ad::mean_all(ad::tanh(ad::matmul(x, ad::elu(y)))))(0, 0);
  };
  const double first = run();
  CHECK(run() == first);
}

}  // TEST_SUITE
