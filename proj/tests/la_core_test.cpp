#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmail/autodiff.hpp"
#include "cmail/nn.hpp"
#include "cmail/rng.hpp"
#include "test_util.hpp"

using namespace cmail;
using namespace cmail::la;
using testutil::fd_gradients;
using testutil::matmul_oracle;
using testutil::max_rel_error;
using testutil::random_matrix;

TEST_CASE("matmul identity and hand cases") {
  Rng rng(7);
  Matrix m = random_matrix(2, 2, rng);
  Tape t;
  Var prod = matmul(t.constant(Matrix::Identity(2, 2)), t.constant(m));
  CHECK(prod.value().isApprox(m, 0.0));

  Matrix a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  Tape t2;
  CHECK(matmul(t2.constant(a), t2.constant(b)).value()(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(4, 2, rng);
  Tape t;
  Matrix got = matmul(t.constant(a), t.constant(b)).value();
  CHECK((got - matmul_oracle(a, b)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Matrix::Zero(3, 4));
  Var b = t.constant(Matrix::Zero(5, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("3x4"), DimensionError);
}

TEST_CASE("matmul associativity over chains") {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Matrix> chain;
    int n = 2 + rng.uniform_int(4);  // 2..5 matrices
    std::vector<int> dims;
    for (int i = 0; i <= n; ++i) dims.push_back(1 + rng.uniform_int(5));
    for (int i = 0; i < n; ++i) chain.push_back(random_matrix(dims[i], dims[i + 1], rng));
    Tape t;
    Var left = t.constant(chain[0]);
    for (int i = 1; i < n; ++i) left = matmul(left, t.constant(chain[i]));
    Var right = t.constant(chain[n - 1]);
    for (int i = n - 2; i >= 0; --i) right = matmul(t.constant(chain[i]), right);
    CHECK((left.value() - right.value()).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("mlp zero weights give zero output") {
  Rng rng(1);
  Mlp net(3, {4}, 2, rng);
  for (auto* p : net.params()) p->value.setZero();
  Matrix x = random_matrix(5, 3, rng);
  CHECK(net.forward_value(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single linear layer selects weight row on one-hot input") {
  Rng rng(2);
  Mlp net(2, {}, 3, rng);
  Matrix x(1, 2);
  x << 1, 0;
  Matrix out = net.forward_value(x);
  Matrix want = net.layers()[0].weight.value.row(0) + net.layers()[0].bias.value.row(0);
  CHECK((out - want).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("mlp forward matches step-by-step oracle") {
  Rng rng(3);
  Mlp net(4, {5, 6}, 3, rng);
  Matrix x = random_matrix(7, 4, rng);

  Matrix h = x;
  h = ((h * net.layers()[0].weight.value).rowwise() + net.layers()[0].bias.value.row(0));
  h = h.array().tanh();
  h = ((h * net.layers()[1].weight.value).rowwise() + net.layers()[1].bias.value.row(0));
  h = h.array().tanh();
  h = ((h * net.layers()[2].weight.value).rowwise() + net.layers()[2].bias.value.row(0));

  Tape t;
  Matrix got = net.forward(t, t.constant(x)).value();
  CHECK((got - h).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((net.forward_value(x) - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp input width is validated") {
  Rng rng(4);
  Mlp net(3, {4}, 2, rng);
  Tape t;
  Var x = t.constant(Matrix::Zero(2, 5));
  CHECK_THROWS_AS(net.forward(t, x), DimensionError);
}

TEST_CASE("backward on linear sum gives all-ones gradient") {
  Rng rng(5);
  Parameter p(random_matrix(3, 4, rng));
  Tape t;
  t.backward(sum_all(t.leaf(p)));
  CHECK((p.grad.array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("backward of half squared norm is (Wx)x^T") {
  Rng rng(6);
  Parameter w(random_matrix(3, 2, rng));
  Matrix x = random_matrix(2, 1, rng);
  Tape t;
  Var y = matmul(t.leaf(w), t.constant(x));
  t.backward(scale(sum_squares(y), 0.5));
  Matrix want = (w.value * x) * x.transpose();
  CHECK((w.grad - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("backward rejects non-scalar loss") {
  Rng rng(8);
  Parameter p(random_matrix(2, 2, rng));
  Tape t;
  Var v = t.leaf(p);
  CHECK_THROWS_AS(t.backward(v), ValidationError);
}

TEST_CASE("autodiff matches central differences on 20 random mlps") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    int in = 1 + rng.uniform_int(8);
    int out = 1 + rng.uniform_int(8);
    std::vector<int> hidden;
    int n_hidden = rng.uniform_int(3);
    for (int i = 0; i < n_hidden; ++i) hidden.push_back(1 + rng.uniform_int(8));
    Mlp net(in, hidden, out, rng);
    Matrix x = random_matrix(3, in, rng);
    std::vector<int> targets;
    for (int i = 0; i < 3; ++i) targets.push_back(rng.uniform_int(out));

    auto loss = [&]() {
      Tape t;
      return nll_categorical(net.forward(t, t.constant(x)), targets).value()(0, 0);
    };

    zero_grads(net.params());
    Tape t;
    t.backward(nll_categorical(net.forward(t, t.constant(x)), targets));
    auto fd = fd_gradients(loss, net.params());
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
      CHECK(max_rel_error(params[i]->grad, fd[i]) <= 1e-4);
    }
  }
}

TEST_CASE("every composite op has correct gradients") {
  // One graph exercising gather/replicate/bilinear/concat/slice/clamp/tanh
  // and the gaussian head, checked against finite differences.
  Rng rng(99);
  Parameter table(random_matrix(4, 3, rng));
  Parameter w(random_matrix(5, 8, rng));
  Parameter bias(random_matrix(1, 8, rng));
  Parameter phi_row(random_matrix(1, 2, rng));
  Matrix x = random_matrix(6, 2, rng);
  Matrix actions = random_matrix(6, 2, rng);
  std::vector<int> idx = {0, 2, 3, 1, 2, 0};

  auto build = [&](Tape& t) {
    Var rows = gather_rows(t.leaf(table), idx);                     // 6x3
    Var inp = concat_cols(rows, t.constant(x));                     // 6x5
    Var hid = la::tanh(add_row_broadcast(matmul(inp, t.leaf(w)), t.leaf(bias)));  // 6x8
    Var phi = replicate_rows(t.leaf(phi_row), 6);                   // 6x2
    Var head = row_bilinear(phi, hid, 2, 4);                        // 6x4
    Var mean = slice_cols(head, 0, 2);
    Var log_std = clamp(slice_cols(head, 2, 2), -2.0, 0.5);
    return gaussian_nll(mean, log_std, actions);
  };

  std::vector<Parameter*> params = {&table, &w, &bias, &phi_row};
  auto loss = [&]() {
    Tape t;
    return build(t).value()(0, 0);
  };
  zero_grads(params);
  Tape t;
  t.backward(build(t));
  auto fd = fd_gradients(loss, params);
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(max_rel_error(params[i]->grad, fd[i]) <= 1e-4);
  }
}

TEST_CASE("xent_rows gradient matches finite differences") {
  Rng rng(17);
  Parameter logits(random_matrix(4, 5, rng));
  Matrix target(4, 5);
  for (int i = 0; i < 4; ++i) {
    RowVector r = testutil::random_matrix(1, 5, rng, 0.05, 1.0);
    target.row(i) = r / r.sum();
  }
  auto loss = [&]() {
    Tape t;
    return xent_rows(t.leaf(logits), target).value()(0, 0);
  };
  zero_grads({&logits});
  Tape t;
  t.backward(xent_rows(t.leaf(logits), target));
  auto fd = fd_gradients(loss, {&logits});
  CHECK(max_rel_error(logits.grad, fd[0]) <= 1e-4);
}

TEST_CASE("repeated passes produce bitwise-identical gradients") {
  Rng rng(23);
  Mlp net(4, {6}, 3, rng);
  Matrix x = random_matrix(5, 4, rng);
  std::vector<int> targets = {0, 1, 2, 1, 0};

  auto run = [&]() {
    zero_grads(net.params());
    Tape t;
    t.backward(nll_categorical(net.forward(t, t.constant(x)), targets));
    return param_bytes(net.params());
  };
  std::string g1 = run();
  std::string g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("gradients accumulate additively across backward calls") {
  Rng rng(29);
  Parameter p(random_matrix(2, 2, rng));
  Tape t;
  Var loss = sum_all(t.leaf(p));
  t.backward(loss);
  t.backward(loss);
  CHECK((p.grad.array() - 2.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("adam zero gradient leaves value unchanged") {
  Rng rng(31);
  Parameter p(random_matrix(2, 3, rng));
  Matrix before = p.value;
  Adam opt;
  p.zero_grad();
  opt.step({&p});
  CHECK((p.value - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam single fresh step is lr*g/(|g|+eps)") {
  Rng rng(37);
  Parameter p(random_matrix(2, 2, rng));
  Matrix g = random_matrix(2, 2, rng);
  Matrix before = p.value;
  p.grad = g;
  AdamConfig cfg;
  Adam opt(cfg);
  opt.step({&p});
  Matrix want = before.array() - cfg.lr * g.array() / (g.array().abs() + cfg.eps);
  CHECK((p.value - want).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("adam moves monotonically against a constant gradient") {
  Parameter p(Matrix::Constant(1, 1, 0.5));
  Adam opt;
  double prev = p.value(0, 0);
  for (int i = 0; i < 50; ++i) {
    p.grad = Matrix::Constant(1, 1, 0.3);
    opt.step({&p});
    CHECK(p.value(0, 0) < prev);
    prev = p.value(0, 0);
  }
  CHECK(opt.step_count() == 50);
}

TEST_CASE("clip_grad_norm caps the global norm") {
  Parameter a(Matrix::Constant(2, 2, 0.0));
  Parameter b(Matrix::Constant(1, 2, 0.0));
  a.grad = Matrix::Constant(2, 2, 3.0);
  b.grad = Matrix::Constant(1, 2, 4.0);
  double norm = clip_grad_norm({&a, &b}, 1.0);
  CHECK(norm == doctest::Approx(std::sqrt(4 * 9.0 + 2 * 16.0)));
  double after = std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
  CHECK(after == doctest::Approx(1.0));
}
