#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "daf/error.hpp"
#include "daf/rng.hpp"
#include "daf/tensor.hpp"

namespace daf {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.normal();
  Tensor t(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad();
  return t;
}

// Independent central-difference oracle: perturbs one input coordinate and
// re-evaluates the scalar function without any tape.
double fd(const std::function<double()>& f, Tensor& x, std::size_t i, double h = 1e-5) {
  const double keep = x.data()[i];
  x.data()[i] = keep + h;
  const double up = f();
  x.data()[i] = keep - h;
  const double down = f();
  x.data()[i] = keep;
  return (up - down) / (2 * h);
}

// The floor keeps the difference quotient's rounding noise (about 1e-10 here)
// from dominating near-zero gradients.
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5}); }

// Checks every input coordinate of `op` against the finite-difference oracle.
// The loss is <op(inputs), R> for a fixed random R.
double max_op_error(const std::function<Tensor(std::vector<Tensor>&)>& op, std::vector<Tensor>& inputs, Rng& rng) {
  const Tensor probe = op(inputs);
  const Tensor r = random_tensor(rng, probe.shape(), false);
  auto loss = [&]() { return sum(mul(op(inputs), r)); };
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(loss());
  }
  double worst = 0.0;
  for (auto& x : inputs) {
    const std::vector<double> g(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_err(g[i], fd([&] { return loss().item(); }, x, i)));
  }
  return worst;
}

TEST(Matmul, Examples) {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor out = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()), (std::vector<double>{1, 2, 3, 4}));

  const Tensor p = matmul(Tensor::matrix({{1, 0}, {0, 0}}), Tensor::matrix({{5}, {7}}));
  EXPECT_EQ(p.shape(), (Shape{2, 1}));
  EXPECT_EQ(p[0], 5.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Matmul, GradOfSumIsRowSumsOfB) {
  Rng rng(1);
  Tensor a = random_tensor(rng, {3, 4});
  const Tensor b = random_tensor(rng, {4, 5}, false);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double row = 0.0;
      for (std::size_t j = 0; j < 5; ++j) row += b[k * 5 + j];
      EXPECT_NEAR(a.grad()[i * 4 + k], row, 1e-12);
      const double numeric = fd([&] { return sum(matmul(a, b)).item(); }, a, i * 4 + k);
      EXPECT_LT(rel_err(a.grad()[i * 4 + k], numeric), 1e-6);
    }
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST(Elementwise, Examples) {
  Tensor x = Tensor::scalar(0.0).set_requires_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    const Tensor y = tanh(x);
    EXPECT_EQ(y.item(), 0.0);
    tape.backward(y);
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(relu(Tensor::scalar(-2.5)).item(), 0.0);
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(scale(Tensor::vector({1, -2}), 3.0)[1], -6.0);
}

TEST(Elementwise, ScalarBroadcast) {
  const Tensor v = Tensor::vector({1, 2, 3});
  const Tensor out = add(v, Tensor::scalar(10));
  EXPECT_EQ(out[2], 13.0);
  const Tensor out2 = mul(Tensor::scalar(2), v);
  EXPECT_EQ(out2[1], 4.0);
}

TEST(Elementwise, SigmoidStableAtExtremes) {
  const Tensor s = sigmoid(Tensor::vector({-800, 800}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(Softmax, Examples) {
  const Tensor u = softmax(Tensor::vector({0, 0, 0}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(u[i], 1.0 / 3.0, 1e-15);

  const Tensor m = softmax(Tensor::vector({5, -1e9, 5}), Mask({3}, {1, 0, 1}));
  EXPECT_EQ(m[0], 0.5);
  EXPECT_EQ(m[1], 0.0);
  EXPECT_EQ(m[2], 0.5);

  const Tensor d = softmax(Tensor::vector({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(d[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, RowsSumToOneAndMaskedAreExactZero) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.uniform_int(0, 4), n = 1 + rng.uniform_int(0, 9);
    const Tensor x = random_tensor(rng, {rows, n}, false);
    std::vector<std::uint8_t> on(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) on[r * n + j] = rng.uniform() < 0.6;
      on[r * n + rng.uniform_int(0, n - 1)] = 1;
    }
    const Mask mask({rows, n}, on);
    const Tensor s = softmax(scale(x, 30.0), mask);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = s[r * n + j];
        if (!mask[r * n + j]) EXPECT_EQ(v, 0.0);
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, FullyMaskedRowIsAnError) {
  EXPECT_THROW(softmax(Tensor::vector({1, 2}), Mask({2}, {0, 0})), NumericError);
}

TEST(Concat, Examples) {
  const Tensor c = concat({Tensor::vector({1, 2}), Tensor::vector({3})}, 0);
  EXPECT_EQ(c.shape(), (Shape{3}));
  EXPECT_EQ(c[2], 3.0);

  const Tensor wide = concat({Tensor::zeros({2, 768}), Tensor::zeros({2, 32}), Tensor::zeros({2, 32})}, 1);
  EXPECT_EQ(wide.shape(), (Shape{2, 832}));

  Tensor a = Tensor::vector({1, 2}).set_requires_grad();
  Tensor b = Tensor::vector({3}).set_requires_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(concat({a, b}, 0)));
  }
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(a.grad()[1], 1.0);
  EXPECT_EQ(b.grad()[0], 1.0);
}

TEST(Reduce, Examples) {
  EXPECT_EQ(mean(Tensor::vector({1, 2, 3})).item(), 2.0);
  const Tensor s = sum(Tensor::matrix({{1, 2}, {3, 4}}), 0);
  EXPECT_EQ(s[0], 4.0);
  EXPECT_EQ(s[1], 6.0);

  Tensor x = Tensor::vector({5, 6, 7, 8}).set_requires_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(mean(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 0.25);
}

TEST(Backward, Examples) {
  Tensor x = Tensor::scalar(3.0).set_requires_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(mul(x, x));
  }
  EXPECT_EQ(x.grad()[0], 6.0);

  Tensor w = Tensor::matrix({{1, 2, 3}, {4, 5, 6}}).set_requires_grad();
  const Tensor v = Tensor::matrix({{7}, {8}, {9}});
  Tape tape2;
  {
    Tape::Scope scope(tape2);
    tape2.backward(sum(matmul(w, v)));
  }
  const double expect[] = {7, 8, 9, 7, 8, 9};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(w.grad()[i], expect[i]);
}

TEST(Backward, IdempotentAndUnreachableLeavesZero) {
  Rng rng(3);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor unused = random_tensor(rng, {2});
  Tape tape;
  Tape::Scope scope(tape);
  const Tensor loss = sum(tanh(matmul(a, a)));
  tape.backward(loss);
  const std::vector<double> first(a.grad().begin(), a.grad().end());
  tape.backward(loss);
  const std::vector<double> second(a.grad().begin(), a.grad().end());
  EXPECT_EQ(first, second);
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsAnError) {
  Tensor a = Tensor::vector({1, 2}).set_requires_grad();
  Tape tape;
  Tape::Scope scope(tape);
  EXPECT_THROW(tape.backward(scale(a, 2.0)), DimensionError);
}

TEST(Backward, NoTapeRecordsNothing) {
  Tensor a = Tensor::vector({1, 2}).set_requires_grad();
  Tape tape;
  const Tensor y = scale(a, 2.0);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(y[1], 4.0);
}

// Every differentiable op against the finite-difference oracle on random
// shapes and seeds.
TEST(OpGradients, MatchFiniteDifferencesOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.uniform_int(0, 3), m = 1 + rng.uniform_int(0, 3), k = 1 + rng.uniform_int(0, 3);
    const std::size_t t = 1 + rng.uniform_int(0, 3);
    SCOPED_TRACE("seed " + std::to_string(seed));

    std::vector<Tensor> mm{random_tensor(rng, {n, k}), random_tensor(rng, {k, m})};
    EXPECT_LT(max_op_error([](auto& in) { return matmul(in[0], in[1]); }, mm, rng), 1e-4);

    std::vector<Tensor> af{random_tensor(rng, {n, t, k}), random_tensor(rng, {m, k}), random_tensor(rng, {m})};
    EXPECT_LT(max_op_error([](auto& in) { return affine(in[0], in[1], in[2]); }, af, rng), 1e-4);

    std::vector<Tensor> ew{random_tensor(rng, {n, m}), random_tensor(rng, {n, m})};
    EXPECT_LT(max_op_error([](auto& in) { return add(in[0], in[1]); }, ew, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return sub(in[0], in[1]); }, ew, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return mul(in[0], in[1]); }, ew, rng), 1e-4);

    std::vector<Tensor> sc{Tensor::scalar(rng.normal()).set_requires_grad(), random_tensor(rng, {n, m})};
    EXPECT_LT(max_op_error([](auto& in) { return mul(in[0], in[1]); }, sc, rng), 1e-4);

    std::vector<Tensor> un{random_tensor(rng, {n, m})};
    // Keep relu inputs away from the kink.
    for (double& v : un[0].data()) {
      if (std::abs(v) < 0.05) v = 0.1;
    }
    EXPECT_LT(max_op_error([](auto& in) { return relu(in[0]); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return tanh(in[0]); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return sigmoid(in[0]); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return scale(in[0], -1.7); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return softmax(in[0]); }, un, rng), 1e-4);
    std::vector<std::uint8_t> on(n * m, 1);
    for (std::size_t r = 0; r < n; ++r) on[r * m] = 1, on[r * m + m - 1] = m == 1 || rng.uniform() < 0.5;
    const Mask mask({n, m}, on);
    EXPECT_LT(max_op_error([&](auto& in) { return softmax(in[0], mask); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return sum(in[0], 0); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return mean(in[0], 1); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([](auto& in) { return reshape(mean(in[0]), {1}); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([&](auto& in) { return slice(in[0], 1, 0, (m + 1) / 2); }, un, rng), 1e-4);
    EXPECT_LT(max_op_error([&](auto& in) { return reshape(in[0], {m, n}); }, un, rng), 1e-4);

    std::vector<Tensor> cs{random_tensor(rng, {n, m}), random_tensor(rng, {n, k})};
    EXPECT_LT(max_op_error([](auto& in) { return concat({in[0], in[1]}, 1); }, cs, rng), 1e-4);
    std::vector<Tensor> st{random_tensor(rng, {n, m}), random_tensor(rng, {n, m})};
    EXPECT_LT(max_op_error([](auto& in) { return stack({in[0], in[1]}, 1); }, st, rng), 1e-4);

    std::vector<Tensor> sr{random_tensor(rng, {n, m}), random_tensor(rng, {n})};
    EXPECT_LT(max_op_error([](auto& in) { return scale_rows(in[0], in[1]); }, sr, rng), 1e-4);

    std::vector<std::uint8_t> keep(n);
    for (auto& b : keep) b = rng.uniform() < 0.5;
    std::vector<Tensor> sel{random_tensor(rng, {n, m}), random_tensor(rng, {n, m})};
    EXPECT_LT(max_op_error([&](auto& in) { return select_rows(Mask({n}, keep), in[0], in[1]); }, sel, rng), 1e-4);

    std::vector<Tensor> sd{random_tensor(rng, {n, t, k}), random_tensor(rng, {n, k})};
    EXPECT_LT(max_op_error([](auto& in) { return seq_dot(in[0], in[1]); }, sd, rng), 1e-4);
    std::vector<Tensor> ws{random_tensor(rng, {n, t}), random_tensor(rng, {n, t, k})};
    EXPECT_LT(max_op_error([](auto& in) { return seq_weighted_sum(in[0], in[1]); }, ws, rng), 1e-4);
  }
}

TEST(Ops, FiniteInputsGiveFiniteOutputs) {
  const Tensor big = Tensor::vector({-1e300, -700, 0, 700, 1e300});
  for (const Tensor& out : {tanh(big), sigmoid(big), softmax(big), relu(big)}) {
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(GradFault, ScalesOneOpKind) {
  Tensor x = Tensor::scalar(0.3).set_requires_grad();
  Tape tape;
  Tape::Scope scope(tape);
  {
    ScopedGradFault fault("tanh", 2.0);
    tape.backward(tanh(x));
  }
  const double t = std::tanh(0.3);
  EXPECT_NEAR(x.grad()[0], 2.0 * (1 - t * t), 1e-15);
}

}  // namespace
}  // namespace daf
