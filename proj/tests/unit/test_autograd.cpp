#include <doctest.h>

#include <random>

#include "arcscore/autograd.hpp"
#include "arcscore/optim.hpp"
#include "test_support.hpp"

using namespace arcscore;
using arcscore::testing::check_gradients;

namespace {

Parameter param(const std::string& name, int rows, int cols, std::mt19937_64& rng, double sd = 0.5) {
  std::normal_distribution<double> n(0.0, sd);
  Parameter p{name, Matrix(rows, cols)};
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = n(rng);
  return p;
}

nn::Var sum_all(nn::Tape& t, nn::Var x, const Matrix& weights) {
  // <x, W> as a 1x1 node, so every entry of x gets a distinct upstream gradient.
  const Matrix w = weights;
  const double v = (t.value(x).array() * w.array()).sum();
  return t.record(Matrix::Constant(1, 1, v), t.requires_grad(x),
                  [x, w](nn::Tape& tape, const Matrix& up) { tape.accumulate(x, up(0, 0) * w); });
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences") {
  std::mt19937_64 rng(1);
  Parameter x = param("x", 3, 4, rng), w = param("w", 4, 5, rng), b = param("b", 1, 5, rng);
  const Matrix probe = random_normal(3, 5, 1.0, rng);
  auto build = [&](nn::Tape& t) {
    nn::Var y = nn::linear(t, t.parameter(x), t.parameter(w), t.parameter(b));
    y = nn::gelu(t, y);
    y = nn::add(t, nn::leaky_relu(t, y, 0.1), nn::scale(t, y, 0.3));
    return sum_all(t, y, probe);
  };
  const auto r = check_gradients(build, {&x, &w, &b});
  CHECK(r.worst_relative_error < 1e-6);
}

TEST_CASE("layer norm, gather and mean rows gradients") {
  std::mt19937_64 rng(2);
  Parameter table = param("table", 6, 4, rng), gain = param("gain", 1, 4, rng), bias = param("bias", 1, 4, rng);
  const std::vector<int> ids{0, 3, 3, 5, 1};
  const Matrix probe = random_normal(1, 4, 1.0, rng);
  auto build = [&](nn::Tape& t) {
    nn::Var rows = nn::gather_rows(t, t.parameter(table), ids);
    nn::Var normed = nn::layer_norm(t, rows, t.parameter(gain), t.parameter(bias));
    return sum_all(t, nn::mean_rows(t, normed), probe);
  };
  CHECK(check_gradients(build, {&table, &gain, &bias}).worst_relative_error < 1e-6);
}

TEST_CASE("causal attention gradients and causality") {
  std::mt19937_64 rng(3);
  Parameter q = param("q", 5, 8, rng), k = param("k", 5, 8, rng), v = param("v", 5, 8, rng);
  const Matrix probe = random_normal(5, 8, 1.0, rng);
  auto build = [&](nn::Tape& t) {
    return sum_all(t, nn::attention(t, t.parameter(q), t.parameter(k), t.parameter(v), 2, true), probe);
  };
  CHECK(check_gradients(build, {&q, &k, &v}).worst_relative_error < 1e-6);

  nn::Tape t1;
  const Matrix a = t1.value(nn::attention(t1, t1.constant(q.value), t1.constant(k.value), t1.constant(v.value), 2, true));
  Parameter k2 = k, v2 = v;
  k2.value.row(4).setConstant(3.0);
  v2.value.row(4).setConstant(-2.0);
  nn::Tape t2;
  const Matrix b = t2.value(nn::attention(t2, t2.constant(q.value), t2.constant(k2.value), t2.constant(v2.value), 2, true));
  CHECK((a.topRows(4) - b.topRows(4)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.row(4) - b.row(4)).norm() > 0.0);
}

TEST_CASE("cross attention over a different key length") {
  std::mt19937_64 rng(4);
  Parameter q = param("q", 3, 4, rng), k = param("k", 4, 4, rng), v = param("v", 4, 4, rng);
  const Matrix probe = random_normal(3, 4, 1.0, rng);
  auto build = [&](nn::Tape& t) {
    return sum_all(t, nn::attention(t, t.parameter(q), t.parameter(k), t.parameter(v), 1, false), probe);
  };
  CHECK(check_gradients(build, {&q, &k, &v}).worst_relative_error < 1e-6);
}

TEST_CASE("dilated causal convolution") {
  std::mt19937_64 rng(5);
  Parameter x = param("x", 9, 3, rng), w = param("w", 3 * 3, 2, rng), b = param("b", 1, 2, rng);
  const Matrix probe = random_normal(9, 2, 1.0, rng);
  auto build = [&](nn::Tape& t) {
    return sum_all(t, nn::causal_conv1d(t, t.parameter(x), t.parameter(w), t.parameter(b), 3, 2), probe);
  };
  CHECK(check_gradients(build, {&x, &w, &b}).worst_relative_error < 1e-6);

  SUBCASE("direct evaluation") {
    nn::Tape t;
    const Matrix y = t.value(nn::causal_conv1d(t, t.constant(x.value), t.constant(w.value), t.constant(b.value), 3, 2));
    for (int row = 0; row < 9; ++row) {
      RowVector expect = b.value;
      for (int j = 0; j < 3; ++j) {
        const int src = row - j * 2;
        if (src >= 0) expect += x.value.row(src) * w.value.middleRows(j * 3, 3);
      }
      CHECK((y.row(row) - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("cross entropy skips negative targets") {
  std::mt19937_64 rng(6);
  Parameter logits = param("logits", 4, 5, rng);
  const std::vector<int> targets{2, -1, 0, 4};
  auto build = [&](nn::Tape& t) { return nn::cross_entropy_sum(t, t.parameter(logits), targets); };
  CHECK(check_gradients(build, {&logits}).worst_relative_error < 1e-6);

  nn::Tape t;
  nn::Var loss = nn::cross_entropy_sum(t, t.constant(Matrix::Zero(3, 64)), std::vector<int>{1, 2, 3});
  CHECK(t.value(loss)(0, 0) == doctest::Approx(3.0 * std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("emo loss value and gradient") {
  Parameter pred{"pred", Matrix(2, 2)};
  pred.value << 0.5, -0.2, 0.1, 0.3;
  Matrix truth(2, 2);
  truth << 0.0, 0.0, 0.4, -0.1;
  nn::Tape t;
  nn::Var l = nn::emo_loss(t, t.parameter(pred), truth, 0.5);
  // rows: r0 = (0.5,-0.2): 0.29 + 0.5*0.7; r1 = (-0.3,0.4): 0.25 + 0.5*0.7
  CHECK(t.value(l)(0, 0) == doctest::Approx((0.29 + 0.35 + 0.25 + 0.35) / 2.0).epsilon(1e-12));
  auto build = [&](nn::Tape& tape) { return nn::emo_loss(tape, tape.parameter(pred), truth, 0.5); };
  CHECK(check_gradients(build, {&pred}).worst_relative_error < 1e-6);
}

TEST_CASE("frozen parameters receive no gradient") {
  std::mt19937_64 rng(7);
  Parameter a = param("a", 2, 2, rng), b = param("b", 2, 2, rng);
  nn::Tape t;
  nn::Var y = nn::matmul(t, t.parameter(a, true), t.parameter(b, false));
  t.backward(sum_all(t, y, Matrix::Ones(2, 2)));
  CHECK(t.gradient(a) != nullptr);
  CHECK(t.gradient(b) == nullptr);
}

TEST_CASE("adam moves against the gradient and keeps f32 values") {
  Parameter p{"p", Matrix::Constant(1, 3, 1.0)};
  nn::Adam adam({&p}, {.learning_rate = 0.1});
  adam.step({(Matrix(1, 3) << 1.0, -1.0, 0.0).finished()});
  CHECK(p.value(0, 0) < 1.0);
  CHECK(p.value(0, 1) > 1.0);
  CHECK(p.value(0, 2) == 1.0);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(static_cast<double>(static_cast<float>(p.value(0, i))) == p.value(0, i));
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, std::uint64_t{0}) != derive_seed(2, std::uint64_t{0}));
}
