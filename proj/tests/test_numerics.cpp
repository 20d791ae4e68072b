#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "common/error.hpp"
#include "numerics/autograd.hpp"
#include "numerics/init.hpp"
#include "numerics/tensor.hpp"

using namespace diar;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool tensors_close(const Tensor& a, const Tensor& b, double tol) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!close(a[i], b[i], tol)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor id = Tensor::of({{1, 0}, {0, 1}});
  Tensor m = Tensor::of({{1, 2}, {3, 4}});
  CHECK(tensors_close(matmul(id, m), m, 0.0));

  Tensor a = Tensor::of({{1, 2}});
  Tensor b = Tensor::of({{3}, {4}});
  Tensor p = matmul(a, b);
  CHECK(p.rows() == 1);
  CHECK(p.cols() == 1);
  CHECK(p[0] == 11.0);
}

TEST_CASE("matmul shape mismatch throws") {
  Tensor a(2, 3), b(2, 3);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
  std::mt19937_64 rng(11);
  Parameter a("a", random_tensor(5, 4, rng));
  Parameter b("b", random_tensor(4, 3, rng));

  ad::Tape tape;
  ad::Var out = tape.matmul(tape.leaf(a), tape.leaf(b));
  tape.backward(tape.sum_all(out));

  Tensor expected = matmul(Tensor::ones(5, 3), transpose(b.value));
  CHECK(tensors_close(a.grad, expected, 1e-12));

  // and against central differences
  std::vector<Parameter*> params{&a, &b};
  auto f = [&](ad::Tape& t) { return t.sum_all(t.matmul(t.leaf(a), t.leaf(b))); };
  CHECK(grad_check(f, params, 1e-5) < 1e-8);
}

TEST_CASE("matmul associativity on random triples") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    Tensor a = random_tensor(4, 5, rng);
    Tensor b = random_tensor(5, 3, rng);
    Tensor c = random_tensor(3, 6, rng);
    CHECK(tensors_close(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), 1e-9));
  }
}

TEST_CASE("softmax_rows values") {
  Tensor u = softmax_rows(Tensor::of({{0, 0, 0}}));
  for (int j = 0; j < 3; ++j) CHECK(close(u[j], 1.0 / 3.0, 1e-15));

  Tensor sat = softmax_rows(Tensor::of({{1000, 0}}));
  CHECK(close(sat[0], 1.0, 1e-12));
  CHECK(close(sat[1], 0.0, 1e-12));
  CHECK(sat.all_finite());

  // scalar exp/sum oracle
  Tensor x = Tensor::of({{1, 2, 3}});
  Tensor y = softmax_rows(x);
  double denom = std::exp(1.0 - 3.0) + std::exp(2.0 - 3.0) + std::exp(0.0);
  for (int j = 0; j < 3; ++j) CHECK(close(y[j], std::exp(x[j] - 3.0) / denom, 1e-15));
}

TEST_CASE("softmax rows sum to one for any finite input") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> wild(-500.0, 500.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x(3, 7);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = wild(rng);
    Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) s += y.at(i, j);
      CHECK(close(s, 1.0, 1e-9));
    }
  }
}

TEST_CASE("sigmoid values") {
  CHECK(sigmoid_scalar(0.0) == 0.5);
  CHECK(close(sigmoid_scalar(1.0), 0.73105857863000490, 1e-14));
  double tiny = sigmoid_scalar(-745.0);
  CHECK(std::isfinite(tiny));
  CHECK(tiny >= 0.0);
  CHECK(tiny < 1e-300);
  CHECK(sigmoid_scalar(745.0) <= 1.0);
}

TEST_CASE("lstm_cell zero everything gives zero state") {
  const std::size_t d = 4;
  ad::LstmParams p;
  p.w_x = Parameter("wx", Tensor(d, 4 * d));
  p.w_h = Parameter("wh", Tensor(d, 4 * d));
  p.b = Parameter("b", Tensor(1, 4 * d));

  ad::Tape tape(false);
  ad::Var h0 = tape.constant(Tensor(1, d));
  ad::Var c0 = tape.constant(Tensor(1, d));
  ad::Var x = tape.constant(Tensor(1, d));
  auto s = ad::lstm_cell(tape, h0, c0, x, p);
  CHECK(tensors_close(tape.value(s.h), Tensor(1, d), 0.0));
  CHECK(tensors_close(tape.value(s.c), Tensor(1, d), 0.0));
}

TEST_CASE("lstm_cell saturated forget gate keeps cell state") {
  const std::size_t d = 3;
  std::mt19937_64 rng(21);
  ad::LstmParams p = make_lstm_params("lstm", d, d, rng);
  for (std::size_t j = d; j < 2 * d; ++j) p.b.value[j] = 50.0;  // forget ~ 1

  Tensor c_prev = random_tensor(1, d, rng);
  Tensor h_prev = random_tensor(1, d, rng, 0.5);
  Tensor x = random_tensor(1, d, rng, 0.5);

  ad::Tape tape(false);
  auto s = ad::lstm_cell(tape, tape.constant(h_prev), tape.constant(c_prev), tape.constant(x), p);

  // c should be c_prev + i * g exactly up to the saturated gate
  Tensor gates = add(add(matmul(x, p.w_x.value), matmul(h_prev, p.w_h.value)), p.b.value);
  Tensor i = sigmoid(slice_cols(gates, 0, d));
  Tensor g = tanh_t(slice_cols(gates, 2 * d, d));
  Tensor expect = add(c_prev, mul(i, g));
  CHECK(tensors_close(tape.value(s.c), expect, 1e-9));
}

TEST_CASE("lstm_cell gradients against central differences") {
  const std::size_t d = 3;
  std::mt19937_64 rng(22);
  ad::LstmParams p = make_lstm_params("lstm", d, d, rng);
  Parameter h0("h0", random_tensor(1, d, rng, 0.5));
  Parameter c0("c0", random_tensor(1, d, rng, 0.5));
  Parameter x("x", random_tensor(1, d, rng, 0.5));
  Tensor rmask = random_tensor(1, d, rng);

  auto f = [&](ad::Tape& t) {
    auto s = ad::lstm_cell(t, t.leaf(h0), t.leaf(c0), t.leaf(x), p);
    ad::Var weighted = t.mul(s.h, t.constant(rmask));
    return t.sum_all(t.add(weighted, s.c));
  };
  std::vector<Parameter*> params{&p.w_x, &p.w_h, &p.b, &h0, &c0, &x};
  CHECK(grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("grad_check on closed forms") {
  std::mt19937_64 rng(31);
  Parameter w("w", random_tensor(3, 4, rng));

  // sum of squares
  auto sq = [&](ad::Tape& t) {
    ad::Var v = t.leaf(w);
    return t.sum_all(t.mul(v, v));
  };
  std::vector<Parameter*> params{&w};
  CHECK(grad_check(sq, params, 1e-5) < 1e-8);

  // constant function: analytic gradient exactly zero
  auto constant = [&](ad::Tape& t) {
    (void)t.leaf(w);
    return t.sum_all(t.constant(Tensor::scalar(7.0)));
  };
  CHECK(grad_check(constant, params, 1e-5) == 0.0);
  for (std::size_t i = 0; i < w.grad.size(); ++i) CHECK(w.grad[i] == 0.0);
}

TEST_CASE("grad_check rejects bad step") {
  std::mt19937_64 rng(32);
  Parameter w("w", random_tensor(1, 1, rng));
  std::vector<Parameter*> params{&w};
  auto f = [&](ad::Tape& t) { return t.sum_all(t.leaf(w)); };
  CHECK_THROWS_AS(grad_check(f, params, 0.0), Error);
}

TEST_CASE("every differentiable op passes grad_check on random shapes") {
  std::mt19937_64 rng(41);
  Parameter a("a", random_tensor(3, 4, rng));
  Parameter b("b", random_tensor(3, 4, rng));
  Parameter m("m", random_tensor(4, 2, rng));
  Parameter row("row", random_tensor(1, 4, rng));
  Parameter gain("gain", add_scalar(random_tensor(1, 4, rng, 0.2), 1.0));
  Parameter bias("bias", random_tensor(1, 4, rng, 0.2));
  Tensor rmask = random_tensor(3, 4, rng);
  std::vector<Parameter*> params{&a, &b, &m, &row, &gain, &bias};

  auto weighted_sum = [&](ad::Tape& t, ad::Var v, std::size_t r, std::size_t c) {
    std::mt19937_64 wrng(99);
    Tensor w(r, c);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = d(wrng);
    return t.sum_all(t.mul(v, t.constant(w)));
  };

  std::vector<std::pair<const char*, std::function<ad::Var(ad::Tape&)>>> cases;
  cases.emplace_back("matmul", [&](ad::Tape& t) {
    return weighted_sum(t, t.matmul(t.leaf(a), t.leaf(m)), 3, 2);
  });
  cases.emplace_back("transpose", [&](ad::Tape& t) {
    return weighted_sum(t, t.transpose(t.leaf(a)), 4, 3);
  });
  cases.emplace_back("add+sub+mul+scale", [&](ad::Tape& t) {
    ad::Var v = t.scale(t.mul(t.add(t.leaf(a), t.leaf(b)), t.sub(t.leaf(a), t.leaf(b))), 0.7);
    return weighted_sum(t, v, 3, 4);
  });
  cases.emplace_back("add_scalar+add_row", [&](ad::Tape& t) {
    return weighted_sum(t, t.add_row(t.add_scalar(t.leaf(a), 0.3), t.leaf(row)), 3, 4);
  });
  cases.emplace_back("sigmoid", [&](ad::Tape& t) {
    return weighted_sum(t, t.sigmoid(t.leaf(a)), 3, 4);
  });
  cases.emplace_back("tanh", [&](ad::Tape& t) {
    return weighted_sum(t, t.tanh_(t.leaf(a)), 3, 4);
  });
  cases.emplace_back("relu", [&](ad::Tape& t) {
    return weighted_sum(t, t.relu(t.leaf(a)), 3, 4);
  });
  cases.emplace_back("softmax_rows", [&](ad::Tape& t) {
    return weighted_sum(t, t.softmax_rows(t.leaf(a)), 3, 4);
  });
  cases.emplace_back("log(sigmoid)", [&](ad::Tape& t) {
    return weighted_sum(t, t.log_(t.sigmoid(t.leaf(a))), 3, 4);
  });
  cases.emplace_back("clamp", [&](ad::Tape& t) {
    // inputs are in (-1,1); clamp bounds far away so no kink sits near a sample
    return weighted_sum(t, t.clamp(t.leaf(a), -5.0, 5.0), 3, 4);
  });
  cases.emplace_back("slice+concat", [&](ad::Tape& t) {
    ad::Var v = t.leaf(a);
    ad::Var left = t.slice_cols(v, 0, 2);
    ad::Var right = t.slice_cols(v, 2, 2);
    ad::Var rows = t.concat_rows({t.slice_rows(v, 0, 1), t.slice_rows(v, 1, 2)});
    return t.add(weighted_sum(t, t.concat_cols({right, left}), 3, 4),
                 weighted_sum(t, rows, 3, 4));
  });
  cases.emplace_back("layer_norm_rows", [&](ad::Tape& t) {
    return weighted_sum(t, t.layer_norm_rows(t.leaf(a), t.leaf(gain), t.leaf(bias)), 3, 4);
  });

  for (auto& [name, f] : cases) {
    INFO("op: " << name);
    CHECK(grad_check(f, params, 1e-5) < 1e-4);
  }
}

TEST_CASE("tape refuses non-finite op outputs") {
  ad::Tape tape;
  ad::Var z = tape.constant(Tensor::of({{0.0, 1.0}}));
  CHECK_THROWS_AS(tape.log_(z), NumericError);
}

TEST_CASE("backward visits reverse order and accumulates shared leaves") {
  // y = w*w (same leaf twice) -> dy/dw = 2w
  Parameter w("w", Tensor::of({{3.0}}));
  ad::Tape tape;
  ad::Var v = tape.leaf(w);
  tape.backward(tape.sum_all(tape.mul(v, v)));
  CHECK(w.grad[0] == 6.0);
}

TEST_CASE("backward on non-recording tape is an error") {
  ad::Tape tape(false);
  ad::Var v = tape.constant(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.backward(v), Error);
}

TEST_CASE("gradient accumulator shape matches parameter shape") {
  std::mt19937_64 rng(55);
  Parameter a("a", random_tensor(2, 5, rng));
  ad::Tape tape;
  tape.backward(tape.sum_all(tape.sigmoid(tape.leaf(a))));
  CHECK(a.grad.same_shape(a.value));
}
