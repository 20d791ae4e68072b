#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "common/error.hpp"
#include "losses/losses.hpp"
#include "model/model.hpp"

using namespace diar;

namespace {

Tensor random_probs(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.02, 0.98);
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

Tensor random_binary(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 1);
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(d(rng));
  return t;
}

// independent scalar reference, own clamp and logs
double own_bce(double y, double p) {
  const double q = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -y * std::log(q) - (1.0 - y) * std::log(1.0 - q);
}

Tensor row_stochastic(std::size_t T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.01, 1.0);
  Tensor w(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      w.at(i, j) = d(rng);
      sum += w.at(i, j);
    }
    for (std::size_t j = 0; j < T; ++j) w.at(i, j) /= sum;
  }
  return w;
}

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.input_dim = 10;
  cfg.n_speakers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("bce closed forms") {
  CHECK(bce(1.0, 1.0 - 1e-7) == doctest::Approx(1e-7).epsilon(0.01));
  CHECK(bce(0.0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce(1.0, 0.25) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(bce(1.0, 2.0) == doctest::Approx(1e-7).epsilon(0.01));  // clamp
  CHECK(bce(0.0, 0.5) > 0.0);
}

TEST_CASE("bce_sum matches the scalar loop and backward runs") {
  std::mt19937_64 rng(4);
  Tensor y = random_binary(3, 4, rng);
  Tensor p = random_probs(3, 4, rng);
  double want = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) want += own_bce(y[i], p[i]);

  ad::Tape tape;
  ad::Var loss = bce_sum(tape, y, tape.constant(p));
  CHECK(tape.value(loss).at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("pit prefers the identity on matched predictions") {
  Tensor y_true = Tensor::of({{1, 0}, {0, 1}});
  Tensor y_pred = Tensor::of({{1.0 - 1e-7, 1e-7}, {1e-7, 1.0 - 1e-7}});
  auto [loss, phi] = pit_diar_loss_value(y_true, y_pred);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(loss < 1e-6);
  CHECK(phi == std::vector<std::size_t>{0, 1});
}

TEST_CASE("pit recovers a swapped permutation") {
  Tensor y_true = Tensor::of({{1, 0}, {0, 1}});
  Tensor y_pred = Tensor::of({{1e-7, 1.0 - 1e-7}, {1.0 - 1e-7, 1e-7}});
  auto [loss, phi] = pit_diar_loss_value(y_true, y_pred);
  CHECK(loss < 1e-6);
  CHECK(phi == std::vector<std::size_t>{1, 0});
}

TEST_CASE("pit equals a brute force oracle on random instances") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor y_true = random_binary(2, 4, rng);
    Tensor y_pred = random_probs(2, 4, rng);

    // oracle: both permutations, scalar loops
    double c_id = 0.0, c_sw = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
      c_id += own_bce(y_true.at(0, t), y_pred.at(0, t)) + own_bce(y_true.at(1, t), y_pred.at(1, t));
      c_sw += own_bce(y_true.at(1, t), y_pred.at(0, t)) + own_bce(y_true.at(0, t), y_pred.at(1, t));
    }
    const double want = std::min(c_id, c_sw) / 8.0;

    auto [loss, phi] = pit_diar_loss_value(y_true, y_pred);
    CHECK(loss == doctest::Approx(want).epsilon(1e-10));

    ad::Tape tape;
    auto [var, phi2] = pit_diar_loss(tape, y_true, tape.constant(y_pred));
    CHECK(tape.value(var).at(0, 0) == loss);
    CHECK(phi2 == phi);
  }
}

TEST_CASE("pit is exactly invariant to reference row permutations") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor y_true = random_binary(2, 6, rng);
    Tensor y_pred = random_probs(2, 6, rng);
    Tensor swapped(2, 6);
    for (std::size_t t = 0; t < 6; ++t) {
      swapped.at(0, t) = y_true.at(1, t);
      swapped.at(1, t) = y_true.at(0, t);
    }
    auto [a, phi_a] = pit_diar_loss_value(y_true, y_pred);
    auto [b, phi_b] = pit_diar_loss_value(swapped, y_pred);
    CHECK(a == b);  // bit for bit
    for (std::size_t c = 0; c < 2; ++c) CHECK(phi_b[c] == 1 - phi_a[c]);
  }
}

TEST_CASE("pit rejects shape mismatches") {
  CHECK_THROWS_AS(pit_diar_loss_value(Tensor::zeros(2, 3), Tensor::zeros(2, 4)), DimensionError);
}

TEST_CASE("target mask is the outer product") {
  Tensor m = target_mask(Tensor::of({{1, 0, 1}}));
  Tensor want = Tensor::of({{1, 0, 1}, {0, 0, 0}, {1, 0, 1}});
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == want[i]);

  Tensor z = target_mask(Tensor::zeros(1, 3));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

  Tensor o = target_mask(Tensor::ones(1, 3));
  for (std::size_t i = 0; i < o.size(); ++i) CHECK(o[i] == 1.0);

  CHECK_THROWS_AS(target_mask(Tensor::of({{0.5, 1.0}})), DataError);
}

TEST_CASE("target mask is symmetric and idempotent under squaring") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m = target_mask(random_binary(1, 7, rng));
    for (std::size_t i = 0; i < 7; ++i) {
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(m.at(i, j) == m.at(j, i));
        CHECK(m.at(i, j) * m.at(i, j) == m.at(i, j));
      }
    }
  }
}

TEST_CASE("trace selection picks identity like heads") {
  const std::size_t T = 5;
  Tensor ident(T, T);
  for (std::size_t i = 0; i < T; ++i) ident.at(i, i) = 1.0;
  Tensor uniform(T, T);
  uniform.fill(1.0 / T);
  auto sel = select_heads_by_trace({uniform, ident}, 1);
  REQUIRE(sel.size() == 1);
  CHECK(sel[0].first == 1);
  CHECK(sel[0].second == doctest::Approx(static_cast<double>(T)).epsilon(1e-12));

  auto tie = select_heads_by_trace({uniform, uniform, uniform}, 2);
  CHECK(tie[0].first == 0);
  CHECK(tie[1].first == 1);

  CHECK_THROWS_AS(select_heads_by_trace({uniform}, 2), ConfigError);
}

TEST_CASE("trace selection matches an independent sort oracle") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> heads;
    for (int h = 0; h < 4; ++h) heads.push_back(row_stochastic(6, rng));

    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t h = 0; h < 4; ++h) {
      double tr = 0.0;
      for (std::size_t i = 0; i < 6; ++i) tr += heads[h].at(i, i);
      oracle.emplace_back(-tr, h);
    }
    std::sort(oracle.begin(), oracle.end());

    auto sel = select_heads_by_trace(heads, 2);
    CHECK(sel[0].first == oracle[0].second);
    CHECK(sel[1].first == oracle[1].second);
    CHECK(sel[0].second == doctest::Approx(-oracle[0].first).epsilon(1e-12));
  }
}

TEST_CASE("trace selection ignores presentation order up to ties") {
  std::mt19937_64 rng(14);
  std::vector<Tensor> heads;
  for (int h = 0; h < 4; ++h) heads.push_back(row_stochastic(5, rng));
  auto sel = select_heads_by_trace(heads, 2);
  std::vector<Tensor> reversed(heads.rbegin(), heads.rend());
  auto sel_r = select_heads_by_trace(reversed, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(sel[i].second == sel_r[i].second);
    CHECK(sel[i].first == 3 - sel_r[i].first);
  }
}

TEST_CASE("vad loss vanishes when attention equals the mask") {
  Tensor mask = target_mask(Tensor::of({{1, 0, 1, 1}}));
  ad::Tape tape;
  ad::Var w = tape.constant(mask);
  ad::Var loss = vad_aux_loss(tape, {mask}, {w});
  CHECK(tape.value(loss).at(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(tape.value(loss).at(0, 0) < 1e-5);
}

TEST_CASE("vad loss closed form for a zero mask against uniform attention") {
  const std::size_t T = 4;
  Tensor mask = Tensor::zeros(T, T);
  Tensor uniform(T, T);
  uniform.fill(0.25);
  ad::Tape tape;
  ad::Var loss = vad_aux_loss(tape, {mask}, {tape.constant(uniform)});
  CHECK(tape.value(loss).at(0, 0) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("vad loss assignment undoes a mask swap") {
  std::mt19937_64 rng(15);
  Tensor m0 = target_mask(Tensor::of({{1, 1, 0, 0}}));
  Tensor m1 = target_mask(Tensor::of({{0, 0, 1, 1}}));
  // attention close to each mask, blended toward uniform
  auto soften = [](const Tensor& m) {
    Tensor w(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) w[i] = 0.8 * m[i] + 0.05;
    return w;
  };
  ad::Tape t1;
  const double matched =
      t1.value(vad_aux_loss(t1, {m0, m1}, {t1.constant(soften(m0)), t1.constant(soften(m1))}))
          .at(0, 0);
  ad::Tape t2;
  const double swapped =
      t2.value(vad_aux_loss(t2, {m1, m0}, {t2.constant(soften(m0)), t2.constant(soften(m1))}))
          .at(0, 0);
  CHECK(matched == swapped);

  // oracle: enumerate both assignments by hand
  auto pair_cost = [&](const Tensor& m, const Tensor& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += own_bce(m[i], w[i]);
    return acc / 16.0;
  };
  const double direct = pair_cost(m0, soften(m0)) + pair_cost(m1, soften(m1));
  const double crossed = pair_cost(m1, soften(m0)) + pair_cost(m0, soften(m1));
  CHECK(matched == doctest::Approx(std::min(direct, crossed)).epsilon(1e-12));

  CHECK_THROWS_AS(vad_aux_loss(t1, {m0, m1}, {t1.constant(soften(m0))}), DimensionError);
}

TEST_CASE("existence loss follows its closed forms") {
  ad::Tape tape;
  ad::Var sat = tape.constant(Tensor::of({{20.0}, {20.0}, {-20.0}}));
  CHECK(tape.value(existence_loss(tape, sat, 2)).at(0, 0) < 1e-6);

  ad::Var zero = tape.constant(Tensor::zeros(3, 1));
  CHECK(tape.value(existence_loss(tape, zero, 2)).at(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // labels are [1, 1, 0]: a confident wrong third logit is punished
  ad::Var bad = tape.constant(Tensor::of({{20.0}, {20.0}, {20.0}}));
  CHECK(tape.value(existence_loss(tape, bad, 2)).at(0, 0) > 1.0);
}

TEST_CASE("total loss arithmetic") {
  LossBreakdown a = total_loss(1.0, 2.0, 3.0, 0.0, 0.0);
  CHECK(a.total == a.diar);
  LossBreakdown b = total_loss(1.0, 2.0, 3.0, 0.5, 1.0);
  CHECK(b.total == 5.0);
  LossBreakdown c = total_loss(1.25, 2.5, 0.75, 0.008, 1.0);
  CHECK(c.total == (1.25 + 0.008 * 2.5) + 1.0 * 0.75);
  CHECK_THROWS_AS(total_loss(1, 1, 1, -0.1, 1), ConfigError);
}

TEST_CASE("chunk loss breakdown is self consistent") {
  Model m = Model::init(tiny_cfg(), 50);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor x(6, 10);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  Tensor labels = random_binary(2, 6, rng);

  LossConfig cfg;
  cfg.alpha = 0.008;
  cfg.beta = 1.0;
  ad::Tape tape;
  ChunkLoss loss = chunk_loss(tape, m, x, labels, cfg);
  const LossBreakdown& b = loss.breakdown;
  CHECK(b.total == (b.diar + cfg.alpha * b.vad) + cfg.beta * b.exist);
  CHECK(b.selected_heads.size() == 2);
  CHECK(b.best_perm.size() == 2);
  CHECK(b.diar > 0.0);
  CHECK(b.vad > 0.0);
  CHECK(b.exist > 0.0);
  tape.backward(loss.total);  // just must not throw
}

TEST_CASE("alpha zero reproduces baseline gradients bit for bit") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor x(5, 10);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  Tensor labels = random_binary(2, 5, rng);

  Model m1 = Model::init(tiny_cfg(), 51);
  Model m2 = Model::init(tiny_cfg(), 51);

  // baseline objective assembled by hand: pit + beta * existence
  {
    ad::Tape tape;
    ForwardOut fw = forward(tape, m1, x, false);
    auto [diar_var, phi] = pit_diar_loss(tape, labels, fw.posteriors);
    ad::Var total =
        tape.add(diar_var, tape.scale(existence_loss(tape, fw.attractors.exist_logits, 2), 1.0));
    for (Parameter* p : m1.parameters()) p->zero_grad();
    tape.backward(total);
  }
  {
    LossConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta = 1.0;
    ad::Tape tape;
    ChunkLoss loss = chunk_loss(tape, m2, x, labels, cfg);
    CHECK(loss.breakdown.vad == 0.0);
    CHECK(loss.breakdown.selected_heads.empty());
    for (Parameter* p : m2.parameters()) p->zero_grad();
    tape.backward(loss.total);
  }
  auto pa = m1.parameters();
  auto pb = m2.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i]->grad.size(); ++j) {
      CHECK(pa[i]->grad[j] == pb[i]->grad[j]);
    }
  }
}

TEST_CASE("full objective survives a gradient check") {
  Model m = Model::init(tiny_cfg(), 52);
  std::mt19937_64 rng(18);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor x(4, 10);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  Tensor labels = random_binary(2, 4, rng);
  LossConfig cfg;
  cfg.alpha = 0.008;
  cfg.beta = 1.0;
  auto f = [&](ad::Tape& tape) { return chunk_loss(tape, m, x, labels, cfg).total; };
  CHECK(grad_check(f, m.parameters(), 1e-5) < 1e-4);
}
