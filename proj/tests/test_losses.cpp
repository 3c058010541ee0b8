#include <doctest.h>

#include <cmath>
#include <vector>

#include "otag/distance.hpp"
#include "otag/losses.hpp"
#include "otag/ontology.hpp"
#include "otag/rng.hpp"

#include "oracles.hpp"

using namespace otag;

namespace {

LossConfig plain_cfg(double alpha = 0.0) {
  LossConfig cfg;
  cfg.alpha = alpha;
  cfg.diameter = 4;
  return cfg;
}

std::vector<double> random_probs(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(0.05, 0.95);  // clear of the clamp
  return p;
}

std::vector<std::uint8_t> random_targets(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> t(n);
  for (auto& v : t) v = rng.below(2);
  return t;
}

MatD random_mat(Rng& rng, std::size_t r, std::size_t c) {
  MatD m(r, c);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("bce values") {
  const auto cfg = plain_cfg();
  SUBCASE("perfect prediction collapses to the clamp floor") {
    const std::vector<double> pred{1.0, 0.0, 1.0};
    const std::vector<std::uint8_t> target{1, 0, 1};
    CHECK(bce(pred, target, cfg).value <= 2.0 * cfg.epsilon);
    CHECK(bce(pred, target, cfg).value >= 0.0);
  }
  SUBCASE("coin-flip prediction is ln 2") {
    const std::vector<double> pred{0.5, 0.5, 0.5, 0.5};
    const std::vector<std::uint8_t> target{1, 0, 1, 0};
    CHECK(bce(pred, target, cfg).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("length mismatch throws") {
    const std::vector<double> pred{0.5};
    const std::vector<std::uint8_t> target{1, 0};
    CHECK_THROWS_AS(bce(pred, target, cfg), std::invalid_argument);
  }
}

TEST_CASE("bce gradient matches central differences") {
  Rng rng(31);
  const auto cfg = plain_cfg();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 5;
    const auto pred = random_probs(rng, K);
    const auto target = random_targets(rng, K);
    const auto got = bce(pred, target, cfg);
    const auto fd = oracle::finite_difference(
        [&](const std::vector<double>& p) { return bce(p, target, cfg).value; }, pred);
    CHECK(oracle::rel_err_l2(got.d_pred, fd) < 1e-6);
  }
}

TEST_CASE("obce_weights") {
  // chain r - a - b - c - d : diameter 4
  const auto g = parse_ontology(R"([
    {"id": "r", "name": "r", "child_ids": ["a"]},
    {"id": "a", "name": "a", "child_ids": ["b"]},
    {"id": "b", "name": "b", "child_ids": ["c"]},
    {"id": "c", "name": "c", "child_ids": ["d"]},
    {"id": "d", "name": "d", "child_ids": []}
  ])");
  const auto map = build_eval_map(
      g, {{0, "r", "r"}, {1, "a", "a"}, {2, "b", "b"}, {3, "c", "c"}, {4, "d", "d"}});
  const auto dist = distance_matrix(g);
  REQUIRE(dist.diameter == 4);

  SUBCASE("positives get weight 1, negatives get min distance over N") {
    const std::vector<std::uint8_t> target{1, 0, 0, 0, 0};
    const auto w = obce_weights(dist, map, target);
    CHECK(w.r == std::vector<double>{1.0, 0.25, 0.5, 0.75, 1.0});
  }
  SUBCASE("minimum over several positives, hand enumerated") {
    const std::vector<std::uint8_t> target{1, 0, 0, 0, 1};
    const auto w = obce_weights(dist, map, target);
    // r: pos; a: min(1, 3)=1 -> 0.25; b: min(2,2) -> 0.5; c: min(3,1) -> 0.25; d: pos
    CHECK(w.r == std::vector<double>{1.0, 0.25, 0.5, 0.25, 1.0});
  }
  SUBCASE("all-zero target throws") {
    const std::vector<std::uint8_t> target{0, 0, 0, 0, 0};
    CHECK_THROWS_AS(obce_weights(dist, map, target), std::invalid_argument);
  }
  SUBCASE("unreachable classes weigh like the farthest") {
    const auto g2 = parse_ontology(R"([
      {"id": "x", "name": "x", "child_ids": ["y"]},
      {"id": "y", "name": "y", "child_ids": []},
      {"id": "z", "name": "z", "child_ids": []}
    ])");
    const auto map2 = build_eval_map(g2, {{0, "x", "x"}, {1, "y", "y"}, {2, "z", "z"}});
    const auto dist2 = distance_matrix(g2);  // z disconnected, diameter 1
    const std::vector<std::uint8_t> target{1, 0, 0};
    const auto w = obce_weights(dist2, map2, target);
    CHECK(w.r[2] == 1.0);
  }
}

TEST_CASE("obce") {
  Rng rng(32);
  const auto cfg = plain_cfg();
  SUBCASE("all-ones weights reduce to bce exactly") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t K = 1 + rng.below(8);
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      ClassWeights ones;
      ones.r.assign(K, 1.0);
      CHECK(obce(pred, target, ones, cfg).value == bce(pred, target, cfg).value);
    }
  }
  SUBCASE("value is linear in the weights") {
    const std::vector<double> pred{0.3, 0.7, 0.2, 0.9};
    const std::vector<std::uint8_t> target{1, 0, 0, 1};
    ClassWeights w;
    w.r = {1.0, 0.8, 0.6, 1.0};
    ClassWeights halved = w;
    halved.r[1] *= 0.5;
    ClassWeights only1;
    only1.r = {0.0, w.r[1], 0.0, 0.0};
    const double contribution = obce(pred, target, only1, cfg).value;
    CHECK(obce(pred, target, halved, cfg).value ==
          doctest::Approx(obce(pred, target, w, cfg).value - 0.5 * contribution).epsilon(1e-15));
  }
  SUBCASE("uniform weights scale the bce value") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t K = 1 + rng.below(8);
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      const double scale = rng.uniform(0.1, 1.0);
      ClassWeights w;
      w.r.assign(K, scale);
      CHECK(obce(pred, target, w, cfg).value ==
            doctest::Approx(scale * bce(pred, target, cfg).value).epsilon(1e-14));
    }
  }
  SUBCASE("gradient matches central differences") {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t K = 5;
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      ClassWeights w;
      w.r.resize(K);
      for (auto& v : w.r) v = rng.uniform(0.05, 1.0);
      const auto got = obce(pred, target, w, cfg);
      const auto fd = oracle::finite_difference(
          [&](const std::vector<double>& p) { return obce(p, target, w, cfg).value; }, pred);
      CHECK(oracle::rel_err_l2(got.d_pred, fd) < 1e-6);
    }
  }
}

TEST_CASE("spa_loss values") {
  const auto cfg = plain_cfg();
  SUBCASE("parallel rows score 0") {
    const std::vector<double> audio{1.0, 2.0, -1.0};
    MatD text(2, 3);
    for (std::size_t j = 0; j < 3; ++j) {
      text(0, j) = 2.5 * audio[j];
      text(1, j) = 0.3 * audio[j];
    }
    CHECK(spa_loss(audio, text, cfg).value == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("orthogonal rows score 1, antiparallel rows score 2") {
    const std::vector<double> audio{1.0, 0.0};
    MatD orth(1, 2);
    orth(0, 0) = 0.0;
    orth(0, 1) = 3.0;
    CHECK(spa_loss(audio, orth, cfg).value == doctest::Approx(1.0).epsilon(1e-14));
    MatD anti(2, 2);
    anti(0, 0) = -2.0;
    anti(0, 1) = 0.0;
    anti(1, 0) = -0.5;
    anti(1, 1) = 0.0;
    CHECK(spa_loss(audio, anti, cfg).value == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("zero-norm inputs throw") {
    const std::vector<double> zero{0.0, 0.0};
    MatD text(1, 2, 1.0);
    CHECK_THROWS_AS(spa_loss(zero, text, cfg), std::invalid_argument);
    const std::vector<double> audio{1.0, 0.5};
    MatD zrow(1, 2, 0.0);
    CHECK_THROWS_AS(spa_loss(audio, zrow, cfg), std::invalid_argument);
  }
  SUBCASE("range stays inside [0, 2] on 1000 random instances") {
    Rng rng(33);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t D = 2 + rng.below(8);
      const std::size_t N = 1 + rng.below(4);
      std::vector<double> audio(D);
      for (auto& v : audio) v = rng.normal();
      const auto text = random_mat(rng, N, D);
      const double v = spa_loss(audio, text, cfg).value;
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
  SUBCASE("positive rescaling moves the value by less than 1e-10") {
    Rng rng(34);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t D = 2 + rng.below(8);
      const std::size_t N = 1 + rng.below(4);
      std::vector<double> audio(D);
      for (auto& v : audio) v = rng.normal();
      auto text = random_mat(rng, N, D);
      const double base = spa_loss(audio, text, cfg).value;

      auto scaled_audio = audio;
      const double s1 = std::exp(rng.uniform(-6.0, 6.0));
      for (auto& v : scaled_audio) v *= s1;
      CHECK(std::abs(spa_loss(scaled_audio, text, cfg).value - base) < 1e-10);

      const double s2 = std::exp(rng.uniform(-6.0, 6.0));
      const std::size_t row = rng.below(N);
      for (std::size_t j = 0; j < D; ++j) text(row, j) *= s2;
      CHECK(std::abs(spa_loss(audio, text, cfg).value - base) < 1e-10);
    }
  }
}

TEST_CASE("spa_loss gradients match central differences") {
  Rng rng(35);
  const auto cfg = plain_cfg();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t D = 8, N = 3;
    std::vector<double> audio(D);
    for (auto& v : audio) v = rng.normal();
    const auto text = random_mat(rng, N, D);
    const auto got = spa_loss(audio, text, cfg);

    const auto fd_audio = oracle::finite_difference(
        [&](const std::vector<double>& a) { return spa_loss(a, text, cfg).value; }, audio);
    CHECK(oracle::rel_err_l2(got.d_audio, fd_audio) < 1e-6);

    const auto fd_text = oracle::finite_difference(
        [&](const std::vector<double>& flat) {
          const auto m = MatD::from_rows(N, D, flat);
          return spa_loss(audio, m, cfg).value;
        },
        text.data());
    CHECK(oracle::rel_err_l2(got.d_text.data(), fd_text) < 1e-6);
  }
}

TEST_CASE("total_loss") {
  Rng rng(36);
  SUBCASE("alpha 0 collapses to the classification mean") {
    const auto cfg = plain_cfg(0.0);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t K = 4, D = 6, N = 2;
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      ClassWeights w;
      w.r.resize(K);
      for (auto& v : w.r) v = rng.uniform(0.1, 1.0);
      std::vector<double> audio(D);
      for (auto& v : audio) v = rng.normal();
      const auto text = random_mat(rng, N, D);

      const auto total = total_loss(pred, target, w, audio, text, cfg);
      const auto b = bce(pred, target, cfg);
      const auto o = obce(pred, target, w, cfg);
      CHECK(total.value == 0.5 * (b.value + o.value));
      for (std::size_t j = 0; j < D; ++j) CHECK(total.d_audio[j] == 0.0);

      ClassWeights ones;
      ones.r.assign(K, 1.0);
      CHECK(total_loss(pred, target, ones, audio, text, cfg).value == b.value);
    }
  }
  SUBCASE("value recomposes from independently computed parts") {
    const auto cfg = plain_cfg(0.7);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t K = 5, D = 6, N = 3;
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      ClassWeights w;
      w.r.resize(K);
      for (auto& v : w.r) v = rng.uniform(0.1, 1.0);
      std::vector<double> audio(D);
      for (auto& v : audio) v = rng.normal();
      const auto text = random_mat(rng, N, D);

      const auto total = total_loss(pred, target, w, audio, text, cfg);
      const double recomposed = 0.5 * (bce(pred, target, cfg).value +
                                       obce(pred, target, w, cfg).value) +
                                cfg.alpha * spa_loss(audio, text, cfg).value;
      CHECK(total.value == doctest::Approx(recomposed).epsilon(1e-12));

      // gradients are the same linear combination, elementwise
      const auto b = bce(pred, target, cfg);
      const auto o = obce(pred, target, w, cfg);
      const auto s = spa_loss(audio, text, cfg);
      for (std::size_t c = 0; c < K; ++c)
        CHECK(total.d_pred[c] == 0.5 * (b.d_pred[c] + o.d_pred[c]));
      for (std::size_t j = 0; j < D; ++j)
        CHECK(total.d_audio[j] == cfg.alpha * s.d_audio[j]);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < D; ++j)
          CHECK(total.d_text(i, j) == cfg.alpha * s.d_text(i, j));
    }
  }
  SUBCASE("all gradients match central differences") {
    const auto cfg = plain_cfg(0.7);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t K = 4, D = 5, N = 2;
      const auto pred = random_probs(rng, K);
      const auto target = random_targets(rng, K);
      ClassWeights w;
      w.r.resize(K);
      for (auto& v : w.r) v = rng.uniform(0.1, 1.0);
      std::vector<double> audio(D);
      for (auto& v : audio) v = rng.normal();
      const auto text = random_mat(rng, N, D);
      const auto got = total_loss(pred, target, w, audio, text, cfg);

      const auto fd_pred = oracle::finite_difference(
          [&](const std::vector<double>& p) {
            return total_loss(p, target, w, audio, text, cfg).value;
          },
          pred);
      CHECK(oracle::rel_err_l2(got.d_pred, fd_pred) < 1e-5);

      const auto fd_audio = oracle::finite_difference(
          [&](const std::vector<double>& a) {
            return total_loss(pred, target, w, a, text, cfg).value;
          },
          audio);
      CHECK(oracle::rel_err_l2(got.d_audio, fd_audio) < 1e-5);

      const auto fd_text = oracle::finite_difference(
          [&](const std::vector<double>& flat) {
            return total_loss(pred, target, w, audio, MatD::from_rows(N, D, flat), cfg).value;
          },
          text.data());
      CHECK(oracle::rel_err_l2(got.d_text.data(), fd_text) < 1e-5);
    }
  }
}

TEST_CASE("batch_losses") {
  Rng rng(37);
  const auto g = parse_ontology(R"([
    {"id": "r", "name": "r", "child_ids": ["a", "b"]},
    {"id": "a", "name": "a", "child_ids": []},
    {"id": "b", "name": "b", "child_ids": []}
  ])");
  const auto map = build_eval_map(g, {{0, "r", "r"}, {1, "a", "a"}, {2, "b", "b"}});
  const auto dist = distance_matrix(g);
  const std::size_t M = 17, K = 3, D = 4;

  MatD pred(M, K), audio(M, D), text(K, D);
  MatU8 targets(M, K, 0);
  for (auto& v : pred.data()) v = rng.uniform(0.05, 0.95);
  for (auto& v : audio.data()) v = rng.normal();
  for (auto& v : text.data()) v = rng.normal();
  for (std::size_t m = 0; m < M; ++m) targets(m, rng.below(K)) = 1;

  LossConfig cfg;
  cfg.alpha = 0.4;
  cfg.diameter = dist.diameter;

  SUBCASE("summary equals the mean of per-clip losses") {
    const auto s = batch_losses(pred, targets, dist, map, audio, text, cfg);
    double want_bce = 0.0, want_spa = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      want_bce += bce(pred.row(m), targets.row(m), cfg).value;
      MatD e_t(1, D);
      for (std::size_t c = 0; c < K; ++c)
        if (targets(m, c))
          for (std::size_t j = 0; j < D; ++j) e_t(0, j) = text(c, j);
      want_spa += spa_loss(audio.row(m), e_t, cfg).value;
    }
    CHECK(s.bce == doctest::Approx(want_bce / M).epsilon(1e-14));
    CHECK(s.spa == doctest::Approx(want_spa / M).epsilon(1e-14));
    CHECK(s.total == doctest::Approx(0.5 * (s.bce + s.obce) + cfg.alpha * s.spa).epsilon(1e-14));
    CHECK(s.clips == M);
  }
  SUBCASE("parallel kernel is bitwise identical to serial") {
    MatD out_s(M, 3, 0.0), out_p(M, 3, 0.0);
    kernel::clip_losses_serial(pred, targets, dist, map, audio, text, cfg, out_s);
    kernel::clip_losses_parallel(pred, targets, dist, map, audio, text, cfg, out_p);
    CHECK(out_s == out_p);
  }
}
