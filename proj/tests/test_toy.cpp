#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "otag/distance.hpp"
#include "otag/io.hpp"
#include "otag/losses.hpp"
#include "otag/rng.hpp"
#include "otag/toy.hpp"

#include "oracles.hpp"

using namespace otag;

namespace {

// Small random batch over a 2-family toy forest.
struct ToySetup {
  OntologyGraph graph;
  EvalClassMap eval_map;
  DistanceMatrix dist;
  RepresentationBatch batch;
};

ToySetup small_setup(std::uint64_t seed, int clips_per_class = 3, std::size_t dim = 6) {
  ToySetup s;
  s.graph = attach_virtual_root(make_toy_ontology(2, 1, 2));
  s.eval_map = synthetic_eval_map(s.graph);
  s.dist = distance_matrix(s.graph);
  SyntheticSpec spec;
  spec.ontology = s.graph;
  spec.clips_per_class = clips_per_class;
  spec.noise_scale = 0.5;
  spec.within_family_correlation = 0.8;
  spec.audio_dim = spec.text_dim = dim;
  s.batch = generate_synthetic(spec, seed);
  return s;
}

// Model parameters flattened into one vector and back.
std::vector<double> flatten(const ToyModel& m) {
  std::vector<double> out;
  auto push = [&](const AffineMap& f) {
    out.insert(out.end(), f.w.data().begin(), f.w.data().end());
    out.insert(out.end(), f.b.begin(), f.b.end());
  };
  push(m.p_a);
  push(m.p_t);
  push(m.c_a);
  return out;
}

ToyModel unflatten(const ToyModel& shape, const std::vector<double>& flat) {
  ToyModel m = shape;
  std::size_t pos = 0;
  auto pull = [&](AffineMap& f) {
    for (auto& v : f.w.data()) v = flat[pos++];
    for (auto& v : f.b) v = flat[pos++];
  };
  pull(m.p_a);
  pull(m.p_t);
  pull(m.c_a);
  return m;
}

// The training objective recomputed through the public ops: forward(), then
// per-clip (bce+obce)/2 + alpha*spa averaged over clips.
double objective_via_public_ops(const ToyModel& model, const RepresentationBatch& data,
                                const DistanceMatrix& dist, const EvalClassMap& eval_map,
                                double alpha) {
  LossConfig cfg;
  cfg.alpha = alpha;
  cfg.diameter = dist.diameter;
  const auto fwd = forward(model, data);
  const std::size_t M = data.clips(), K = data.classes();
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const auto w = obce_weights(dist, eval_map, data.targets.row(m));
    std::vector<double> pred(K);
    for (std::size_t c = 0; c < K; ++c) pred[c] = fwd.pred(m, c);
    std::size_t n_pos = 0;
    for (std::size_t c = 0; c < K; ++c) n_pos += data.targets(m, c);
    MatD e_t(n_pos, model.embed_dim());
    std::size_t i = 0;
    for (std::size_t c = 0; c < K; ++c) {
      if (!data.targets(m, c)) continue;
      auto src = fwd.e_text.row(c);
      std::copy(src.begin(), src.end(), e_t.row(i++).begin());
    }
    total += total_loss(pred, data.targets.row(m), w, fwd.e_audio.row(m), e_t, cfg).value;
  }
  return total / static_cast<double>(M);
}

}  // namespace

TEST_CASE("forward") {
  SUBCASE("identity projector reproduces the audio rows") {
    auto s = small_setup(5, 2, 4);
    const std::size_t U = 4, K = s.eval_map.size();
    ToyModel model = ToyModel::init(U, U, U, K, 9);
    model.p_a.w = MatD(U, U, 0.0);
    for (std::size_t i = 0; i < U; ++i) model.p_a.w(i, i) = 1.0;
    model.p_a.b.assign(U, 0.0);
    const auto fwd = forward(model, s.batch);
    CHECK(fwd.e_audio == s.batch.audio);
  }
  SUBCASE("predictions live strictly inside (0,1)") {
    auto s = small_setup(6);
    const auto model = ToyModel::init(6, 6, 4, s.eval_map.size(), 10);
    const auto fwd = forward(model, s.batch);
    for (auto p : fwd.pred.data()) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
  SUBCASE("similarities match a direct cosine computation") {
    auto s = small_setup(7);
    const auto model = ToyModel::init(6, 6, 4, s.eval_map.size(), 11);
    const auto fwd = forward(model, s.batch);
    for (std::size_t m = 0; m < s.batch.clips(); ++m) {
      std::vector<double> direct;
      for (std::size_t c = 0; c < s.batch.classes(); ++c) {
        if (!s.batch.targets(m, c)) continue;
        double dot = 0, na = 0, nt = 0;
        for (std::size_t j = 0; j < model.embed_dim(); ++j) {
          dot += fwd.e_audio(m, j) * fwd.e_text(c, j);
          na += fwd.e_audio(m, j) * fwd.e_audio(m, j);
          nt += fwd.e_text(c, j) * fwd.e_text(c, j);
        }
        direct.push_back(dot / std::sqrt(na * nt));
      }
      REQUIRE(fwd.similarities[m].size() == direct.size());
      for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(fwd.similarities[m][i] == doctest::Approx(direct[i]).epsilon(1e-12));
    }
  }
  SUBCASE("scaling the audio projector scales embeddings and keeps cosines") {
    auto s = small_setup(8);
    auto model = ToyModel::init(6, 6, 4, s.eval_map.size(), 12);
    const auto base = forward(model, s.batch);
    const double t = 3.5;
    for (auto& v : model.p_a.w.data()) v *= t;
    for (auto& v : model.p_a.b) v *= t;
    const auto scaled = forward(model, s.batch);
    for (std::size_t i = 0; i < base.e_audio.data().size(); ++i)
      CHECK(scaled.e_audio.data()[i] == doctest::Approx(t * base.e_audio.data()[i]).epsilon(1e-12));
    for (std::size_t m = 0; m < s.batch.clips(); ++m)
      for (std::size_t i = 0; i < base.similarities[m].size(); ++i)
        CHECK(scaled.similarities[m][i] ==
              doctest::Approx(base.similarities[m][i]).epsilon(1e-10));
  }
  SUBCASE("dimension mismatches throw") {
    auto s = small_setup(9);
    const auto model = ToyModel::init(5, 6, 4, s.eval_map.size(), 13);  // audio dim off by one
    CHECK_THROWS_AS(forward(model, s.batch), std::invalid_argument);
  }
}

TEST_CASE("generate_synthetic") {
  SUBCASE("same seed, same batch") {
    const auto a = small_setup(42).batch;
    const auto b = small_setup(42).batch;
    CHECK(a.audio == b.audio);
    CHECK(a.text == b.text);
    CHECK(a.targets == b.targets);
  }
  SUBCASE("different seeds differ") {
    CHECK(small_setup(1).batch.audio != small_setup(2).batch.audio);
  }
  SUBCASE("zero noise puts every clip on its class mean") {
    SyntheticSpec spec;
    spec.ontology = make_toy_ontology(2, 1, 2);
    spec.clips_per_class = 3;
    spec.noise_scale = 0.0;
    spec.audio_dim = spec.text_dim = 5;
    const auto batch = generate_synthetic(spec, 3);
    for (std::size_t m = 0; m < batch.clips(); ++m) {
      const std::size_t anchor = (m / 3) * 3;  // first clip of the class
      for (std::size_t j = 0; j < 5; ++j) CHECK(batch.audio(m, j) == batch.audio(anchor, j));
    }
  }
  SUBCASE("targets include in-eval ancestors") {
    auto s = small_setup(11);
    // Leaf classes sit below a family root (abstract, not in eval): each
    // leaf clip carries exactly its own class. With depth-2 forests the
    // mid-level class joins in; check via a deeper ontology.
    SyntheticSpec spec;
    spec.ontology = make_toy_ontology(2, 2, 2);
    spec.clips_per_class = 1;
    spec.audio_dim = spec.text_dim = 4;
    const auto map = synthetic_eval_map(spec.ontology);
    const auto batch = generate_synthetic(spec, 4);
    for (std::size_t m = 0; m < batch.clips(); ++m) {
      const auto own = batch.source_class[m];
      CHECK(batch.targets(m, own) == 1);
      const auto path = shortest_path_to_root(spec.ontology, map.entries[own].node_index);
      // every non-abstract ancestor on the path must be positive
      for (auto node : path) {
        for (const auto& e : map.entries)
          if (e.node_index == node) CHECK(batch.targets(m, e.eval_index) == 1);
      }
    }
  }
  SUBCASE("sibling class means are more alike than cross-family ones") {
    SyntheticSpec spec;
    spec.ontology = make_toy_ontology(2, 1, 3);  // 2 families, 3 leaves each
    spec.clips_per_class = 1;
    spec.noise_scale = 0.0;
    spec.audio_dim = spec.text_dim = 16;
    double sib = 0.0, cross = 0.0;
    int n_sib = 0, n_cross = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto batch = generate_synthetic(spec, seed);
      auto cos = [&](std::size_t a, std::size_t b) {
        double d = 0, na = 0, nb = 0;
        for (std::size_t j = 0; j < 16; ++j) {
          d += batch.audio(a, j) * batch.audio(b, j);
          na += batch.audio(a, j) * batch.audio(a, j);
          nb += batch.audio(b, j) * batch.audio(b, j);
        }
        return d / std::sqrt(na * nb);
      };
      // eval order: leaves of family 0 are classes 0..2, family 1 are 3..5
      for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
          sib += cos(a, b) + cos(3 + a, 3 + b);
          n_sib += 2;
        }
      for (int a = 0; a < 3; ++a)
        for (int b = 3; b < 6; ++b) {
          cross += cos(a, b);
          ++n_cross;
        }
    }
    CHECK(n_sib + n_cross >= 1000);
    CHECK(sib / n_sib > cross / n_cross);
  }
  SUBCASE("degenerate specs throw") {
    SyntheticSpec spec;
    spec.ontology = make_toy_ontology(1, 1, 2);
    spec.audio_dim = 8;
    spec.text_dim = 4;
    CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
    spec.text_dim = 8;
    spec.clips_per_class = 0;
    CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
  }
}

TEST_CASE("train") {
  auto s = small_setup(21, 4, 6);
  const auto init = ToyModel::init(6, 6, 4, s.eval_map.size(), 99);

  SUBCASE("zero learning rate leaves the model untouched") {
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.learning_rate = 0.0;
    const auto out = train(init, s.batch, s.dist, s.eval_map, cfg);
    CHECK(out.model == init);
    CHECK(out.loss_history.size() == 5);
  }
  SUBCASE("without SPA the text branch is never read or written") {
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.learning_rate = 0.5;
    cfg.alpha = 0.7;
    cfg.use_spa = false;
    const auto out = train(init, s.batch, s.dist, s.eval_map, cfg);
    CHECK(out.model.p_t == init.p_t);
    CHECK(out.model.p_a != init.p_a);
    CHECK(out.model.c_a != init.c_a);

    // Swapping the text matrix changes nothing: a plain multi-label
    // classifier remains.
    auto scrambled = s.batch;
    for (auto& v : scrambled.text.data()) v = -2.0 * v + 1.0;
    const auto out2 = train(init, scrambled, s.dist, s.eval_map, cfg);
    CHECK(out2.model == out.model);
    CHECK(out2.loss_history == out.loss_history);
  }
  SUBCASE("identical config, identical trajectory") {
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.learning_rate = 0.4;
    const auto a = train(init, s.batch, s.dist, s.eval_map, cfg);
    const auto b = train(init, s.batch, s.dist, s.eval_map, cfg);
    CHECK(a.model == b.model);
    CHECK(a.loss_history == b.loss_history);
  }
  SUBCASE("loss trends down over 200 steps") {
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.learning_rate = 0.5;
    cfg.alpha = 0.5;
    const auto out = train(init, s.batch, s.dist, s.eval_map, cfg);
    REQUIRE(out.loss_history.size() == 200);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
      head += out.loss_history[i];
      tail += out.loss_history[200 - 20 + i];
    }
    CHECK(tail < head);
    CHECK(out.loss_history.back() < out.loss_history.front());
  }
  SUBCASE("non-finite inputs abort with the step index") {
    // The probability clamp keeps plain gradient descent finite even at
    // absurd learning rates, so the abort path guards against poisoned
    // data rather than divergence.
    auto poisoned = s.batch;
    poisoned.audio(1, 2) = std::numeric_limits<double>::infinity();
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.learning_rate = 0.1;
    try {
      train(init, poisoned, s.dist, s.eval_map, cfg);
      FAIL("expected non-finite loss");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
  }
  SUBCASE("mini-batches walk the clips in order") {
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 3;
    const auto out = train(init, s.batch, s.dist, s.eval_map, cfg);
    CHECK(out.loss_history.size() == 4);
    CHECK(out.model != init);
  }
}

TEST_CASE("training gradient matches finite differences through all parameters") {
  Rng rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    auto s = small_setup(100 + trial, 2, 5);  // U=V=5
    const std::size_t D = 3, K = s.eval_map.size();
    const auto init = ToyModel::init(5, 5, D, K, 200 + trial);
    const double alpha = 0.6;

    TrainConfig cfg;
    cfg.steps = 1;
    cfg.learning_rate = 1.0;
    cfg.alpha = alpha;
    cfg.use_spa = true;
    const auto stepped = train(init, s.batch, s.dist, s.eval_map, cfg);

    // One unit-rate step turns the update into the raw gradient.
    const auto before = flatten(init);
    const auto after = flatten(stepped.model);
    std::vector<double> analytic(before.size());
    for (std::size_t i = 0; i < before.size(); ++i) analytic[i] = before[i] - after[i];

    const auto fd = oracle::finite_difference(
        [&](const std::vector<double>& flat) {
          return objective_via_public_ops(unflatten(init, flat), s.batch, s.dist, s.eval_map,
                                          alpha);
        },
        before);
    CHECK(oracle::rel_err_l2(analytic, fd) < 1e-5);
  }
}

TEST_CASE("run_experiment") {
  ExperimentConfig cfg;
  cfg.spec.ontology = make_toy_ontology(2, 1, 2);
  cfg.spec.clips_per_class = 10;
  cfg.spec.noise_scale = 0.6;
  cfg.spec.audio_dim = cfg.spec.text_dim = 8;
  cfg.embed_dim = 4;
  cfg.train.steps = 40;
  cfg.train.learning_rate = 0.5;
  cfg.train.alpha = 0.5;
  cfg.train.seed = 7;

  SUBCASE("alpha 0 makes both arms coincide, delta identically zero") {
    auto zero = cfg;
    zero.train.alpha = 0.0;
    const auto report = run_experiment(zero);
    for (const auto& [lambda, d] : report.delta) {
      (void)lambda;
      CHECK(d == 0.0);
    }
    CHECK(report.with_spa.omap == report.without_spa.omap);
  }
  SUBCASE("reports are structurally consistent") {
    const auto report = run_experiment(cfg);
    CHECK(report.with_spa.n_levels == report.without_spa.n_levels);
    CHECK(report.delta.size() == static_cast<std::size_t>(report.with_spa.n_levels));
    CHECK(report.cfg_spa.use_spa);
    CHECK_FALSE(report.cfg_baseline.use_spa);
    CHECK(report.train_clips + report.holdout_clips == 40);
    CHECK(report.holdout_clips == 8);  // 20% of 10 per class, 4 classes
    for (std::size_t i = 0; i < report.delta.size(); ++i)
      CHECK(report.delta[i].second ==
            doctest::Approx(report.with_spa.omap_by_lambda[i] -
                            report.without_spa.omap_by_lambda[i])
                .epsilon(1e-15));
  }
  SUBCASE("bitwise deterministic end to end") {
    const auto a = experiment_report_to_json(run_experiment(cfg)).dump(2);
    const auto b = experiment_report_to_json(run_experiment(cfg)).dump(2);
    CHECK(a == b);
  }
  SUBCASE("extreme holdout fractions still leave one training clip per class") {
    auto extreme = cfg;
    extreme.spec.clips_per_class = 2;
    extreme.holdout_fraction = 0.9;
    const auto report = run_experiment(extreme);
    CHECK(report.train_clips == 4);  // one per class
    CHECK(report.holdout_clips == 4);
  }
}
