#include "otag/toy.hpp"

#include "otag/losses.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

#include "otag/rng.hpp"

namespace otag {

namespace {

// out(M x P) = a(M x N) * b(N x P)
MatD matmul(const MatD& a, const MatD& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  MatD out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// out(N x P) = a^T(N x M) * b(M x P) for a(M x N)
MatD matmul_at_b(const MatD& a, const MatD& b) {
  MatD out(a.cols(), b.cols(), 0.0);
  for (std::size_t m = 0; m < a.rows(); ++m) {
    const auto arow = a.row(m);
    const auto brow = b.row(m);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double v = arow[i];
      if (v == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += v * brow[j];
    }
  }
  return out;
}

// out(M x N) = a(M x P) * b^T(P x N) for b(N x P)
MatD matmul_a_bt(const MatD& a, const MatD& b) {
  MatD out(a.rows(), b.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

MatD affine(const MatD& x, const AffineMap& f) {
  MatD out = matmul(x, f.w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += f.b[j];
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
  return dot(a, b) / (na * nb);
}

AffineMap init_affine(std::size_t in, std::size_t out, Rng& rng) {
  AffineMap f;
  f.w = MatD(in, out);
  f.b.assign(out, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : f.w.data()) v = rng.uniform(-bound, bound);
  for (auto& v : f.b) v = rng.uniform(-bound, bound);
  return f;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Nodes in parent-before-child order (BFS from the roots, ascending index
// inside each level).
std::vector<std::int32_t> topological_order(const OntologyGraph& g) {
  std::vector<std::int32_t> order;
  std::vector<char> seen(g.size(), 0);
  std::queue<std::int32_t> q;
  for (auto r : g.roots) {
    q.push(r);
    seen[r] = 1;
  }
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    order.push_back(u);
    for (auto c : g.children[u]) {
      if (!seen[c]) {
        seen[c] = 1;
        q.push(c);
      }
    }
  }
  return order;
}

void normalize_in_place(std::span<double> v) {
  const double n = norm(v);
  if (n == 0.0) return;
  for (auto& x : v) x /= n;
}

// Hierarchical unit vectors: every node blends its primary parent's vector
// with a fresh normalized gaussian, so cosine similarity decays with tree
// distance. One gaussian batch per node, drawn in topological order.
MatD hierarchical_draw(const OntologyGraph& g, std::size_t dim, double correlation, Rng& rng) {
  MatD vecs(g.size(), dim, 0.0);
  const double rho = correlation;
  const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  std::vector<double> fresh(dim);
  for (auto node : topological_order(g)) {
    for (auto& x : fresh) x = rng.normal();
    normalize_in_place(fresh);
    auto row = vecs.row(node);
    if (g.parents[node].empty()) {
      std::copy(fresh.begin(), fresh.end(), row.begin());
    } else {
      const auto parent = g.parents[node][0];
      const auto prow = vecs.row(parent);
      for (std::size_t j = 0; j < dim; ++j) row[j] = rho * prow[j] + mix * fresh[j];
      normalize_in_place(row);
    }
  }
  return vecs;
}

std::vector<std::int32_t> ancestors_of(const OntologyGraph& g, std::int32_t node) {
  std::vector<std::int32_t> out;
  std::vector<char> seen(g.size(), 0);
  std::queue<std::int32_t> q;
  q.push(node);
  seen[node] = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto p : g.parents[u]) {
      if (!seen[p]) {
        seen[p] = 1;
        out.push_back(p);
        q.push(p);
      }
    }
  }
  return out;
}

}  // namespace

ToyModel ToyModel::init(std::size_t audio_dim, std::size_t text_dim, std::size_t embed_dim,
                        std::size_t classes, std::uint64_t seed) {
  if (!audio_dim || !text_dim || !embed_dim || !classes)
    throw std::invalid_argument("ToyModel::init: all dimensions must be >= 1");
  Rng rng(seed);
  ToyModel m;
  m.p_a = init_affine(audio_dim, embed_dim, rng);
  m.p_t = init_affine(text_dim, embed_dim, rng);
  m.c_a = init_affine(embed_dim, classes, rng);
  return m;
}

ForwardResult forward(const ToyModel& model, const RepresentationBatch& batch) {
  if (batch.audio.cols() != model.audio_dim())
    throw std::invalid_argument("forward: audio dimension mismatch");
  if (batch.text.cols() != model.text_dim())
    throw std::invalid_argument("forward: text dimension mismatch");
  if (batch.targets.rows() != batch.clips() || batch.targets.cols() != model.class_count())
    throw std::invalid_argument("forward: target shape mismatch");

  ForwardResult r;
  r.e_audio = affine(batch.audio, model.p_a);
  r.e_text = affine(batch.text, model.p_t);

  MatD logits = affine(r.e_audio, model.c_a);
  r.pred = MatD(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t j = 0; j < logits.cols(); ++j) r.pred(i, j) = sigmoid(logits(i, j));

  r.similarities.resize(batch.clips());
  for (std::size_t m = 0; m < batch.clips(); ++m) {
    for (std::size_t c = 0; c < batch.classes(); ++c)
      if (batch.targets(m, c)) r.similarities[m].push_back(cosine(r.e_audio.row(m), r.e_text.row(c)));
  }
  return r;
}

TrainResult train(ToyModel model, const RepresentationBatch& data, const DistanceMatrix& dist,
                  const EvalClassMap& eval_map, const TrainConfig& cfg) {
  const std::size_t M = data.clips();
  const std::size_t K = model.class_count();
  const std::size_t D = model.embed_dim();
  if (!M) throw std::invalid_argument("train: empty batch");
  if (cfg.steps < 0) throw std::invalid_argument("train: negative step count");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("train: negative learning rate");
  if (data.targets.cols() != K) throw std::invalid_argument("train: class count mismatch");

  LossConfig loss_cfg;
  loss_cfg.alpha = cfg.use_spa ? cfg.alpha : 0.0;
  loss_cfg.diameter = dist.diameter;
  loss_cfg.validate();

  // Per-clip distance weights and positive lists are functions of the
  // targets only; build them once.
  MatD weights(M, K, 1.0);
  std::vector<std::vector<std::int32_t>> positives(M);
  for (std::size_t m = 0; m < M; ++m) {
    auto w = obce_weights(dist, eval_map, data.targets.row(m));
    std::copy(w.r.begin(), w.r.end(), weights.row(m).begin());
    for (std::size_t c = 0; c < K; ++c)
      if (data.targets(m, c)) positives[m].push_back(static_cast<std::int32_t>(c));
  }

  const std::size_t batch_size = cfg.batch_size > 0 ? std::min<std::size_t>(cfg.batch_size, M) : M;
  TrainResult result;
  result.loss_history.reserve(cfg.steps);

  const double lo = loss_cfg.epsilon, hi = 1.0 - loss_cfg.epsilon;
  std::size_t cursor = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    // Contiguous slice in clip order; wraps around. Full batch by default.
    std::vector<std::size_t> batch(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch[i] = (cursor + i) % M;
    cursor = (cursor + batch_size) % M;
    const double inv_b = 1.0 / static_cast<double>(batch_size);

    MatD e_text;
    if (cfg.use_spa) e_text = affine(data.text, model.p_t);

    // Forward on the slice.
    MatD audio(batch_size, data.audio.cols());
    for (std::size_t i = 0; i < batch_size; ++i) {
      auto src = data.audio.row(batch[i]);
      std::copy(src.begin(), src.end(), audio.row(i).begin());
    }
    MatD e_audio = affine(audio, model.p_a);
    MatD logits = affine(e_audio, model.c_a);

    double loss = 0.0;
    MatD d_logits(batch_size, K, 0.0);
    MatD d_e_audio(batch_size, D, 0.0);
    MatD d_e_text;
    if (cfg.use_spa) d_e_text = MatD(e_text.rows(), D, 0.0);

    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t m = batch[i];
      // (bce + obce)/2 over classes, exact clamp-aware gradient.
      double clip_loss = 0.0;
      for (std::size_t c = 0; c < K; ++c) {
        const double p_raw = sigmoid(logits(i, c));
        const bool clamped = p_raw < lo || p_raw > hi;
        const double p = std::clamp(p_raw, lo, hi);
        const double y = data.targets(m, c);
        const double term = y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        const double w = 0.5 * (1.0 + weights(m, c));  // (1 + r_c)/2 folds bce+obce
        clip_loss += -w * term / static_cast<double>(K);
        if (!clamped) {
          const double d_p = -w * (y / p - (1.0 - y) / (1.0 - p)) / static_cast<double>(K);
          d_logits(i, c) = d_p * p_raw * (1.0 - p_raw) * inv_b;
        }
      }

      if (cfg.use_spa && !positives[m].empty()) {
        const auto ea = e_audio.row(i);
        const double na2 = dot(ea, ea);
        const double na = std::sqrt(na2);
        if (na == 0.0) throw std::runtime_error("train: zero-norm audio embedding at step " +
                                                std::to_string(step));
        const double inv_n = 1.0 / static_cast<double>(positives[m].size());
        double cos_sum = 0.0;
        for (auto c : positives[m]) {
          const auto t = e_text.row(c);
          const double nt2 = dot(t, t);
          const double nt = std::sqrt(nt2);
          if (nt == 0.0) throw std::runtime_error("train: zero-norm text embedding at step " +
                                                  std::to_string(step));
          const double cs = dot(ea, t) / (na * nt);
          cos_sum += cs;
          const double scale = loss_cfg.alpha * inv_n * inv_b;
          for (std::size_t j = 0; j < D; ++j) {
            d_e_audio(i, j) -= scale * (t[j] / (na * nt) - cs * ea[j] / na2);
            d_e_text(c, j) -= scale * (ea[j] / (na * nt) - cs * t[j] / nt2);
          }
        }
        clip_loss += loss_cfg.alpha * (1.0 - inv_n * cos_sum);
      }
      loss += clip_loss * inv_b;
    }

    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    result.loss_history.push_back(loss);

    // Backprop into parameters.
    MatD d_e_audio_cls = matmul_a_bt(d_logits, model.c_a.w);  // d_logits * Wc^T
    for (std::size_t i = 0; i < batch_size; ++i)
      for (std::size_t j = 0; j < D; ++j) d_e_audio(i, j) += d_e_audio_cls(i, j);

    MatD d_wc = matmul_at_b(e_audio, d_logits);
    MatD d_wa = matmul_at_b(audio, d_e_audio);
    std::vector<double> d_bc(K, 0.0), d_ba(D, 0.0);
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t c = 0; c < K; ++c) d_bc[c] += d_logits(i, c);
      for (std::size_t j = 0; j < D; ++j) d_ba[j] += d_e_audio(i, j);
    }

    const double lr = cfg.learning_rate;
    for (std::size_t i = 0; i < d_wc.data().size(); ++i) model.c_a.w.data()[i] -= lr * d_wc.data()[i];
    for (std::size_t c = 0; c < K; ++c) model.c_a.b[c] -= lr * d_bc[c];
    for (std::size_t i = 0; i < d_wa.data().size(); ++i) model.p_a.w.data()[i] -= lr * d_wa.data()[i];
    for (std::size_t j = 0; j < D; ++j) model.p_a.b[j] -= lr * d_ba[j];

    if (cfg.use_spa) {
      MatD d_wt = matmul_at_b(data.text, d_e_text);
      std::vector<double> d_bt(D, 0.0);
      for (std::size_t c = 0; c < d_e_text.rows(); ++c)
        for (std::size_t j = 0; j < D; ++j) d_bt[j] += d_e_text(c, j);
      for (std::size_t i = 0; i < d_wt.data().size(); ++i)
        model.p_t.w.data()[i] -= lr * d_wt.data()[i];
      for (std::size_t j = 0; j < D; ++j) model.p_t.b[j] -= lr * d_bt[j];
    }
  }

  result.model = std::move(model);
  return result;
}

EvalClassMap synthetic_eval_map(const OntologyGraph& g) {
  std::vector<ClassListRecord> records;
  std::int32_t k = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.nodes[i].restrictions) continue;
    records.push_back({k++, g.nodes[i].id, g.nodes[i].name});
  }
  return build_eval_map(g, records);
}

RepresentationBatch generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.audio_dim != spec.text_dim)
    throw std::invalid_argument("generate_synthetic: audio and text draws share one latent space; "
                                "audio_dim must equal text_dim");
  if (spec.clips_per_class <= 0) throw std::invalid_argument("generate_synthetic: clips_per_class");
  if (spec.noise_scale < 0.0) throw std::invalid_argument("generate_synthetic: noise_scale");
  if (spec.within_family_correlation < 0.0 || spec.within_family_correlation >= 1.0)
    throw std::invalid_argument("generate_synthetic: within_family_correlation must be in [0,1)");

  const auto eval_map = synthetic_eval_map(spec.ontology);
  const std::size_t K = eval_map.size();
  if (!K) throw std::invalid_argument("generate_synthetic: ontology has no eval classes");
  const std::size_t U = spec.audio_dim;

  // Distinct deterministic streams per role.
  Rng rng_means(seed);
  Rng rng_text(seed ^ 0x9e3779b97f4a7c15ull);
  Rng rng_noise(seed ^ 0xd1b54a32d192ed03ull);

  const double rho = spec.within_family_correlation;
  MatD means = hierarchical_draw(spec.ontology, U, rho, rng_means);
  MatD text_latent = hierarchical_draw(spec.ontology, U, rho, rng_text);

  // Eval-class index of every node, -1 when not evaluated.
  std::vector<std::int32_t> eval_of(spec.ontology.size(), -1);
  for (const auto& e : eval_map.entries) eval_of[e.node_index] = e.eval_index;

  RepresentationBatch batch;
  batch.text = MatD(K, U);
  for (const auto& e : eval_map.entries) {
    auto out = batch.text.row(e.eval_index);
    const auto m = means.row(e.node_index);
    const auto h = text_latent.row(e.node_index);
    const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t j = 0; j < U; ++j) out[j] = rho * m[j] + mix * h[j];
    normalize_in_place(out);
  }

  const std::size_t M = K * static_cast<std::size_t>(spec.clips_per_class);
  batch.audio = MatD(M, U);
  batch.targets = MatU8(M, K, 0);
  batch.source_class.resize(M);
  const double noise = spec.noise_scale / std::sqrt(static_cast<double>(U));
  std::size_t row = 0;
  for (const auto& e : eval_map.entries) {
    std::vector<std::int32_t> positive_classes{e.eval_index};
    for (auto anc : ancestors_of(spec.ontology, e.node_index))
      if (eval_of[anc] >= 0) positive_classes.push_back(eval_of[anc]);
    for (int i = 0; i < spec.clips_per_class; ++i, ++row) {
      auto out = batch.audio.row(row);
      const auto m = means.row(e.node_index);
      for (std::size_t j = 0; j < U; ++j) out[j] = m[j] + noise * rng_noise.normal();
      for (auto c : positive_classes) batch.targets(row, c) = 1;
      batch.source_class[row] = e.eval_index;
    }
  }
  return batch;
}

OntologyGraph make_toy_ontology(int families, int depth, int branching) {
  if (families < 1 || depth < 0 || branching < 1)
    throw std::invalid_argument("make_toy_ontology: families >= 1, depth >= 0, branching >= 1");
  std::string json = "[";
  bool first = true;
  auto emit = [&](const std::string& id, const std::string& name,
                  const std::vector<std::string>& children, bool abstract_node) {
    if (!first) json += ",";
    first = false;
    json += "{\"id\":\"" + id + "\",\"name\":\"" + name + "\",\"child_ids\":[";
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (i) json += ",";
      json += "\"" + children[i] + "\"";
    }
    json += "]";
    if (abstract_node) json += ",\"restrictions\":[\"abstract\"]";
    json += "}";
  };

  // Breadth-first emission per family: parents precede children.
  for (int f = 0; f < families; ++f) {
    std::vector<std::string> level{"/toy/f" + std::to_string(f)};
    std::vector<std::string> level_names{"Family " + std::to_string(f)};
    for (int d = 0; d <= depth; ++d) {
      std::vector<std::string> next, next_names;
      for (std::size_t i = 0; i < level.size(); ++i) {
        std::vector<std::string> children;
        if (d < depth) {
          for (int b = 0; b < branching; ++b) {
            children.push_back(level[i] + "." + std::to_string(b));
            next.push_back(children.back());
            next_names.push_back(level_names[i] + "." + std::to_string(b));
          }
        }
        emit(level[i], level_names[i], children, d == 0);
      }
      level = std::move(next);
      level_names = std::move(next_names);
    }
  }
  json += "]";
  return parse_ontology(json);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto& g = cfg.spec.ontology;
  const auto graph = g.has_virtual_root ? g : attach_virtual_root(g);
  const auto dist = distance_matrix(graph);
  const auto eval_map = synthetic_eval_map(graph);

  auto full = generate_synthetic(cfg.spec, cfg.train.seed);
  const std::size_t M = full.clips();
  const std::size_t K = full.classes();

  if (cfg.holdout_fraction <= 0.0 || cfg.holdout_fraction >= 1.0)
    throw std::invalid_argument("run_experiment: holdout_fraction must be in (0,1)");

  // Stratified holdout: a seeded shuffle inside each generating class.
  Rng split_rng(cfg.train.seed ^ 0xa0761d6478bd642full);
  std::vector<char> in_test(M, 0);
  std::size_t c_start = 0;
  while (c_start < M) {
    std::size_t c_end = c_start;
    while (c_end < M && full.source_class[c_end] == full.source_class[c_start]) ++c_end;
    std::vector<std::size_t> idx(c_end - c_start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = c_start + i;
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[split_rng.below(i)]);
    // At least one held-out clip per class, but never the whole class.
    auto n_test = static_cast<std::size_t>(
        std::max(1.0, std::floor(cfg.holdout_fraction * static_cast<double>(idx.size()))));
    n_test = std::min(n_test, idx.size() - 1);
    for (std::size_t i = 0; i < n_test; ++i) in_test[idx[i]] = 1;
    c_start = c_end;
  }

  auto subset = [&](bool test) {
    RepresentationBatch out;
    std::vector<std::size_t> rows;
    for (std::size_t m = 0; m < M; ++m)
      if (static_cast<bool>(in_test[m]) == test) rows.push_back(m);
    out.audio = MatD(rows.size(), full.audio.cols());
    out.targets = MatU8(rows.size(), K);
    out.text = full.text;
    out.source_class.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto a = full.audio.row(rows[i]);
      std::copy(a.begin(), a.end(), out.audio.row(i).begin());
      auto t = full.targets.row(rows[i]);
      std::copy(t.begin(), t.end(), out.targets.row(i).begin());
      out.source_class[i] = full.source_class[rows[i]];
    }
    return out;
  };
  auto train_data = subset(false);
  auto test_data = subset(true);

  ExperimentReport report;
  report.cfg_spa = cfg.train;
  report.cfg_spa.use_spa = true;
  report.cfg_baseline = cfg.train;
  report.cfg_baseline.use_spa = false;
  report.train_clips = train_data.clips();
  report.holdout_clips = test_data.clips();

  const auto init = ToyModel::init(cfg.spec.audio_dim, cfg.spec.text_dim, cfg.embed_dim, K,
                                   cfg.train.seed);

  auto evaluate = [&](const TrainConfig& tc, double& final_loss) {
    auto trained = train(init, train_data, dist, eval_map, tc);
    final_loss = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();
    auto fwd = forward(trained.model, test_data);
    PredictionSet preds;
    preds.scores = MatF(test_data.clips(), K);
    preds.targets = test_data.targets;
    preds.clip_ids.reserve(test_data.clips());
    for (std::size_t m = 0; m < test_data.clips(); ++m) {
      preds.clip_ids.push_back("clip_" + std::to_string(m));
      for (std::size_t c = 0; c < K; ++c)
        preds.scores(m, c) = static_cast<float>(fwd.pred(m, c));
    }
    return omap_report(preds, dist, eval_map);
  };

  report.with_spa = evaluate(report.cfg_spa, report.final_loss_spa);
  report.without_spa = evaluate(report.cfg_baseline, report.final_loss_baseline);
  report.delta = delta_curve(report.with_spa, report.without_spa);
  return report;
}

}  // namespace otag
