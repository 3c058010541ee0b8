#include "otag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "otag/errors.hpp"
#include "otag/parallel.hpp"

namespace otag {

void PredictionSet::validate() const {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols())
    throw UserError("prediction set: scores and targets shapes differ");
  if (!clip_ids.empty() && clip_ids.size() != scores.rows())
    throw UserError("prediction set: clip id count != row count");
  for (auto t : targets.data())
    if (t > 1) throw UserError("prediction set: targets must be 0/1");
  for (auto s : scores.data())
    if (!std::isfinite(s)) throw UserError("prediction set: non-finite score");
}

namespace {

// Clip order for one class: descending score, ties by ascending index.
std::vector<std::int32_t> ranking_order(const MatF& scores, std::size_t cls) {
  std::vector<std::int32_t> order(scores.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    float sa = scores(a, cls), sb = scores(b, cls);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

// AP over a pre-sorted ranking; Masked filters clips out entirely.
template <typename Masked>
double ap_over_order(const std::vector<std::int32_t>& order, const MatU8& targets,
                     std::size_t cls, Masked masked, std::size_t n_positives) {
  double sum = 0.0;
  std::size_t hits = 0, rank = 0;
  for (auto m : order) {
    if (masked(m)) continue;
    ++rank;
    if (targets(m, cls)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(n_positives);
}

std::size_t count_positives(const MatU8& targets, std::size_t cls) {
  std::size_t n = 0;
  for (std::size_t m = 0; m < targets.rows(); ++m) n += targets(m, cls);
  return n;
}

void omap_one_class(const PredictionSet& preds, const MatU8& mind, int n_levels,
                    std::size_t cls, MatD& ap, std::vector<std::uint8_t>& has_pos) {
  const std::size_t n_pos = count_positives(preds.targets, cls);
  has_pos[cls] = n_pos > 0;
  if (!n_pos) return;
  const auto order = ranking_order(preds.scores, cls);
  for (int lambda = 0; lambda < n_levels; ++lambda) {
    ap(cls, lambda) = ap_over_order(
        order, preds.targets, cls,
        [&](std::int32_t m) { return !preds.targets(m, cls) && mind(m, cls) <= lambda; },
        n_pos);
  }
}

}  // namespace

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> targets,
                         std::span<const std::uint8_t> mask) {
  if (scores.size() != targets.size())
    throw std::invalid_argument("average_precision: length mismatch");
  if (!mask.empty() && mask.size() != scores.size())
    throw std::invalid_argument("average_precision: mask length mismatch");

  std::vector<std::int32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  double sum = 0.0;
  std::size_t hits = 0, rank = 0;
  for (auto i : order) {
    if (!mask.empty() && mask[i]) continue;
    ++rank;
    if (targets[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  if (!hits) throw std::invalid_argument("average_precision: no unmasked positive");
  return sum / static_cast<double>(hits);
}

double mean_average_precision(const PredictionSet& preds) {
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < preds.classes(); ++c) {
    const std::size_t n_pos = count_positives(preds.targets, c);
    if (!n_pos) continue;
    const auto order = ranking_order(preds.scores, c);
    sum += ap_over_order(order, preds.targets, c, [](std::int32_t) { return false; }, n_pos);
    ++evaluated;
  }
  if (!evaluated) throw std::invalid_argument("mean_average_precision: no class has a positive");
  return sum / static_cast<double>(evaluated);
}

MatU8 min_distance_to_positives(const PredictionSet& preds, const DistanceMatrix& dist,
                                const EvalClassMap& eval_map) {
  const std::size_t M = preds.clips(), K = preds.classes();
  if (eval_map.size() != K)
    throw UserError("min_distance_to_positives: eval map size != class count");
  MatU8 mind(M, K, DistanceMatrix::kInf);
  std::vector<std::int32_t> node_of(K);
  for (std::size_t c = 0; c < K; ++c) node_of[c] = eval_map.entries[c].node_index;

  for (std::size_t m = 0; m < M; ++m) {
    std::vector<std::int32_t> pos_nodes;
    for (std::size_t c = 0; c < K; ++c)
      if (preds.targets(m, c)) pos_nodes.push_back(node_of[c]);
    if (pos_nodes.empty()) continue;  // unlabeled clip: pure negative, never masked
    for (std::size_t c = 0; c < K; ++c) {
      std::uint8_t best = DistanceMatrix::kInf;
      for (auto p : pos_nodes) best = std::min(best, dist.d(node_of[c], p));
      mind(m, c) = best;
    }
  }
  return mind;
}

namespace kernel {

void omap_per_class_serial(const PredictionSet& preds, const MatU8& mind, int n_levels,
                           MatD& ap, std::vector<std::uint8_t>& has_pos) {
  for (std::size_t c = 0; c < preds.classes(); ++c)
    omap_one_class(preds, mind, n_levels, c, ap, has_pos);
}

void omap_per_class_parallel(const PredictionSet& preds, const MatU8& mind, int n_levels,
                             MatD& ap, std::vector<std::uint8_t>& has_pos) {
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long c = 0; c < static_cast<long>(preds.classes()); ++c)
    omap_one_class(preds, mind, n_levels, static_cast<std::size_t>(c), ap, has_pos);
}

}  // namespace kernel

double omap_at_lambda(const PredictionSet& preds, const DistanceMatrix& dist,
                      const EvalClassMap& eval_map, int lambda) {
  if (lambda < 0 || lambda >= DistanceMatrix::kInf)
    throw std::invalid_argument("omap_at_lambda: lambda out of range");
  const auto mind = min_distance_to_positives(preds, dist, eval_map);
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < preds.classes(); ++c) {
    const std::size_t n_pos = count_positives(preds.targets, c);
    if (!n_pos) continue;
    const auto order = ranking_order(preds.scores, c);
    sum += ap_over_order(
        order, preds.targets, c,
        [&](std::int32_t m) { return !preds.targets(m, c) && mind(m, c) <= lambda; }, n_pos);
    ++evaluated;
  }
  if (!evaluated) throw std::invalid_argument("omap_at_lambda: no class has a positive");
  return sum / static_cast<double>(evaluated);
}

OmapReport omap_report(const PredictionSet& preds, const DistanceMatrix& dist,
                       const EvalClassMap& eval_map) {
  const int n_levels = dist.diameter;
  if (n_levels <= 0)
    throw UserError("omap_report: graph diameter is 0, no lambda levels to sweep");
  const auto mind = min_distance_to_positives(preds, dist, eval_map);
  const std::size_t K = preds.classes();

  MatD ap(K, n_levels, 0.0);
  std::vector<std::uint8_t> has_pos(K, 0);
#ifdef _OPENMP
  kernel::omap_per_class_parallel(preds, mind, n_levels, ap, has_pos);
#else
  kernel::omap_per_class_serial(preds, mind, n_levels, ap, has_pos);
#endif

  OmapReport report;
  report.n_levels = n_levels;
  report.classes_evaluated = std::count(has_pos.begin(), has_pos.end(), 1);
  if (!report.classes_evaluated)
    throw std::invalid_argument("omap_report: no class has a positive");
  report.omap_by_lambda.assign(n_levels, 0.0);
  // Reduction in ascending class index, one lambda at a time.
  for (int lambda = 0; lambda < n_levels; ++lambda) {
    double sum = 0.0;
    for (std::size_t c = 0; c < K; ++c)
      if (has_pos[c]) sum += ap(c, lambda);
    report.omap_by_lambda[lambda] = sum / static_cast<double>(report.classes_evaluated);
  }
  report.map = mean_average_precision(preds);
  report.omap = std::accumulate(report.omap_by_lambda.begin(), report.omap_by_lambda.end(), 0.0) /
                static_cast<double>(n_levels);
  return report;
}

std::vector<std::pair<int, double>> delta_curve(const OmapReport& a, const OmapReport& b) {
  if (a.n_levels != b.n_levels)
    throw UserError("delta_curve: reports have different level counts (" +
                    std::to_string(a.n_levels) + " vs " + std::to_string(b.n_levels) + ")");
  std::vector<std::pair<int, double>> out;
  out.reserve(a.omap_by_lambda.size());
  for (std::size_t i = 0; i < a.omap_by_lambda.size(); ++i)
    out.emplace_back(static_cast<int>(i), a.omap_by_lambda[i] - b.omap_by_lambda[i]);
  return out;
}

double consistency_score(const PredictionSet& preds, const EvalClassMap& eval_map,
                         const HumanAnnotationSet& human) {
  std::map<std::string, std::size_t> clip_row;
  for (std::size_t m = 0; m < preds.clip_ids.size(); ++m) clip_row[preds.clip_ids[m]] = m;
  std::map<std::string, std::size_t> class_col;
  for (const auto& e : eval_map.entries) class_col[e.mid] = e.eval_index;

  // Pool samples in first-appearance order.
  struct Sample {
    std::size_t row, col;
    int yes = 0, no = 0;
  };
  std::vector<Sample> samples;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& v : human.rows) {
    if (v.presence != 0 && v.presence != 1)
      throw UserError("human annotations: presence must be 0/1 (clip " + v.clip_id + ")");
    if (v.confidence < 1 || v.confidence > 5)
      throw UserError("human annotations: confidence must be 1..5 (clip " + v.clip_id + ")");
    auto rit = clip_row.find(v.clip_id);
    if (rit == clip_row.end()) throw UserError("human annotations: unknown clip id " + v.clip_id);
    auto cit = class_col.find(v.mid);
    if (cit == class_col.end()) throw UserError("human annotations: unknown mid " + v.mid);
    auto key = std::make_pair(v.clip_id, v.mid);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, samples.size());
      samples.push_back({rit->second, cit->second, 0, 0});
      it = index.find(key);
    }
    auto& s = samples[it->second];
    (v.presence ? s.yes : s.no) += 1;
  }
  if (samples.empty()) throw UserError("human annotations: no samples");

  std::vector<float> scores;
  std::vector<std::uint8_t> y_human;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.yes == s.no) {
      // Recover the ids for the message.
      for (const auto& [key, si] : index)
        if (si == i)
          throw UserError("human annotations: tied vote for clip " + key.first + ", class " +
                          key.second);
    }
    scores.push_back(preds.scores(s.row, s.col));
    y_human.push_back(s.yes > s.no ? 1 : 0);
  }
  try {
    return average_precision(scores, y_human);
  } catch (const std::invalid_argument&) {
    throw UserError("human annotations: majority vote produced no positive sample");
  }
}

}  // namespace otag
