#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "otag/distance.hpp"
#include "otag/matrix.hpp"
#include "otag/ontology.hpp"

namespace otag {

// Clip-by-class scores and binary targets, rows in clip order.
struct PredictionSet {
  std::vector<std::string> clip_ids;
  MatF scores;    // M x K
  MatU8 targets;  // M x K, entries 0/1

  std::size_t clips() const { return scores.rows(); }
  std::size_t classes() const { return scores.cols(); }

  // Shape agreement, binary targets, finite scores. Throws UserError.
  void validate() const;
};

// Ranking average precision. Items are sorted by descending score, ties by
// ascending index; AP is the mean of precision@k over positive ranks.
// `mask` (optional, same length) removes items from the ranking entirely.
// Throws std::invalid_argument when no unmasked positive remains.
double average_precision(std::span<const float> scores, std::span<const std::uint8_t> targets,
                         std::span<const std::uint8_t> mask = {});

// Macro mean of per-class AP over classes with at least one positive.
double mean_average_precision(const PredictionSet& preds);

// min over the clip's positive labels p of d(c, p), as a clip-by-class
// matrix; 255 for clips without positives (they are never masked).
MatU8 min_distance_to_positives(const PredictionSet& preds, const DistanceMatrix& dist,
                                const EvalClassMap& eval_map);

// OmAP at one coarse-grained level: for class c, a clip is dropped from
// the ranking iff it is negative for c and its nearest positive label is
// within lambda edges of c. lambda = 0 reduces to mAP exactly.
double omap_at_lambda(const PredictionSet& preds, const DistanceMatrix& dist,
                      const EvalClassMap& eval_map, int lambda);

struct OmapReport {
  double map = 0.0;
  std::vector<double> omap_by_lambda;  // lambda = 0..n_levels-1
  double omap = 0.0;                   // mean of omap_by_lambda
  int n_levels = 0;                    // the graph diameter N
  std::size_t classes_evaluated = 0;   // classes with >= 1 positive
};

// Full sweep over lambda = 0..diameter-1 plus mAP.
OmapReport omap_report(const PredictionSet& preds, const DistanceMatrix& dist,
                       const EvalClassMap& eval_map);

// Per-lambda differences a - b. Throws UserError on level-count mismatch.
std::vector<std::pair<int, double>> delta_curve(const OmapReport& a, const OmapReport& b);

struct HumanVote {
  std::string clip_id;
  std::string mid;
  std::string annotator_id;
  int presence = 0;    // 0/1
  int confidence = 0;  // 1..5
};

struct HumanAnnotationSet {
  std::vector<HumanVote> rows;
};

// AP of model scores against majority-vote human presence over the pooled
// (clip, class) samples, in first-appearance order. A tied vote is a
// UserError naming the sample.
double consistency_score(const PredictionSet& preds, const EvalClassMap& eval_map,
                         const HumanAnnotationSet& human);

namespace kernel {

// Per-class AP across all lambda levels; ap is K x n_levels, filled for
// classes with a positive (has_pos). Serial reference and OpenMP fan-out
// produce bitwise identical output.
void omap_per_class_serial(const PredictionSet& preds, const MatU8& mind, int n_levels,
                           MatD& ap, std::vector<std::uint8_t>& has_pos);
void omap_per_class_parallel(const PredictionSet& preds, const MatU8& mind, int n_levels,
                             MatD& ap, std::vector<std::uint8_t>& has_pos);

}  // namespace kernel

}  // namespace otag
