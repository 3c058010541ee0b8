#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "otag/distance.hpp"
#include "otag/matrix.hpp"
#include "otag/metrics.hpp"
#include "otag/ontology.hpp"

namespace otag {

// y = x * w + b, row vectors.
struct AffineMap {
  MatD w;  // in x out
  std::vector<double> b;

  std::size_t in_dim() const { return w.rows(); }
  std::size_t out_dim() const { return w.cols(); }
  bool operator==(const AffineMap&) const = default;
};

// Audio projector, text projector, and linear classifier over the joint
// embedding space. The encoders that would feed this live outside the
// project; their outputs arrive as plain matrices.
struct ToyModel {
  AffineMap p_a;  // U -> D
  AffineMap p_t;  // V -> D
  AffineMap c_a;  // D -> K

  std::size_t audio_dim() const { return p_a.in_dim(); }
  std::size_t text_dim() const { return p_t.in_dim(); }
  std::size_t embed_dim() const { return p_a.out_dim(); }
  std::size_t class_count() const { return c_a.out_dim(); }

  // Deterministic init, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  static ToyModel init(std::size_t audio_dim, std::size_t text_dim, std::size_t embed_dim,
                       std::size_t classes, std::uint64_t seed);

  bool operator==(const ToyModel&) const = default;
};

// Pre-extracted representations: audio rows per clip, text rows per class.
struct RepresentationBatch {
  MatD audio;     // M x U
  MatD text;      // K x V
  MatU8 targets;  // M x K
  std::vector<std::int32_t> source_class;  // generating eval class per clip

  std::size_t clips() const { return audio.rows(); }
  std::size_t classes() const { return text.rows(); }
};

struct ForwardResult {
  MatD e_audio;  // M x D
  MatD e_text;   // K x D
  std::vector<std::vector<double>> similarities;  // per clip: cos against its positives
  MatD pred;     // M x K, sigmoid probabilities
};

ForwardResult forward(const ToyModel& model, const RepresentationBatch& batch);

struct TrainConfig {
  std::uint64_t seed = 1;
  int steps = 1500;
  double learning_rate = 2.0;
  double alpha = 0.5;
  int batch_size = 0;  // 0 = full batch; otherwise contiguous slices in clip order
  bool use_spa = true;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> loss_history;  // one total-loss value per step
};

// Plain full-gradient descent on (bce+obce)/2 + alpha*spa. With use_spa
// off, alpha is forced to 0 and the text projector is never read or
// updated. Single-threaded on purpose; identical config => identical
// trajectory. Throws std::runtime_error naming the step if the loss
// leaves the reals.
TrainResult train(ToyModel model, const RepresentationBatch& data, const DistanceMatrix& dist,
                  const EvalClassMap& eval_map, const TrainConfig& cfg);

// Synthetic stand-in for the real corpus: class means drawn hierarchically
// over the toy ontology so cosine similarity decays with graph distance,
// clips as noisy copies of their class mean, text rows as a second
// correlated hierarchical draw. Targets are the generating class plus its
// in-eval ancestors.
struct SyntheticSpec {
  OntologyGraph ontology;
  int clips_per_class = 20;
  double noise_scale = 2.0;
  double within_family_correlation = 0.95;
  std::size_t audio_dim = 32;
  std::size_t text_dim = 32;
};

// Eval classes of a toy ontology: unrestricted nodes in file order.
EvalClassMap synthetic_eval_map(const OntologyGraph& g);

RepresentationBatch generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Regular forest for synthetic runs: `families` roots (marked abstract),
// each a complete `branching`-ary tree of the given depth. No randomness.
OntologyGraph make_toy_ontology(int families, int depth, int branching);

struct ExperimentConfig {
  SyntheticSpec spec;
  TrainConfig train;  // the SPA arm; the baseline arm is the same with use_spa=false
  std::size_t embed_dim = 16;
  double holdout_fraction = 0.2;
};

struct ExperimentReport {
  OmapReport with_spa;
  OmapReport without_spa;
  std::vector<std::pair<int, double>> delta;  // with_spa - without_spa per lambda
  TrainConfig cfg_spa;
  TrainConfig cfg_baseline;
  double final_loss_spa = 0.0;
  double final_loss_baseline = 0.0;
  std::size_t train_clips = 0;
  std::size_t holdout_clips = 0;
};

// Trains the SPA and baseline arms from one shared init on one shared
// split and scores both on the held-out clips.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace otag
