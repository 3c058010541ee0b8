#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "otag/distance.hpp"
#include "otag/matrix.hpp"
#include "otag/ontology.hpp"

namespace otag {

struct LossConfig {
  double alpha = 0.0;      // weight of the alignment term
  double epsilon = 1e-7;   // probability clamp before logs
  int diameter = 0;        // graph diameter N, normalizes distance weights

  void validate() const;  // 0 < epsilon < 0.5, alpha >= 0
};

// Per-class weights for the distance-weighted cross entropy: 1 on positive
// classes, min-distance-to-a-positive / N on negatives, so near-miss false
// predictions are penalized less.
struct ClassWeights {
  std::vector<double> r;
};

// Loss value plus analytic gradients for whichever inputs the loss reads.
struct LossValue {
  double value = 0.0;
  std::vector<double> d_pred;   // dL/d(pred), when pred is an input
  std::vector<double> d_audio;  // dL/d(E_a)
  MatD d_text;                  // dL/d(E_t), N x D
};

// Plain binary cross entropy, mean over classes. pred is clamped into
// [eps, 1-eps] before the logs; the gradient is exact through the clamp
// (zero where it binds).
LossValue bce(std::span<const double> pred, std::span<const std::uint8_t> target,
              const LossConfig& cfg);

ClassWeights obce_weights(const DistanceMatrix& dist, const EvalClassMap& eval_map,
                          std::span<const std::uint8_t> target);

// Distance-weighted BCE: -mean(r * (y*log(p) + (1-y)*log(1-p))).
LossValue obce(std::span<const double> pred, std::span<const std::uint8_t> target,
               const ClassWeights& r, const LossConfig& cfg);

// Alignment loss: 1 - mean_i cos(E_a, E_t[i]); in [0, 2]. Gradients with
// respect to E_a and every E_t row. Throws on zero-norm inputs.
LossValue spa_loss(std::span<const double> audio_embedding, const MatD& text_embeddings,
                   const LossConfig& cfg);

// (bce + obce)/2 + alpha * spa. Gradients are the matching linear
// combination of the component gradients.
LossValue total_loss(std::span<const double> pred, std::span<const std::uint8_t> target,
                     const ClassWeights& r, std::span<const double> audio_embedding,
                     const MatD& text_embeddings, const LossConfig& cfg);

// Batch evaluation: per-clip losses averaged over the batch, with each
// clip's r rebuilt from its own target row and its alignment term taken
// against the text embedding rows of its positive classes.
struct BatchLossSummary {
  double bce = 0.0;
  double obce = 0.0;
  double spa = 0.0;
  double total = 0.0;
  std::size_t clips = 0;
};

BatchLossSummary batch_losses(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                              const EvalClassMap& eval_map, const MatD& audio_embeddings,
                              const MatD& class_text_embeddings, const LossConfig& cfg);

namespace kernel {

// One row of per-clip loss values: columns bce, obce, spa. Serial
// reference and OpenMP fan-out are bitwise identical; the reduction runs
// in ascending clip order either way.
void clip_losses_serial(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                        const EvalClassMap& eval_map, const MatD& audio_embeddings,
                        const MatD& class_text_embeddings, const LossConfig& cfg, MatD& out);
void clip_losses_parallel(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                          const EvalClassMap& eval_map, const MatD& audio_embeddings,
                          const MatD& class_text_embeddings, const LossConfig& cfg, MatD& out);

}  // namespace kernel

}  // namespace otag
