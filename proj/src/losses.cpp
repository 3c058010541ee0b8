#include "otag/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otag/parallel.hpp"

namespace otag {

void LossConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw std::invalid_argument("loss config: epsilon must be in (0, 0.5)");
  if (alpha < 0.0) throw std::invalid_argument("loss config: alpha must be non-negative");
}

LossValue bce(std::span<const double> pred, std::span<const std::uint8_t> target,
              const LossConfig& cfg) {
  cfg.validate();
  if (pred.size() != target.size()) throw std::invalid_argument("bce: length mismatch");
  const std::size_t K = pred.size();
  if (!K) throw std::invalid_argument("bce: empty input");

  LossValue out;
  out.d_pred.assign(K, 0.0);
  const double lo = cfg.epsilon, hi = 1.0 - cfg.epsilon;
  double sum = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    const bool clamped = pred[c] < lo || pred[c] > hi;
    const double p = std::clamp(pred[c], lo, hi);
    const double y = target[c];
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (!clamped) out.d_pred[c] = -(y / p - (1.0 - y) / (1.0 - p)) / static_cast<double>(K);
  }
  out.value = -sum / static_cast<double>(K);
  return out;
}

ClassWeights obce_weights(const DistanceMatrix& dist, const EvalClassMap& eval_map,
                          std::span<const std::uint8_t> target) {
  const std::size_t K = eval_map.size();
  if (target.size() != K) throw std::invalid_argument("obce_weights: target length != class count");
  if (dist.diameter <= 0) throw std::invalid_argument("obce_weights: graph diameter is 0");

  std::vector<std::int32_t> pos_nodes;
  for (std::size_t c = 0; c < K; ++c)
    if (target[c]) pos_nodes.push_back(eval_map.entries[c].node_index);
  if (pos_nodes.empty()) throw std::invalid_argument("obce_weights: all-zero target");

  ClassWeights w;
  w.r.assign(K, 1.0);
  const double N = dist.diameter;
  for (std::size_t c = 0; c < K; ++c) {
    if (target[c]) continue;
    std::uint8_t best = DistanceMatrix::kInf;
    const auto node = eval_map.entries[c].node_index;
    for (auto p : pos_nodes) best = std::min(best, dist.d(node, p));
    // Unreachable counts as maximally distant.
    w.r[c] = best == DistanceMatrix::kInf ? 1.0 : std::min(1.0, static_cast<double>(best) / N);
  }
  return w;
}

LossValue obce(std::span<const double> pred, std::span<const std::uint8_t> target,
               const ClassWeights& r, const LossConfig& cfg) {
  cfg.validate();
  if (pred.size() != target.size()) throw std::invalid_argument("obce: length mismatch");
  if (r.r.size() != pred.size()) throw std::invalid_argument("obce: weight length mismatch");
  const std::size_t K = pred.size();
  if (!K) throw std::invalid_argument("obce: empty input");

  LossValue out;
  out.d_pred.assign(K, 0.0);
  const double lo = cfg.epsilon, hi = 1.0 - cfg.epsilon;
  double sum = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    const bool clamped = pred[c] < lo || pred[c] > hi;
    const double p = std::clamp(pred[c], lo, hi);
    const double y = target[c];
    sum += r.r[c] * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (!clamped)
      out.d_pred[c] = -r.r[c] * (y / p - (1.0 - y) / (1.0 - p)) / static_cast<double>(K);
  }
  out.value = -sum / static_cast<double>(K);
  return out;
}

LossValue spa_loss(std::span<const double> audio_embedding, const MatD& text_embeddings,
                   const LossConfig& cfg) {
  cfg.validate();
  const std::size_t D = audio_embedding.size();
  const std::size_t N = text_embeddings.rows();
  if (!N) throw std::invalid_argument("spa_loss: no text embeddings");
  if (text_embeddings.cols() != D) throw std::invalid_argument("spa_loss: dimension mismatch");

  double na2 = 0.0;
  for (auto v : audio_embedding) na2 += v * v;
  const double na = std::sqrt(na2);
  if (na == 0.0) throw std::invalid_argument("spa_loss: zero-norm audio embedding");

  LossValue out;
  out.d_audio.assign(D, 0.0);
  out.d_text = MatD(N, D, 0.0);
  double cos_sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto t = text_embeddings.row(i);
    double nt2 = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      nt2 += t[j] * t[j];
      dot += t[j] * audio_embedding[j];
    }
    const double nt = std::sqrt(nt2);
    if (nt == 0.0) throw std::invalid_argument("spa_loss: zero-norm text embedding row");
    const double cosine = dot / (na * nt);
    cos_sum += cosine;
    // d cos/d a = t/(|a||t|) - cos * a/|a|^2 ; loss contributes -1/N of it.
    for (std::size_t j = 0; j < D; ++j) {
      out.d_audio[j] -= inv_n * (t[j] / (na * nt) - cosine * audio_embedding[j] / na2);
      out.d_text(i, j) = -inv_n * (audio_embedding[j] / (na * nt) - cosine * t[j] / nt2);
    }
  }
  out.value = 1.0 - inv_n * cos_sum;
  return out;
}

LossValue total_loss(std::span<const double> pred, std::span<const std::uint8_t> target,
                     const ClassWeights& r, std::span<const double> audio_embedding,
                     const MatD& text_embeddings, const LossConfig& cfg) {
  auto l_bce = bce(pred, target, cfg);
  auto l_obce = obce(pred, target, r, cfg);
  auto l_spa = spa_loss(audio_embedding, text_embeddings, cfg);

  LossValue out;
  out.value = 0.5 * (l_bce.value + l_obce.value) + cfg.alpha * l_spa.value;
  out.d_pred.resize(pred.size());
  for (std::size_t c = 0; c < pred.size(); ++c)
    out.d_pred[c] = 0.5 * (l_bce.d_pred[c] + l_obce.d_pred[c]);
  out.d_audio.resize(audio_embedding.size());
  for (std::size_t j = 0; j < audio_embedding.size(); ++j)
    out.d_audio[j] = cfg.alpha * l_spa.d_audio[j];
  out.d_text = MatD(text_embeddings.rows(), text_embeddings.cols());
  for (std::size_t i = 0; i < out.d_text.rows(); ++i)
    for (std::size_t j = 0; j < out.d_text.cols(); ++j)
      out.d_text(i, j) = cfg.alpha * l_spa.d_text(i, j);
  return out;
}

namespace kernel {

namespace {

void clip_loss_row(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                   const EvalClassMap& eval_map, const MatD& audio_embeddings,
                   const MatD& class_text_embeddings, const LossConfig& cfg, std::size_t m,
                   MatD& out) {
  const std::size_t K = pred.cols();
  auto pred_row = pred.row(m);
  auto target_row = targets.row(m);
  auto w = obce_weights(dist, eval_map, target_row);
  out(m, 0) = bce(pred_row, target_row, cfg).value;
  out(m, 1) = obce(pred_row, target_row, w, cfg).value;

  std::size_t n_pos = 0;
  for (auto t : target_row) n_pos += t;
  MatD e_t(n_pos, class_text_embeddings.cols());
  std::size_t i = 0;
  for (std::size_t c = 0; c < K; ++c) {
    if (!target_row[c]) continue;
    auto src = class_text_embeddings.row(c);
    std::copy(src.begin(), src.end(), e_t.row(i).begin());
    ++i;
  }
  out(m, 2) = spa_loss(audio_embeddings.row(m), e_t, cfg).value;
}

}  // namespace

void clip_losses_serial(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                        const EvalClassMap& eval_map, const MatD& audio_embeddings,
                        const MatD& class_text_embeddings, const LossConfig& cfg, MatD& out) {
  for (std::size_t m = 0; m < pred.rows(); ++m)
    clip_loss_row(pred, targets, dist, eval_map, audio_embeddings, class_text_embeddings, cfg, m,
                  out);
}

void clip_losses_parallel(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                          const EvalClassMap& eval_map, const MatD& audio_embeddings,
                          const MatD& class_text_embeddings, const LossConfig& cfg, MatD& out) {
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
  for (long m = 0; m < static_cast<long>(pred.rows()); ++m)
    clip_loss_row(pred, targets, dist, eval_map, audio_embeddings, class_text_embeddings, cfg,
                  static_cast<std::size_t>(m), out);
}

}  // namespace kernel

BatchLossSummary batch_losses(const MatD& pred, const MatU8& targets, const DistanceMatrix& dist,
                              const EvalClassMap& eval_map, const MatD& audio_embeddings,
                              const MatD& class_text_embeddings, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t M = pred.rows();
  if (!M) throw std::invalid_argument("batch_losses: empty batch");
  if (targets.rows() != M || targets.cols() != pred.cols())
    throw std::invalid_argument("batch_losses: prediction/target shape mismatch");
  if (audio_embeddings.rows() != M)
    throw std::invalid_argument("batch_losses: audio embedding row count != clip count");
  if (class_text_embeddings.rows() != pred.cols())
    throw std::invalid_argument("batch_losses: text embedding row count != class count");
  if (class_text_embeddings.cols() != audio_embeddings.cols())
    throw std::invalid_argument("batch_losses: embedding dimension mismatch");
  if (eval_map.size() != pred.cols())
    throw std::invalid_argument("batch_losses: eval map size != class count");

  MatD per_clip(M, 3, 0.0);
#ifdef _OPENMP
  kernel::clip_losses_parallel(pred, targets, dist, eval_map, audio_embeddings,
                               class_text_embeddings, cfg, per_clip);
#else
  kernel::clip_losses_serial(pred, targets, dist, eval_map, audio_embeddings,
                             class_text_embeddings, cfg, per_clip);
#endif

  BatchLossSummary s;
  s.clips = M;
  for (std::size_t m = 0; m < M; ++m) {
    s.bce += per_clip(m, 0);
    s.obce += per_clip(m, 1);
    s.spa += per_clip(m, 2);
  }
  s.bce /= static_cast<double>(M);
  s.obce /= static_cast<double>(M);
  s.spa /= static_cast<double>(M);
  s.total = 0.5 * (s.bce + s.obce) + cfg.alpha * s.spa;
  return s;
}

}  // namespace otag
