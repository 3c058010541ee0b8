// Benchmark of the OpenMP kernels against their serial reference
// implementations: all-pairs BFS, per-class AP sweep, per-clip batch
// losses. Verifies that both variants produce bitwise identical results
// before timing them.
//
//   otag_bench [--ontology data/synthetic_audioset/ontology.json]
//              [--clips 4000] [--classes 200] [--repeat 5]

#include <chrono>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "otag/distance.hpp"
#include "otag/losses.hpp"
#include "otag/metrics.hpp"
#include "otag/ontology.hpp"
#include "otag/parallel.hpp"
#include "otag/rng.hpp"
#include "otag/toy.hpp"

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <typename Fn>
double time_best_of(int repeat, Fn&& fn) {
  double best = 1e300;
  for (int i = 0; i < repeat; ++i) {
    const double t0 = now_seconds();
    fn();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-22s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel,
              identical ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  std::string ontology_path = "data/synthetic_audioset/ontology.json";
  int clips = 4000, classes = 200, repeat = 5;
  app.add_option("--ontology", ontology_path);
  app.add_option("--clips", clips);
  app.add_option("--classes", classes);
  app.add_option("--repeat", repeat);
  CLI11_PARSE(app, argc, argv);

  std::printf("threads: %d\n\n", otag::thread_count());

  // --- all-pairs BFS on the shipped ontology -----------------------------
  const auto graph = otag::attach_virtual_root(otag::load_ontology(ontology_path));
  const auto adj = otag::build_adjacency(graph, true);
  const std::size_t n = graph.size();
  otag::MatU8 d_serial(n, n, otag::DistanceMatrix::kInf);
  otag::MatU8 d_parallel(n, n, otag::DistanceMatrix::kInf);
  const double t_bfs_s =
      time_best_of(repeat, [&] { otag::kernel::bfs_all_pairs_serial(adj, n, d_serial); });
  const double t_bfs_p =
      time_best_of(repeat, [&] { otag::kernel::bfs_all_pairs_parallel(adj, n, d_parallel); });
  report("bfs_all_pairs", t_bfs_s, t_bfs_p, d_serial == d_parallel);

  // --- per-class AP sweep on random predictions ---------------------------
  otag::Rng rng(7);
  const auto toy = otag::make_toy_ontology(4, 2, 3);
  const auto toy_rooted = otag::attach_virtual_root(toy);
  const auto eval_map_toy = otag::synthetic_eval_map(toy_rooted);
  const auto dist_toy = otag::distance_matrix(toy_rooted);
  const int K = std::min<int>(classes, static_cast<int>(eval_map_toy.size()));

  otag::PredictionSet preds;
  preds.scores = otag::MatF(clips, K);
  preds.targets = otag::MatU8(clips, K, 0);
  for (auto& v : preds.scores.data()) v = static_cast<float>(rng.uniform());
  for (int m = 0; m < clips; ++m) preds.targets(m, rng.below(K)) = 1;
  otag::EvalClassMap em;
  for (int c = 0; c < K; ++c) em.entries.push_back(eval_map_toy.entries[c]);

  const auto mind = otag::min_distance_to_positives(preds, dist_toy, em);
  const int n_levels = dist_toy.diameter;
  otag::MatD ap_serial(K, n_levels, 0.0), ap_parallel(K, n_levels, 0.0);
  std::vector<std::uint8_t> pos_serial(K, 0), pos_parallel(K, 0);
  const double t_ap_s = time_best_of(repeat, [&] {
    otag::kernel::omap_per_class_serial(preds, mind, n_levels, ap_serial, pos_serial);
  });
  const double t_ap_p = time_best_of(repeat, [&] {
    otag::kernel::omap_per_class_parallel(preds, mind, n_levels, ap_parallel, pos_parallel);
  });
  report("omap_per_class", t_ap_s, t_ap_p,
         ap_serial == ap_parallel && pos_serial == pos_parallel);

  // --- per-clip batch losses ----------------------------------------------
  const std::size_t D = 32;
  otag::MatD pred_d(clips, K), audio(clips, D), text(K, D);
  for (auto& v : pred_d.data()) v = 0.02 + 0.96 * rng.uniform();
  for (auto& v : audio.data()) v = rng.normal();
  for (auto& v : text.data()) v = rng.normal();
  otag::LossConfig cfg;
  cfg.alpha = 0.5;
  cfg.diameter = dist_toy.diameter;
  otag::MatD loss_serial(clips, 3, 0.0), loss_parallel(clips, 3, 0.0);
  const double t_loss_s = time_best_of(repeat, [&] {
    otag::kernel::clip_losses_serial(pred_d, preds.targets, dist_toy, em, audio, text, cfg,
                                     loss_serial);
  });
  const double t_loss_p = time_best_of(repeat, [&] {
    otag::kernel::clip_losses_parallel(pred_d, preds.targets, dist_toy, em, audio, text, cfg,
                                       loss_parallel);
  });
  report("clip_losses", t_loss_s, t_loss_p, loss_serial == loss_parallel);
  return 0;
}
