// otag: ontology-aware audio tagging evaluation and alignment toolkit.
//
// Subcommands: stats, describe, eval, delta-curve, losses, toy-run,
// export-embeddings. Exit codes: 0 success, 1 user error, 2 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "otag/descriptions.hpp"
#include "otag/distance.hpp"
#include "otag/errors.hpp"
#include "otag/io.hpp"
#include "otag/losses.hpp"
#include "otag/metrics.hpp"
#include "otag/ontology.hpp"
#include "otag/rng.hpp"
#include "otag/toy.hpp"

namespace {

using otag::UserError;

struct StatsArgs {
  std::string ontology_path, class_list_path;
  bool virtual_root = true;
  bool json = false;
};

otag::EvalClassMap load_eval_map(const otag::OntologyGraph& g, const std::string& path) {
  return otag::build_eval_map(g, otag::read_class_list(path));
}

int cmd_stats(const StatsArgs& args) {
  const auto base = otag::load_ontology(args.ontology_path);
  const auto eval_map = load_eval_map(base, args.class_list_path);

  std::vector<std::int32_t> eval_nodes;
  for (const auto& e : eval_map.entries) eval_nodes.push_back(e.node_index);

  const auto with_root = otag::attach_virtual_root(base);
  const auto dist_off = otag::distance_matrix(base);
  const auto dist_on = otag::distance_matrix(with_root);

  const auto& headline = args.virtual_root ? dist_on : dist_off;
  const auto histogram = otag::distance_histogram(headline);

  std::uint64_t unreachable = 0;
  for (std::size_t i = 0; i < headline.n; ++i)
    for (std::size_t j = i + 1; j < headline.n; ++j)
      if (!headline.reachable(i, j)) ++unreachable;

  nlohmann::json j{
      {"nodes", base.size()},
      {"roots", base.roots.size()},
      {"root_names", nlohmann::json::array()},
      {"eval_classes", eval_map.size()},
      {"diameter", {{"all_nodes_virtual_root", dist_on.diameter},
                    {"all_nodes_no_virtual_root", dist_off.diameter},
                    {"eval_classes_virtual_root", otag::diameter_over(dist_on, eval_nodes)},
                    {"eval_classes_no_virtual_root", otag::diameter_over(dist_off, eval_nodes)}}},
      {"virtual_root", args.virtual_root},
      {"unreachable_pairs", unreachable},
      {"distance_histogram", histogram},
  };
  for (auto r : base.roots) j["root_names"].push_back(base.nodes[r].name);

  if (args.json) {
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "nodes:        " << base.size() << '\n';
  std::cout << "roots:        " << base.roots.size() << " (";
  for (std::size_t i = 0; i < base.roots.size(); ++i)
    std::cout << (i ? ", " : "") << base.nodes[base.roots[i]].name;
  std::cout << ")\n";
  std::cout << "eval classes: " << eval_map.size() << '\n';
  std::cout << "diameter (all nodes,  virtual root on):  " << dist_on.diameter << '\n';
  std::cout << "diameter (all nodes,  virtual root off): " << dist_off.diameter << '\n';
  std::cout << "diameter (eval only,  virtual root on):  "
            << otag::diameter_over(dist_on, eval_nodes) << '\n';
  std::cout << "diameter (eval only,  virtual root off): "
            << otag::diameter_over(dist_off, eval_nodes) << '\n';
  std::cout << "unreachable pairs (headline config): " << unreachable << '\n';
  std::cout << "distance histogram (headline config):\n";
  for (std::size_t d = 0; d < histogram.size(); ++d)
    if (histogram[d]) std::cout << "  d=" << d << ": " << histogram[d] << '\n';
  return 0;
}

struct DescribeArgs {
  std::string ontology_path, class_list_path;
  std::string method = "direct";
  std::string prompt_template;
  std::string out_path;
};

int cmd_describe(const DescribeArgs& args) {
  const auto g = otag::load_ontology(args.ontology_path);
  const auto eval_map = load_eval_map(g, args.class_list_path);
  const auto method = otag::DescriptionMethod::from_name(args.method, args.prompt_template);
  const auto table = otag::build_table(g, eval_map, method);
  if (args.out_path.empty()) {
    otag::write_description_tsv(std::cout, table);
  } else {
    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw UserError("cannot open file for writing: " + args.out_path);
    otag::write_description_tsv(out, table);
  }
  return 0;
}

struct EvalArgs {
  std::string scores_path, targets_path, ontology_path, class_list_path;
  int lambda = -1;
  bool virtual_root = true;
  std::string out_path;
};

int cmd_eval(const EvalArgs& args) {
  auto g = otag::load_ontology(args.ontology_path);
  if (args.virtual_root) g = otag::attach_virtual_root(g);
  const auto eval_map = load_eval_map(g, args.class_list_path);
  const auto dist = otag::distance_matrix(g);
  const auto preds = otag::load_prediction_set(args.scores_path, args.targets_path, eval_map);

  nlohmann::json j;
  if (args.lambda >= 0) {
    if (args.lambda >= otag::DistanceMatrix::kInf)
      throw UserError("--lambda must be below " + std::to_string(otag::DistanceMatrix::kInf));
    j = {{"map", otag::mean_average_precision(preds)},
         {"lambda", args.lambda},
         {"omap_at_lambda", otag::omap_at_lambda(preds, dist, eval_map, args.lambda)}};
  } else {
    j = otag::report_to_json(otag::omap_report(preds, dist, eval_map));
  }
  const std::string text = j.dump(2) + "\n";
  if (args.out_path.empty())
    std::cout << text;
  else
    otag::write_text_file(args.out_path, text);
  return 0;
}

struct DeltaArgs {
  std::string report_a, report_b, out_csv;
};

int cmd_delta_curve(const DeltaArgs& args) {
  const auto a = otag::read_report(args.report_a);
  const auto b = otag::read_report(args.report_b);
  const auto curve = otag::delta_curve(a, b);
  if (args.out_csv.empty()) {
    otag::write_delta_csv(std::cout, curve);
  } else {
    std::ofstream out(args.out_csv, std::ios::binary);
    if (!out) throw UserError("cannot open file for writing: " + args.out_csv);
    otag::write_delta_csv(out, curve);
  }
  return 0;
}

struct LossArgs {
  std::string pred_path, targets_path, audio_path, text_path;
  std::string ontology_path, class_list_path;
  double alpha = 0.5;
  double epsilon = 1e-7;
  bool virtual_root = true;
};

int cmd_losses(const LossArgs& args) {
  if (args.alpha < 0.0) throw UserError("--alpha must be non-negative");
  if (!(args.epsilon > 0.0 && args.epsilon < 0.5))
    throw UserError("--epsilon must be in (0, 0.5)");
  auto g = otag::load_ontology(args.ontology_path);
  if (args.virtual_root) g = otag::attach_virtual_root(g);
  const auto eval_map = load_eval_map(g, args.class_list_path);
  const auto dist = otag::distance_matrix(g);
  const auto preds = otag::load_prediction_set(args.pred_path, args.targets_path, eval_map);

  auto to_double = [](const otag::MatF& m) {
    otag::MatD out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i];
    return out;
  };
  const auto audio = to_double(otag::read_matrix_any(args.audio_path).values);
  const auto text = to_double(otag::read_matrix_any(args.text_path).values);

  otag::LossConfig cfg;
  cfg.alpha = args.alpha;
  cfg.epsilon = args.epsilon;
  cfg.diameter = dist.diameter;

  const auto pred = to_double(preds.scores);
  const auto summary =
      otag::batch_losses(pred, preds.targets, dist, eval_map, audio, text, cfg);
  nlohmann::json j{{"bce", summary.bce},   {"obce", summary.obce}, {"spa", summary.spa},
                   {"total", summary.total}, {"alpha", cfg.alpha},   {"clips", summary.clips}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct ToyRunArgs {
  std::string config_path;
  std::string out_dir = ".";
  int seeds = 1;
};

int cmd_toy_run(const ToyRunArgs& args) {
  const auto base_cfg = otag::read_experiment_config(args.config_path);
  if (args.seeds < 1) throw UserError("--seeds must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(args.out_dir, ec);
  if (ec) throw UserError("cannot create output directory " + args.out_dir + ": " + ec.message());

  nlohmann::json summary{{"seeds", nlohmann::json::array()},
                         {"spa_omap_wins", 0},
                         {"coarse_delta_wins", 0}};
  int spa_wins = 0, coarse_wins = 0;
  for (int s = 0; s < args.seeds; ++s) {
    auto cfg = base_cfg;
    cfg.train.seed = base_cfg.train.seed + static_cast<std::uint64_t>(s);
    const auto report = otag::run_experiment(cfg);
    const auto j = otag::experiment_report_to_json(report);

    const std::string tag = args.seeds == 1 ? "" : "_s" + std::to_string(cfg.train.seed);
    otag::write_text_file(args.out_dir + "/report" + tag + ".json", j.dump(2) + "\n");
    std::ostringstream delta_csv;
    otag::write_delta_csv(delta_csv, report.delta);
    otag::write_text_file(args.out_dir + "/delta" + tag + ".csv", delta_csv.str());

    const bool spa_win = report.with_spa.omap >= report.without_spa.omap;
    const bool coarse_win = report.delta.back().second >= report.delta.front().second;
    spa_wins += spa_win;
    coarse_wins += coarse_win;
    summary["seeds"].push_back({{"seed", cfg.train.seed},
                                {"omap_with_spa", report.with_spa.omap},
                                {"omap_without_spa", report.without_spa.omap},
                                {"spa_omap_higher_or_equal", spa_win},
                                {"delta_at_max_lambda", report.delta.back().second},
                                {"delta_at_lambda0", report.delta.front().second},
                                {"coarse_delta_higher_or_equal", coarse_win}});
    std::cerr << "seed " << cfg.train.seed << ": OmAP with SPA "
              << otag::format_g9(report.with_spa.omap) << ", without "
              << otag::format_g9(report.without_spa.omap) << '\n';
  }
  summary["spa_omap_wins"] = spa_wins;
  summary["coarse_delta_wins"] = coarse_wins;
  if (args.seeds > 1)
    otag::write_text_file(args.out_dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct ExportArgs {
  std::string ontology_path, class_list_path;
  std::string embeddings_path;
  int synthesize_dim = 0;
  std::uint64_t seed = 1;
  std::string out_path;
};

int cmd_export_embeddings(const ExportArgs& args) {
  const auto g = otag::load_ontology(args.ontology_path);
  const auto eval_map = load_eval_map(g, args.class_list_path);

  otag::MatD embeddings;
  if (!args.embeddings_path.empty()) {
    const auto m = otag::read_matrix_any(args.embeddings_path).values;
    embeddings = otag::MatD(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.data().size(); ++i) embeddings.data()[i] = m.data()[i];
  } else if (args.synthesize_dim > 0) {
    // Deterministic hierarchical stand-in embeddings, for pipeline dry runs
    // when no encoder output is at hand. Restrictions are stripped from a
    // copy so every node gets a text row (class lists may legitimately
    // include abstract classes).
    otag::OntologyGraph unrestricted = g;
    for (auto& node : unrestricted.nodes) node.restrictions = 0;
    otag::SyntheticSpec spec;
    spec.ontology = unrestricted;
    spec.audio_dim = spec.text_dim = static_cast<std::size_t>(args.synthesize_dim);
    spec.clips_per_class = 1;
    const auto batch = otag::generate_synthetic(spec, args.seed);
    // With no restrictions the text rows sit in node order.
    embeddings = otag::MatD(eval_map.size(), spec.text_dim);
    for (std::size_t c = 0; c < eval_map.size(); ++c) {
      auto src = batch.text.row(eval_map.entries[c].node_index);
      std::copy(src.begin(), src.end(), embeddings.row(c).begin());
    }
  } else {
    throw UserError("provide --embeddings FILE or --synthesize DIM");
  }

  if (args.out_path.empty()) {
    otag::export_embeddings_for_projection(g, eval_map, embeddings, std::cout);
  } else {
    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw UserError("cannot open file for writing: " + args.out_path);
    otag::export_embeddings_for_projection(g, eval_map, embeddings, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ontology-aware audio tagging evaluation and alignment toolkit"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* s = app.add_subcommand("stats", "ontology and distance statistics");
  s->add_option("--ontology", stats.ontology_path, "ontology JSON")->required();
  s->add_option("--classes", stats.class_list_path, "class list CSV")->required();
  s->add_flag("--virtual-root,!--no-virtual-root", stats.virtual_root,
              "headline config joins the top-level classes through a virtual root (default on)");
  s->add_flag("--json", stats.json, "emit a JSON document instead of text");

  DescribeArgs describe;
  auto* d = app.add_subcommand("describe", "build per-class language descriptions");
  d->add_option("--ontology", describe.ontology_path)->required();
  d->add_option("--classes", describe.class_list_path)->required();
  d->add_option("--method", describe.method, "direct | prompt | desc | concat")->required();
  d->add_option("--template", describe.prompt_template, "prompt template with one {label}");
  d->add_option("--out", describe.out_path, "output TSV (default stdout)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score predictions with mAP and OmAP");
  e->add_option("--scores", eval.scores_path, "score matrix (CSV or OTAG binary)")->required();
  e->add_option("--targets", eval.targets_path, "target matrix (CSV or OTAG binary)")->required();
  e->add_option("--ontology", eval.ontology_path)->required();
  e->add_option("--classes", eval.class_list_path)->required();
  e->add_option("--lambda", eval.lambda, "report a single coarse-grained level only");
  e->add_flag("--virtual-root,!--no-virtual-root", eval.virtual_root);
  e->add_option("--out", eval.out_path, "output JSON (default stdout)");

  DeltaArgs delta;
  auto* dc = app.add_subcommand("delta-curve", "per-lambda difference of two reports");
  dc->add_option("--a", delta.report_a, "report JSON (minuend)")->required();
  dc->add_option("--b", delta.report_b, "report JSON (subtrahend)")->required();
  dc->add_option("--out", delta.out_csv, "output CSV (default stdout)");

  LossArgs losses;
  auto* l = app.add_subcommand("losses", "batch loss values for predictions plus embeddings");
  l->add_option("--pred", losses.pred_path, "probability matrix")->required();
  l->add_option("--targets", losses.targets_path)->required();
  l->add_option("--audio-emb", losses.audio_path, "clip embedding matrix (M x D)")->required();
  l->add_option("--text-emb", losses.text_path, "per-class text embedding matrix (K x D)")
      ->required();
  l->add_option("--ontology", losses.ontology_path)->required();
  l->add_option("--classes", losses.class_list_path)->required();
  l->add_option("--alpha", losses.alpha, "alignment weight");
  l->add_option("--epsilon", losses.epsilon, "probability clamp");
  l->add_flag("--virtual-root,!--no-virtual-root", losses.virtual_root);

  ToyRunArgs toy;
  auto* t = app.add_subcommand("toy-run", "synthetic alignment experiment");
  t->add_option("--config", toy.config_path, "experiment config JSON")->required();
  t->add_option("--out-dir", toy.out_dir, "directory for report/delta files");
  t->add_option("--seeds", toy.seeds, "run this many consecutive seeds");

  ExportArgs exp;
  auto* x = app.add_subcommand("export-embeddings",
                               "TSV of per-class embeddings annotated with family for projection");
  x->add_option("--ontology", exp.ontology_path)->required();
  x->add_option("--classes", exp.class_list_path)->required();
  x->add_option("--embeddings", exp.embeddings_path, "per-class embedding matrix (K x D)");
  x->add_option("--synthesize", exp.synthesize_dim, "synthesize embeddings of this dimension");
  x->add_option("--seed", exp.seed, "seed for --synthesize");
  x->add_option("--out", exp.out_path, "output TSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);  // --help and friends
    app.exit(err);
    return 1;
  }

  try {
    if (s->parsed()) return cmd_stats(stats);
    if (d->parsed()) return cmd_describe(describe);
    if (e->parsed()) return cmd_eval(eval);
    if (dc->parsed()) return cmd_delta_curve(delta);
    if (l->parsed()) return cmd_losses(losses);
    if (t->parsed()) return cmd_toy_run(toy);
    if (x->parsed()) return cmd_export_embeddings(exp);
  } catch (const UserError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << '\n';
    return 2;
  }
  return 2;
}
