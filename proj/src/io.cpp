#include "otag/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "otag/errors.hpp"

namespace otag {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw UserError("write failure: " + path);
}

namespace {

// One CSV record; handles quoted fields with doubled-quote escapes.
std::vector<std::string> split_csv_line(const std::string& line, const std::string& path,
                                        std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (in_quotes)
    throw UserError(path + ":" + std::to_string(line_no) + ": unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

long parse_int(const std::string& s, const std::string& path, std::size_t line_no) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw UserError(path + ":" + std::to_string(line_no) + ": bad integer \"" + s + "\"");
  return v;
}

float parse_float(const std::string& s, const std::string& path, std::size_t line_no) {
  float v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw UserError(path + ":" + std::to_string(line_no) + ": bad number \"" + s + "\"");
  return v;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

constexpr char kOtagMagic[4] = {'O', 'T', 'A', 'G'};
constexpr std::uint32_t kOtagVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw UserError(path + ": truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw UserError(path + ": truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<ClassListRecord> read_class_list(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw UserError(path + ": empty class list");
  const auto header = split_csv_line(lines[0], path, 1);
  if (header.size() < 3 || header[0] != "index" || header[1] != "mid" ||
      header[2] != "display_name")
    throw UserError(path + ": expected header index,mid,display_name");
  std::vector<ClassListRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_csv_line(lines[i], path, i + 1);
    if (fields.size() != 3)
      throw UserError(path + ":" + std::to_string(i + 1) + ": expected 3 fields, got " +
                      std::to_string(fields.size()));
    records.push_back({static_cast<std::int32_t>(parse_int(fields[0], path, i + 1)), fields[1],
                       fields[2]});
  }
  return records;
}

NamedMatrix read_matrix_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw UserError(path + ": empty matrix file");
  auto header = split_csv_line(lines[0], path, 1);
  if (header.empty() || header[0] != "clip_id")
    throw UserError(path + ": expected header starting with clip_id");
  NamedMatrix m;
  m.column_mids.assign(header.begin() + 1, header.end());
  const std::size_t K = m.column_mids.size();
  std::vector<float> values;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_csv_line(lines[i], path, i + 1);
    if (fields.size() != K + 1)
      throw UserError(path + ":" + std::to_string(i + 1) + ": expected " + std::to_string(K + 1) +
                      " fields, got " + std::to_string(fields.size()));
    m.clip_ids.push_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c)
      values.push_back(parse_float(fields[c], path, i + 1));
  }
  m.values = MatF::from_rows(m.clip_ids.size(), K, std::move(values));
  return m;
}

void write_matrix_csv(const std::string& path, const NamedMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot open file for writing: " + path);
  out << "clip_id";
  for (const auto& mid : m.column_mids) out << ',' << csv_quote(mid);
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    out << csv_quote(m.clip_ids[r]);
    for (std::size_t c = 0; c < m.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(m.values(r, c)));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw UserError("write failure: " + path);
}

MatF read_matrix_otag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kOtagMagic, 4) != 0)
    throw UserError(path + ": not an OTAG matrix file (bad magic)");
  const auto version = get_u32(in, path);
  if (version != kOtagVersion)
    throw UserError(path + ": unsupported OTAG format version " + std::to_string(version));
  const auto rows = get_u64(in, path);
  const auto cols = get_u64(in, path);
  if (rows > (1ull << 32) || cols > (1ull << 24))
    throw UserError(path + ": implausible matrix shape");
  std::vector<float> values(rows * cols);
  for (auto& v : values) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw UserError(path + ": truncated data");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 4);
  }
  return MatF::from_rows(rows, cols, std::move(values));
}

void write_matrix_otag(const std::string& path, const MatF& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot open file for writing: " + path);
  out.write(kOtagMagic, 4);
  put_u32(out, kOtagVersion);
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (float v : m.data()) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (bits >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw UserError("write failure: " + path);
}

NamedMatrix read_matrix_any(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw UserError("cannot open file: " + path);
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, kOtagMagic, 4) == 0) {
    NamedMatrix m;
    m.values = read_matrix_otag(path);
    m.clip_ids.reserve(m.values.rows());
    for (std::size_t r = 0; r < m.values.rows(); ++r)
      m.clip_ids.push_back("row" + std::to_string(r));
    return m;
  }
  return read_matrix_csv(path);
}

PredictionSet load_prediction_set(const std::string& scores_path, const std::string& targets_path,
                                  const EvalClassMap& eval_map) {
  auto scores = read_matrix_any(scores_path);
  auto targets = read_matrix_any(targets_path);
  const std::size_t K = eval_map.size();

  auto check_columns = [&](const NamedMatrix& m, const std::string& path) {
    if (m.values.cols() != K)
      throw UserError(path + ": " + std::to_string(m.values.cols()) + " class columns, expected " +
                      std::to_string(K));
    if (m.column_mids.empty()) return;  // binary input: shape check only
    for (std::size_t c = 0; c < K; ++c) {
      if (m.column_mids[c] != eval_map.entries[c].mid)
        throw UserError(path + ": column " + std::to_string(c) + " is " + m.column_mids[c] +
                        " but the class list has " + eval_map.entries[c].mid +
                        " (columns must match class-list order)");
    }
  };
  check_columns(scores, scores_path);
  check_columns(targets, targets_path);
  if (scores.values.rows() != targets.values.rows())
    throw UserError("scores have " + std::to_string(scores.values.rows()) + " clips but targets have " +
                    std::to_string(targets.values.rows()));

  PredictionSet preds;
  preds.clip_ids = scores.clip_ids;
  preds.scores = std::move(scores.values);
  preds.targets = MatU8(targets.values.rows(), K);
  for (std::size_t r = 0; r < targets.values.rows(); ++r)
    for (std::size_t c = 0; c < K; ++c) {
      const float v = targets.values(r, c);
      if (v != 0.0f && v != 1.0f)
        throw UserError(targets_path + ": target at clip " + std::to_string(r) + ", column " +
                        std::to_string(c) + " is " + format_g9(v) + ", expected 0 or 1");
      preds.targets(r, c) = v == 1.0f;
    }
  preds.validate();
  return preds;
}

HumanAnnotationSet read_human_annotations(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw UserError(path + ": empty annotation file");
  const auto header = split_csv_line(lines[0], path, 1);
  const std::vector<std::string> expect{"clip_id", "mid", "annotator_id", "presence", "confidence"};
  if (std::vector<std::string>(header.begin(), header.end()) != expect)
    throw UserError(path + ": expected header clip_id,mid,annotator_id,presence,confidence");
  HumanAnnotationSet set;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_csv_line(lines[i], path, i + 1);
    if (fields.size() != 5)
      throw UserError(path + ":" + std::to_string(i + 1) + ": expected 5 fields");
    HumanVote v;
    v.clip_id = fields[0];
    v.mid = fields[1];
    v.annotator_id = fields[2];
    v.presence = static_cast<int>(parse_int(fields[3], path, i + 1));
    v.confidence = static_cast<int>(parse_int(fields[4], path, i + 1));
    set.rows.push_back(std::move(v));
  }
  return set;
}

nlohmann::json report_to_json(const OmapReport& report) {
  return nlohmann::json{{"map", report.map},
                        {"omap", report.omap},
                        {"omap_by_lambda", report.omap_by_lambda},
                        {"n_levels", report.n_levels},
                        {"classes_evaluated", report.classes_evaluated}};
}

OmapReport report_from_json(const nlohmann::json& j) {
  OmapReport r;
  try {
    r.map = j.at("map").get<double>();
    r.omap = j.at("omap").get<double>();
    r.omap_by_lambda = j.at("omap_by_lambda").get<std::vector<double>>();
    r.n_levels = j.at("n_levels").get<int>();
    r.classes_evaluated = j.at("classes_evaluated").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("malformed report JSON: ") + e.what());
  }
  if (r.omap_by_lambda.size() != static_cast<std::size_t>(r.n_levels))
    throw UserError("malformed report JSON: omap_by_lambda length != n_levels");
  return r;
}

OmapReport read_report(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UserError(path + ": " + e.what());
  }
  return report_from_json(j);
}

void write_delta_csv(std::ostream& out, const std::vector<std::pair<int, double>>& curve) {
  out << "lambda,delta\n";
  for (const auto& [lambda, delta] : curve) out << lambda << ',' << format_g9(delta) << '\n';
}

void write_description_tsv(std::ostream& out, const DescriptionTable& table) {
  for (const auto& row : table.rows)
    out << row.eval_index << '\t' << row.mid << '\t' << row.text << '\n';
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw UserError("toy config: unknown key \"" + it.key() + "\" in " + where);
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UserError("toy config: expected a JSON object");
  reject_unknown_keys(j,
                      {"seed", "steps", "learning_rate", "alpha", "batch_size", "ontology",
                       "clips_per_class", "noise_scale", "within_family_correlation", "audio_dim",
                       "text_dim", "embed_dim", "holdout_fraction"},
                      "top level");
  if (!j.contains("seed")) throw UserError("toy config: missing required key \"seed\"");

  ExperimentConfig cfg;
  try {
    cfg.train.seed = j.at("seed").get<std::uint64_t>();
    cfg.train.steps = j.value("steps", cfg.train.steps);
    cfg.train.learning_rate = j.value("learning_rate", cfg.train.learning_rate);
    cfg.train.alpha = j.value("alpha", cfg.train.alpha);
    cfg.train.batch_size = j.value("batch_size", cfg.train.batch_size);
    cfg.spec.clips_per_class = j.value("clips_per_class", cfg.spec.clips_per_class);
    cfg.spec.noise_scale = j.value("noise_scale", cfg.spec.noise_scale);
    cfg.spec.within_family_correlation =
        j.value("within_family_correlation", cfg.spec.within_family_correlation);
    cfg.spec.audio_dim = j.value("audio_dim", cfg.spec.audio_dim);
    cfg.spec.text_dim = j.value("text_dim", cfg.spec.text_dim);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.holdout_fraction = j.value("holdout_fraction", cfg.holdout_fraction);

    if (j.contains("ontology")) {
      const auto& o = j.at("ontology");
      if (!o.is_object()) throw UserError("toy config: \"ontology\" must be an object");
      if (o.contains("path")) {
        reject_unknown_keys(o, {"path"}, "ontology");
        cfg.spec.ontology = load_ontology(o.at("path").get<std::string>());
      } else {
        reject_unknown_keys(o, {"families", "depth", "branching"}, "ontology");
        cfg.spec.ontology = make_toy_ontology(o.value("families", 3), o.value("depth", 2),
                                              o.value("branching", 3));
      }
    } else {
      cfg.spec.ontology = make_toy_ontology(3, 2, 3);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("toy config: ") + e.what());
  }

  if (cfg.train.steps < 0) throw UserError("toy config: steps must be >= 0");
  if (cfg.train.learning_rate < 0) throw UserError("toy config: learning_rate must be >= 0");
  if (cfg.train.alpha < 0) throw UserError("toy config: alpha must be >= 0");
  if (cfg.spec.clips_per_class < 2)
    throw UserError("toy config: clips_per_class must be >= 2 so every class can be split");
  if (cfg.holdout_fraction <= 0.0 || cfg.holdout_fraction >= 1.0)
    throw UserError("toy config: holdout_fraction must be in (0,1)");
  return cfg;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UserError(path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

namespace {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"seed", c.seed},         {"steps", c.steps},
                        {"learning_rate", c.learning_rate}, {"alpha", c.alpha},
                        {"batch_size", c.batch_size},       {"use_spa", c.use_spa}};
}

}  // namespace

nlohmann::json experiment_report_to_json(const ExperimentReport& report) {
  nlohmann::json delta = nlohmann::json::array();
  for (const auto& [lambda, d] : report.delta) delta.push_back({lambda, d});
  return nlohmann::json{
      {"config", {{"spa", train_config_to_json(report.cfg_spa)},
                  {"baseline", train_config_to_json(report.cfg_baseline)}}},
      {"with_spa", report_to_json(report.with_spa)},
      {"without_spa", report_to_json(report.without_spa)},
      {"delta_curve", delta},
      {"final_loss", {{"with_spa", report.final_loss_spa},
                      {"without_spa", report.final_loss_baseline}}},
      {"clips", {{"train", report.train_clips}, {"holdout", report.holdout_clips}}}};
}

}  // namespace otag
