#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "otag/descriptions.hpp"
#include "otag/matrix.hpp"
#include "otag/metrics.hpp"
#include "otag/ontology.hpp"
#include "otag/toy.hpp"

namespace otag {

// All floating output goes through this: 9 significant digits, enough for
// 32-bit values to round-trip bit-exactly through text.
std::string format_g9(double v);

// ---- class list ------------------------------------------------------

// CSV with header `index,mid,display_name`; RFC-4180 quoting.
std::vector<ClassListRecord> read_class_list(const std::string& path);

// ---- score/target matrices -------------------------------------------

struct NamedMatrix {
  std::vector<std::string> clip_ids;
  std::vector<std::string> column_mids;  // empty for binary inputs
  MatF values;
};

// CSV: header `clip_id,<mid_0>,...`; one row per clip.
NamedMatrix read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const NamedMatrix& m);

// Binary: magic "OTAG", u32 LE format version, u64 LE rows, u64 LE cols,
// then row-major f32 LE values.
MatF read_matrix_otag(const std::string& path);
void write_matrix_otag(const std::string& path, const MatF& m);

// Sniffs the magic bytes and dispatches; binary matrices get synthetic
// row-index clip ids.
NamedMatrix read_matrix_any(const std::string& path);

// Scores + targets against the eval map; CSV column order must match the
// class list exactly (first offending column is named). Binary inputs are
// checked by shape only.
PredictionSet load_prediction_set(const std::string& scores_path, const std::string& targets_path,
                                  const EvalClassMap& eval_map);

// ---- annotations, reports, curves -------------------------------------

// CSV `clip_id,mid,annotator_id,presence,confidence`.
HumanAnnotationSet read_human_annotations(const std::string& path);

nlohmann::json report_to_json(const OmapReport& report);
OmapReport report_from_json(const nlohmann::json& j);
OmapReport read_report(const std::string& path);

void write_delta_csv(std::ostream& out, const std::vector<std::pair<int, double>>& curve);

void write_description_tsv(std::ostream& out, const DescriptionTable& table);

// ---- toy experiment config / report ------------------------------------

// JSON config mirroring the training and synthetic-data knobs. Unknown
// keys are rejected. The ontology is either generated
// ({"families","depth","branching"}) or loaded ({"path"}).
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig read_experiment_config(const std::string& path);

nlohmann::json experiment_report_to_json(const ExperimentReport& report);

// ---- small helpers -----------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace otag
