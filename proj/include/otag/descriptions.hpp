#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "otag/matrix.hpp"
#include "otag/ontology.hpp"

namespace otag {

// The four ways to turn a class into a language description:
//   Direct  - the display name as-is
//   Prompt  - template with {label} replaced by the display name
//   Desc    - the ontology description (Direct fallback when empty)
//   Concat  - display names along the shortest path to the highest parent,
//             root first, joined with " > "
enum class DescriptionVariant { kDirect, kPrompt, kDesc, kConcat };

struct DescriptionMethod {
  DescriptionVariant variant = DescriptionVariant::kDirect;
  std::string prompt_template = kDefaultPromptTemplate;

  static constexpr const char* kDefaultPromptTemplate = "the sound of {label}";

  static DescriptionMethod direct() { return {DescriptionVariant::kDirect, ""}; }
  static DescriptionMethod prompt(std::string tmpl = kDefaultPromptTemplate);
  static DescriptionMethod desc() { return {DescriptionVariant::kDesc, ""}; }
  static DescriptionMethod concat() { return {DescriptionVariant::kConcat, ""}; }

  // Parses a CLI method name; throws UserError listing valid names.
  static DescriptionMethod from_name(const std::string& name, const std::string& tmpl = "");
};

std::string build_description(const OntologyGraph& g, std::int32_t node,
                              const DescriptionMethod& method);

struct DescriptionRow {
  std::int32_t eval_index;
  std::string mid;
  std::string text;
};

struct DescriptionTable {
  DescriptionMethod method;
  std::vector<DescriptionRow> rows;  // evaluation order
};

DescriptionTable build_table(const OntologyGraph& g, const EvalClassMap& eval_map,
                             const DescriptionMethod& method);

// Texts of the positive classes, ascending eval index. Throws
// std::invalid_argument on an all-zero target (unlabeled clip).
std::vector<std::string> select_positive_descriptions(const DescriptionTable& table,
                                                      std::span<const std::uint8_t> target);

// TSV export for external projection tools (t-SNE and friends): header
// `mid parent v0..v{D-1}`, one row per class, parent = the display name of
// the class's highest parent, values at 9 significant digits.
void export_embeddings_for_projection(const OntologyGraph& g, const EvalClassMap& eval_map,
                                      const MatD& embeddings, std::ostream& sink);

}  // namespace otag
