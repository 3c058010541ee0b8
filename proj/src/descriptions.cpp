#include "otag/descriptions.hpp"

#include <cstdio>
#include <stdexcept>

#include "otag/errors.hpp"

namespace otag {

namespace {

constexpr const char* kLabelPlaceholder = "{label}";
constexpr const char* kConcatSeparator = " > ";

std::size_t count_placeholders(const std::string& tmpl) {
  std::size_t n = 0;
  for (auto pos = tmpl.find(kLabelPlaceholder); pos != std::string::npos;
       pos = tmpl.find(kLabelPlaceholder, pos + 1))
    ++n;
  return n;
}

}  // namespace

DescriptionMethod DescriptionMethod::prompt(std::string tmpl) {
  if (count_placeholders(tmpl) != 1)
    throw UserError("prompt template must contain exactly one {label} placeholder: \"" + tmpl + "\"");
  return {DescriptionVariant::kPrompt, std::move(tmpl)};
}

DescriptionMethod DescriptionMethod::from_name(const std::string& name, const std::string& tmpl) {
  if (name == "direct") return direct();
  if (name == "prompt") return prompt(tmpl.empty() ? std::string(kDefaultPromptTemplate) : tmpl);
  if (name == "desc") return desc();
  if (name == "concat") return concat();
  throw UserError("unknown description method \"" + name +
                  "\" (valid: direct, prompt, desc, concat)");
}

std::string build_description(const OntologyGraph& g, std::int32_t node,
                              const DescriptionMethod& method) {
  if (node < 0 || node >= static_cast<std::int32_t>(g.size()))
    throw std::out_of_range("build_description: node index out of range");
  const auto& n = g.nodes[node];
  switch (method.variant) {
    case DescriptionVariant::kDirect:
      return n.name;
    case DescriptionVariant::kPrompt: {
      std::string out = method.prompt_template;
      auto pos = out.find(kLabelPlaceholder);
      if (pos == std::string::npos)
        throw std::invalid_argument("prompt template lost its {label} placeholder");
      out.replace(pos, std::string(kLabelPlaceholder).size(), n.name);
      return out;
    }
    case DescriptionVariant::kDesc:
      // Classes without an ontology description fall back to the display
      // name; an empty alignment text would be worse than a plain label.
      return n.description.empty() ? n.name : n.description;
    case DescriptionVariant::kConcat: {
      auto path = shortest_path_to_root(g, node);
      std::string out;
      for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += kConcatSeparator;
        out += g.nodes[path[i]].name;
      }
      return out;
    }
  }
  throw std::logic_error("build_description: unhandled variant");
}

DescriptionTable build_table(const OntologyGraph& g, const EvalClassMap& eval_map,
                             const DescriptionMethod& method) {
  DescriptionTable table;
  table.method = method;
  table.rows.reserve(eval_map.size());
  for (const auto& e : eval_map.entries)
    table.rows.push_back({e.eval_index, e.mid, build_description(g, e.node_index, method)});
  return table;
}

std::vector<std::string> select_positive_descriptions(const DescriptionTable& table,
                                                      std::span<const std::uint8_t> target) {
  if (target.size() != table.rows.size())
    throw std::invalid_argument("select_positive_descriptions: target length != table rows");
  std::vector<std::string> out;
  for (std::size_t c = 0; c < target.size(); ++c)
    if (target[c]) out.push_back(table.rows[c].text);
  if (out.empty())
    throw std::invalid_argument("select_positive_descriptions: clip has no positive labels");
  return out;
}

void export_embeddings_for_projection(const OntologyGraph& g, const EvalClassMap& eval_map,
                                      const MatD& embeddings, std::ostream& sink) {
  if (embeddings.rows() != eval_map.size())
    throw UserError("embedding export: row count " + std::to_string(embeddings.rows()) +
                    " != class count " + std::to_string(eval_map.size()));
  const std::size_t dim = embeddings.cols();
  sink << "mid\tparent";
  for (std::size_t j = 0; j < dim; ++j) sink << "\tv" << j;
  sink << '\n';
  char buf[40];
  for (const auto& e : eval_map.entries) {
    auto path = shortest_path_to_root(g, e.node_index);
    sink << e.mid << '\t' << g.nodes[path.front()].name;
    for (std::size_t j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", embeddings(e.eval_index, j));
      sink << '\t' << buf;
    }
    sink << '\n';
  }
  if (!sink) throw UserError("embedding export: write failure");
}

}  // namespace otag
