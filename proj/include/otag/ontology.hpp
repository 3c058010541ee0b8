#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace otag {

enum class Restriction : std::uint8_t {
  kAbstract = 1,
  kBlacklist = 2,
};

struct OntologyNode {
  std::string id;           // machine id, e.g. "/m/09x0r"
  std::string name;         // display name
  std::string description;  // may be empty
  std::vector<std::string> child_ids;
  std::uint8_t restrictions = 0;  // bitmask of Restriction

  bool is_abstract() const { return restrictions & static_cast<std::uint8_t>(Restriction::kAbstract); }
  bool is_blacklisted() const { return restrictions & static_cast<std::uint8_t>(Restriction::kBlacklist); }
};

// Parsed ontology. Nodes keep file order; children/parents hold node
// indices and are exact transposes of each other. An attached virtual root
// is a synthetic extra vertex adjacent to every real root; it participates
// in distance computations but is not a node and never appears in paths.
class OntologyGraph {
 public:
  std::vector<OntologyNode> nodes;
  std::vector<std::vector<std::int32_t>> children;
  std::vector<std::vector<std::int32_t>> parents;
  std::vector<std::int32_t> roots;  // nodes with no parent, file order
  bool has_virtual_root = false;

  std::size_t size() const { return nodes.size(); }

  // -1 if the id is unknown.
  std::int32_t index_of(std::string_view id) const;

  const std::unordered_map<std::string, std::int32_t>& id_map() const { return id_to_index_; }

  friend OntologyGraph parse_ontology(std::string_view json_text);

 private:
  std::unordered_map<std::string, std::int32_t> id_to_index_;
};

// Parses the official ontology JSON schema (array of objects with at least
// id, name, child_ids; description/restrictions optional; unknown keys
// ignored). Throws UserError on malformed JSON, duplicate ids, or child
// references to unknown ids.
OntologyGraph parse_ontology(std::string_view json_text);

// Convenience: read the file and parse.
OntologyGraph load_ontology(const std::string& path);

// Copy of the graph with the virtual root attached. Node indices and the
// root set are unchanged. Precondition: no virtual root yet.
OntologyGraph attach_virtual_root(const OntologyGraph& g);

// Shortest parent-edge path from `node` up to its highest parent class,
// returned root-first: [highest parent, ..., node]. Among equal-length
// routes the parent with the smallest file-order index wins at every hop.
std::vector<std::int32_t> shortest_path_to_root(const OntologyGraph& g, std::int32_t node);

struct EvalClassEntry {
  std::int32_t eval_index;  // 0..K-1, class-list order
  std::int32_t node_index;
  std::string mid;
  std::string display_name;
};

struct EvalClassMap {
  std::vector<EvalClassEntry> entries;

  std::size_t size() const { return entries.size(); }
};

struct ClassListRecord {
  std::int32_t index;
  std::string mid;
  std::string display_name;
};

// Binds a class list (evaluation order) onto graph nodes. Throws UserError
// on unresolvable mids or duplicate evaluation indices.
EvalClassMap build_eval_map(const OntologyGraph& g, const std::vector<ClassListRecord>& records);

}  // namespace otag
