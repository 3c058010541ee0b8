#include "otag/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "otag/errors.hpp"

namespace otag {

namespace {

std::uint8_t parse_restrictions(const nlohmann::json& arr, const std::string& id) {
  std::uint8_t mask = 0;
  for (const auto& r : arr) {
    const std::string s = r.get<std::string>();
    if (s == "abstract") {
      mask |= static_cast<std::uint8_t>(Restriction::kAbstract);
    } else if (s == "blacklist") {
      mask |= static_cast<std::uint8_t>(Restriction::kBlacklist);
    } else {
      throw UserError("ontology: unknown restriction \"" + s + "\" on node " + id);
    }
  }
  return mask;
}

}  // namespace

std::int32_t OntologyGraph::index_of(std::string_view id) const {
  auto it = id_to_index_.find(std::string(id));
  return it == id_to_index_.end() ? -1 : it->second;
}

OntologyGraph parse_ontology(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UserError("ontology: JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_array()) throw UserError("ontology: expected a top-level JSON array");

  OntologyGraph g;
  g.nodes.reserve(doc.size());
  for (const auto& rec : doc) {
    if (!rec.is_object()) throw UserError("ontology: array entries must be objects");
    OntologyNode node;
    if (!rec.contains("id") || !rec["id"].is_string())
      throw UserError("ontology: record missing string \"id\"");
    node.id = rec["id"].get<std::string>();
    if (node.id.empty()) throw UserError("ontology: empty id");
    if (!rec.contains("name") || !rec["name"].is_string())
      throw UserError("ontology: node " + node.id + " missing string \"name\"");
    node.name = rec["name"].get<std::string>();
    if (rec.contains("description") && rec["description"].is_string())
      node.description = rec["description"].get<std::string>();
    if (!rec.contains("child_ids") || !rec["child_ids"].is_array())
      throw UserError("ontology: node " + node.id + " missing array \"child_ids\"");
    for (const auto& c : rec["child_ids"]) node.child_ids.push_back(c.get<std::string>());
    if (rec.contains("restrictions"))
      node.restrictions = parse_restrictions(rec["restrictions"], node.id);

    auto [it, inserted] = g.id_to_index_.emplace(node.id, static_cast<std::int32_t>(g.nodes.size()));
    if (!inserted) throw UserError("ontology: duplicate id " + node.id);
    g.nodes.push_back(std::move(node));
  }

  const auto n = static_cast<std::int32_t>(g.nodes.size());
  g.children.assign(n, {});
  g.parents.assign(n, {});
  std::vector<std::string> missing;
  for (std::int32_t i = 0; i < n; ++i) {
    for (const auto& cid : g.nodes[i].child_ids) {
      auto it = g.id_to_index_.find(cid);
      if (it == g.id_to_index_.end()) {
        missing.push_back(g.nodes[i].id + " -> " + cid);
        continue;
      }
      g.children[i].push_back(it->second);
      g.parents[it->second].push_back(i);
    }
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "ontology: child_ids referencing unknown ids:";
    for (const auto& m : missing) os << ' ' << m << ';';
    throw UserError(os.str());
  }
  for (std::int32_t i = 0; i < n; ++i)
    if (g.parents[i].empty()) g.roots.push_back(i);
  if (n > 0 && g.roots.empty())
    throw UserError("ontology: no root nodes (cyclic parent structure)");
  return g;
}

OntologyGraph load_ontology(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open ontology file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ontology(buf.str());
}

OntologyGraph attach_virtual_root(const OntologyGraph& g) {
  if (g.has_virtual_root)
    throw std::invalid_argument("attach_virtual_root: graph already has one");
  OntologyGraph out = g;
  out.has_virtual_root = true;
  return out;
}

std::vector<std::int32_t> shortest_path_to_root(const OntologyGraph& g, std::int32_t node) {
  if (node < 0 || node >= static_cast<std::int32_t>(g.size()))
    throw std::out_of_range("shortest_path_to_root: node index out of range");

  // Upward BFS: height[i] = parent-edge distance from i to the nearest root.
  constexpr std::int32_t kUnset = std::numeric_limits<std::int32_t>::max();
  std::vector<std::int32_t> height(g.size(), kUnset);
  std::queue<std::int32_t> q;
  for (auto r : g.roots) {
    height[r] = 0;
    q.push(r);
  }
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto c : g.children[u]) {
      if (height[c] == kUnset) {
        height[c] = height[u] + 1;
        q.push(c);
      }
    }
  }
  if (height[node] == kUnset)
    throw std::invalid_argument("shortest_path_to_root: node unreachable from any root");

  // Walk up, always through the smallest-index parent that stays on a
  // shortest route. Reading the chain node->root this is the
  // lexicographically smallest optimal parent sequence.
  std::vector<std::int32_t> path{node};
  std::int32_t cur = node;
  while (height[cur] > 0) {
    std::int32_t best = -1;
    for (auto p : g.parents[cur]) {
      if (height[p] == height[cur] - 1 && (best == -1 || p < best)) best = p;
    }
    path.push_back(best);
    cur = best;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

EvalClassMap build_eval_map(const OntologyGraph& g, const std::vector<ClassListRecord>& records) {
  EvalClassMap map;
  map.entries.reserve(records.size());
  std::vector<bool> seen(records.size(), false);
  std::unordered_map<std::string, bool> seen_mid;
  for (const auto& rec : records) {
    auto idx = g.index_of(rec.mid);
    if (idx < 0) throw UserError("class list: unknown machine id " + rec.mid);
    if (!seen_mid.emplace(rec.mid, true).second)
      throw UserError("class list: duplicate machine id " + rec.mid);
    if (rec.index < 0 || rec.index >= static_cast<std::int32_t>(records.size()))
      throw UserError("class list: evaluation index " + std::to_string(rec.index) +
                      " outside 0.." + std::to_string(records.size() - 1));
    if (seen[rec.index])
      throw UserError("class list: duplicate evaluation index " + std::to_string(rec.index));
    seen[rec.index] = true;
    map.entries.push_back({rec.index, idx, rec.mid, rec.display_name});
  }
  std::sort(map.entries.begin(), map.entries.end(),
            [](const auto& a, const auto& b) { return a.eval_index < b.eval_index; });
  return map;
}

}  // namespace otag
