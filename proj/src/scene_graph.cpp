#include "grala/scene_graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "grala/error.hpp"
#include "grala/json_util.hpp"
#include "json.hpp"

namespace grala {

using nlohmann::json;

std::string_view to_string(EdgeKind kind) { return kind == EdgeKind::interaction ? "interaction" : "spatial"; }

EdgeKind parse_edge_kind(std::string_view text) {
  if (text == "spatial") return EdgeKind::spatial;
  if (text == "interaction") return EdgeKind::interaction;
  throw ParseError("unknown edge kind '" + std::string(text) + "'");
}

const ObjectNode* SceneGraph::find(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

const ObjectNode& SceneGraph::node(std::string_view id) const {
  if (const auto* n = find(id)) return *n;
  throw ValidationError("unknown node id '" + std::string(id) + "'");
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void SceneGraph::validate() const {
  if (blank(prompt)) throw ValidationError("scene prompt is empty");
  if (nodes.empty()) throw ValidationError("scene graph has no nodes");
  std::set<std::string_view> ids;
  for (const auto& n : nodes) {
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (!ids.insert(n.id).second) throw ValidationError("duplicate node id '" + n.id + "'");
    if (blank(n.prompt)) throw ValidationError("node '" + n.id + "' has an empty prompt");
  }
  for (const auto& e : edges) {
    for (const auto* end : {&e.src, &e.dst})
      if (!ids.contains(*end))
        throw ValidationError("edge '" + e.label + "' references unknown node '" + *end + "'");
    if (e.src == e.dst) throw ValidationError("edge '" + e.label + "' is a self loop on '" + e.src + "'");
  }
}

SceneDocument parse_scene_file(std::string_view document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene syntax error: ") + e.what(), e.byte);
  }

  SceneDocument doc;
  try {
    doc.graph.prompt = j.at("prompt").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      ObjectNode node{n.at("id").get<std::string>(), n.value("name", std::string{}), n.at("prompt").get<std::string>()};
      if (node.name.empty()) node.name = node.id;
      doc.graph.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.value("edges", json::array())) {
      doc.graph.edges.push_back({e.at("src").get<std::string>(), e.at("dst").get<std::string>(),
                                 e.value("label", std::string{}), parse_edge_kind(e.at("kind").get<std::string>())});
    }
    if (j.contains("layout")) doc.layout = layout_from_json(j.at("layout"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("scene structure error: ") + e.what());
  }
  doc.graph.validate();
  if (doc.layout) {
    for (const auto& [id, box] : *doc.layout)
      if (!doc.graph.find(id)) throw ValidationError("layout box for unknown node '" + id + "'");
  }
  return doc;
}

SceneDocument load_scene_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scene file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_file(ss.str());
}

std::string serialize_scene(const SceneDocument& doc) {
  json j;
  j["prompt"] = doc.graph.prompt;
  j["nodes"] = json::array();
  for (const auto& n : doc.graph.nodes) j["nodes"].push_back({{"id", n.id}, {"name", n.name}, {"prompt", n.prompt}});
  j["edges"] = json::array();
  for (const auto& e : doc.graph.edges)
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"label", e.label}, {"kind", std::string(to_string(e.kind))}});
  if (doc.layout) j["layout"] = layout_to_json(*doc.layout);
  return j.dump(2) + "\n";
}

Partition partition_nodes(const SceneGraph& graph) {
  graph.validate();

  // Union-find over the interaction subgraph.
  std::map<std::string, std::string> parent;
  for (const auto& n : graph.nodes) parent[n.id] = n.id;
  auto root = [&](std::string id) {
    while (parent[id] != id) id = parent[id];
    return id;
  };
  std::vector<const RelationEdge*> interactions;
  for (const auto& e : graph.edges) {
    if (e.kind != EdgeKind::interaction) continue;
    interactions.push_back(&e);
    const auto a = root(e.src), b = root(e.dst);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  std::map<std::string, std::vector<std::string>> components;
  for (const auto& n : graph.nodes) components[root(n.id)].push_back(n.id);

  Partition out;
  for (auto& [r, members] : components) {
    std::sort(members.begin(), members.end());
    if (members.size() == 1) {
      out.singles.push_back(members.front());
      continue;
    }
    if (members.size() > 2) {
      std::string list;
      for (const auto& m : members) list += (list.empty() ? "" : ", ") + m;
      throw ValidationError("unsupported interaction chain of " + std::to_string(members.size()) + " nodes: " + list);
    }
    std::vector<const RelationEdge*> edges;
    for (const auto* e : interactions)
      if (root(e->src) == r) edges.push_back(e);
    if (edges.size() != 1)
      throw ValidationError("unsupported interaction chain: " + members[0] + " and " + members[1] + " share " +
                            std::to_string(edges.size()) + " interaction edges");
    out.supernodes.push_back({edges[0]->src, edges[0]->dst, *edges[0]});
  }
  std::sort(out.singles.begin(), out.singles.end());
  std::sort(out.supernodes.begin(), out.supernodes.end(), [](const SuperNode& a, const SuperNode& b) {
    return std::min(a.first, a.second) < std::min(b.first, b.second);
  });
  return out;
}

std::string with_article(std::string_view noun) {
  const bool vowel =
      !noun.empty() && std::string_view("aeiouAEIOU").find(noun.front()) != std::string_view::npos;
  return std::string(vowel ? "an " : "a ") + std::string(noun);
}

std::string supernode_prompt(const SceneGraph& graph, const SuperNode& s) {
  return with_article(graph.node(s.first).name) + " " + s.edge.label + " " + with_article(graph.node(s.second).name);
}

std::string supernode_id(const SuperNode& s) { return s.first + "__" + s.second; }

}  // namespace grala
