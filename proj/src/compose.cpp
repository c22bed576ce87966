#include "grala/compose.hpp"

#include "grala/error.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"

namespace grala {

using nlohmann::json;

const std::string_view kGraphTemplate =
    "Build a scene graph for the scene \"{prompt}\". Leave the setting itself (ground, sky, room) out. "
    "Each object becomes a node with a lowercase id, a display name and a short prompt for that object alone. "
    "Connect all nodes with as few relation edges as possible; each edge has a source id, a target id and a "
    "relation label.\n"
    "Reply with a single JSON object:\n"
    "{\"nodes\": [{\"id\": ..., \"name\": ..., \"prompt\": ...}], \"edges\": [{\"src\": ..., \"dst\": ..., "
    "\"label\": ...}]}";

const std::string_view kClassificationTemplate =
    "Scene graph nodes: {nodes}\n"
    "Edges: {edges}\n"
    "Label every edge \"interaction\" if the two objects physically act on each other (riding, holding, "
    "playing) and \"spatial\" if the edge only places them relative to each other.\n"
    "Reply with a single JSON object listing the labels in edge order:\n"
    "{\"kinds\": [...]}";

const std::string_view kLayoutTemplate =
    "Scene graph nodes: {nodes}\n"
    "Edges: {edges}\n"
    "Interacting pairs: {interactions}\n"
    "Place one axis-aligned box per node. Units are meters, axes right-handed, y is up and the floor is y = 0. "
    "Every box rests on or above the floor and is thick along x, y and z. Sizes follow real objects without "
    "extreme ratios between boxes. Boxes of an interacting pair overlap partly and neither contains the other; "
    "all other boxes stay apart. Place later boxes relative to earlier ones.\n"
    "Reply with a single JSON object:\n"
    "{\"layout\": {\"<id>\": {\"min\": [x, y, z], \"max\": [x, y, z]}}}";

ScriptedLLMClient ScriptedLLMClient::from_file(const std::string& path) {
  try {
    const json j = json::parse(read_text(path));
    return ScriptedLLMClient(j.at("replies").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string ScriptedLLMClient::complete(const std::string& request) {
  if (requests_.size() >= replies_.size())
    throw ProviderError("llm transcript exhausted after " + std::to_string(replies_.size()) + " replies");
  requests_.push_back(request);
  return replies_[requests_.size() - 1];
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool hit = false;
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto v = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (v != values.end()) {
          out += v->second;
          i = close + 1;
          hit = true;
        }
      }
    }
    if (!hit) out += tmpl[i++];
  }
  return out;
}

std::string describe_nodes(const SceneGraph& g) {
  std::string s;
  for (const auto& n : g.nodes) s += (s.empty() ? "" : "; ") + n.id + " (" + n.name + ": " + n.prompt + ")";
  return s;
}

std::string describe_edges(const SceneGraph& g) {
  std::string s;
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    s += (i ? "; " : "") + std::to_string(i + 1) + ". " + g.edges[i].src + " " + g.edges[i].label + " " +
         g.edges[i].dst;
  return s.empty() ? "none" : s;
}

std::string describe_interactions(const SceneGraph& g) {
  std::string s;
  for (const auto& e : g.edges)
    if (e.kind == EdgeKind::interaction) s += (s.empty() ? "" : "; ") + e.src + " " + e.label + " " + e.dst;
  return s.empty() ? "none" : s;
}

namespace {

json reply_object(const std::string& reply, const char* stage) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw LLMReplyError(std::string(stage) + " reply holds no JSON object", reply);
  try {
    return json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw LLMReplyError(std::string(stage) + " reply: " + e.what(), reply);
  }
}

const json& require(const json& j, const char* key, const char* stage, const std::string& reply) {
  if (!j.is_object() || !j.contains(key))
    throw LLMReplyError(std::string(stage) + " reply lacks \"" + key + "\"", reply);
  return j.at(key);
}

}  // namespace

SceneDocument compose_with_llm(const std::string& prompt, LLMClient& client) {
  const std::string graph_reply = client.complete(fill_template(kGraphTemplate, {{"prompt", prompt}}));
  const json g = reply_object(graph_reply, "graph");
  json doc{{"prompt", prompt},
           {"nodes", require(g, "nodes", "graph", graph_reply)},
           {"edges", require(g, "edges", "graph", graph_reply)}};
  if (!doc["edges"].is_array()) throw LLMReplyError("graph reply: \"edges\" is not a list", graph_reply);
  for (auto& e : doc["edges"]) {
    if (!e.is_object()) throw LLMReplyError("graph reply: malformed edge", graph_reply);
    e["kind"] = "spatial";
  }
  SceneDocument out;
  try {
    out = parse_scene_file(doc.dump());
  } catch (const ParseError& e) {
    throw LLMReplyError(e.what(), graph_reply);
  }

  const std::string kinds_reply = client.complete(fill_template(
      kClassificationTemplate, {{"nodes", describe_nodes(out.graph)}, {"edges", describe_edges(out.graph)}}));
  const json kinds_obj = reply_object(kinds_reply, "classification");
  const json& kinds = require(kinds_obj, "kinds", "classification", kinds_reply);
  if (!kinds.is_array() || kinds.size() != out.graph.edges.size())
    throw LLMReplyError("classification reply must list one kind per edge (" +
                            std::to_string(out.graph.edges.size()) + ")",
                        kinds_reply);
  try {
    for (std::size_t i = 0; i < kinds.size(); ++i) out.graph.edges[i].kind = parse_edge_kind(kinds[i].get<std::string>());
  } catch (const json::exception& e) {
    throw LLMReplyError(std::string("classification reply: ") + e.what(), kinds_reply);
  } catch (const Error& e) {
    throw LLMReplyError(std::string("classification reply: ") + e.what(), kinds_reply);
  }

  const std::string layout_reply = client.complete(fill_template(kLayoutTemplate, {{"nodes", describe_nodes(out.graph)},
                                                                                   {"edges", describe_edges(out.graph)},
                                                                                   {"interactions", describe_interactions(out.graph)}}));
  const json layout_obj = reply_object(layout_reply, "layout");
  const json& boxes = require(layout_obj, "layout", "layout", layout_reply);
  LayoutSet layout;
  try {
    if (!boxes.is_object()) throw LLMReplyError("layout reply: \"layout\" is not an object", layout_reply);
    layout = layout_from_json(boxes);
  } catch (const json::exception& e) {
    throw LLMReplyError(std::string("layout reply: ") + e.what(), layout_reply);
  }
  for (const auto& [id, box] : layout)
    if (!out.graph.find(id)) throw LLMReplyError("layout reply names unknown node '" + id + "'", layout_reply);
  for (const auto& n : out.graph.nodes)
    if (!layout.count(n.id)) throw LLMReplyError("layout reply has no box for node '" + n.id + "'", layout_reply);
  ValidationReport report = validate_layout(layout, out.graph);
  if (!report.ok())
    throw LayoutRejected("composed layout failed validation (" + std::to_string(report.violations.size()) +
                             " violations)",
                         std::move(report));
  out.layout = std::move(layout);
  return out;
}

}  // namespace grala
