#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grala/box.hpp"

namespace grala {

enum class EdgeKind { spatial, interaction };

std::string_view to_string(EdgeKind kind);
EdgeKind parse_edge_kind(std::string_view text);

struct ObjectNode {
  std::string id;
  std::string name;
  std::string prompt;
  friend bool operator==(const ObjectNode&, const ObjectNode&) = default;
};

struct RelationEdge {
  std::string src;
  std::string dst;
  std::string label;
  EdgeKind kind = EdgeKind::spatial;
  friend bool operator==(const RelationEdge&, const RelationEdge&) = default;
};

struct SceneGraph {
  std::string prompt;
  std::vector<ObjectNode> nodes;
  std::vector<RelationEdge> edges;

  const ObjectNode* find(std::string_view id) const;
  const ObjectNode& node(std::string_view id) const;

  /// Throws ValidationError on an empty prompt, no nodes, duplicate ids,
  /// empty node prompts, self loops, or dangling edge endpoints.
  void validate() const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

/// An object-relation-object triplet optimized jointly.
struct SuperNode {
  std::string first;   // edge source
  std::string second;  // edge destination
  RelationEdge edge;
  friend bool operator==(const SuperNode&, const SuperNode&) = default;
};

struct Partition {
  std::vector<std::string> singles;  // sorted by id
  std::vector<SuperNode> supernodes; // sorted by first member id
  friend bool operator==(const Partition&, const Partition&) = default;
};

/// A parsed scene document: the graph plus the optional layout section.
struct SceneDocument {
  SceneGraph graph;
  std::optional<LayoutSet> layout;
};

/// Parses the JSON scene DSL. Throws ParseError (syntax, with byte position,
/// or structure) and ValidationError (graph invariants).
SceneDocument parse_scene_file(std::string_view document);
SceneDocument load_scene_file(const std::string& path);

/// Canonical JSON form; `parse_scene_file(serialize_scene(d))` reproduces `d`.
std::string serialize_scene(const SceneDocument& doc);

/// Splits nodes into singles and interaction pairs. Interaction components
/// with three or more members (or a pair joined by several interaction
/// edges) are rejected with ValidationError.
Partition partition_nodes(const SceneGraph& graph);

/// "a/an {src name} {label} a/an {dst name}".
std::string supernode_prompt(const SceneGraph& graph, const SuperNode& s);
std::string with_article(std::string_view noun);

/// Directory-safe id for a super-node loop ("first__second").
std::string supernode_id(const SuperNode& s);

}  // namespace grala
