#include "grala/scene_graph.hpp"

#include <algorithm>
#include <random>

#include "doctest.h"
#include "grala/error.hpp"
#include "test_util.hpp"

using namespace grala;

TEST_CASE("farm scene file parses into five nodes and four edges") {
  const auto doc = load_scene_file(testing::fixture("farm.json"));
  CHECK(doc.graph.nodes.size() == 5);
  CHECK(doc.graph.edges.size() == 4);
  REQUIRE(doc.layout.has_value());
  CHECK(doc.layout->size() == 5);
  const auto& riding = doc.graph.edges[0];
  CHECK(riding.label == "riding");
  CHECK(riding.kind == EdgeKind::interaction);
}

TEST_CASE("edges to missing nodes are rejected") {
  CHECK_THROWS_AS(load_scene_file(testing::fixture("bad_endpoint.json")), ValidationError);
}

TEST_CASE("malformed documents") {
  SUBCASE("empty node list") {
    CHECK_THROWS_AS(parse_scene_file(R"({"prompt": "x", "nodes": [], "edges": []})"), ValidationError);
  }
  SUBCASE("duplicate ids") {
    CHECK_THROWS_AS(parse_scene_file(R"({"prompt": "x", "nodes": [{"id": "a", "prompt": "a"},
                                        {"id": "a", "prompt": "b"}]})"),
                    ValidationError);
  }
  SUBCASE("syntax error carries a byte position") {
    try {
      parse_scene_file(R"({"prompt": "x", "nodes": [ )");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.position() != ParseError::npos);
    }
  }
  SUBCASE("blank prompt") {
    CHECK_THROWS_AS(parse_scene_file(R"({"prompt": "  ", "nodes": [{"id": "a", "prompt": "a"}]})"), ValidationError);
  }
  SUBCASE("unknown edge kind") {
    CHECK_THROWS_AS(parse_scene_file(R"({"prompt": "x", "nodes": [{"id": "a", "prompt": "a"},
       {"id": "b", "prompt": "b"}], "edges": [{"src": "a", "dst": "b", "label": "l", "kind": "magic"}]})"),
                    ParseError);
  }
}

TEST_CASE("farm partition") {
  const auto doc = load_scene_file(testing::fixture("farm.json"));
  const auto part = partition_nodes(doc.graph);
  CHECK(part.singles == std::vector<std::string>{"barn", "fence", "haystack"});
  REQUIRE(part.supernodes.size() == 1);
  CHECK(part.supernodes[0].first == "astronaut");
  CHECK(part.supernodes[0].second == "horse");
  CHECK(part.supernodes[0].edge.label == "riding");
  CHECK(supernode_prompt(doc.graph, part.supernodes[0]) == "an astronaut riding a horse");
}

TEST_CASE("graphs without interactions are all singles") {
  SceneGraph g{"p", {{"a", "a", "a"}, {"b", "b", "b"}}, {{"a", "b", "left of", EdgeKind::spatial}}};
  const auto part = partition_nodes(g);
  CHECK(part.singles.size() == 2);
  CHECK(part.supernodes.empty());
}

TEST_CASE("interaction chains are rejected") {
  SceneGraph g{"p",
               {{"a", "a", "a"}, {"b", "b", "b"}, {"c", "c", "c"}},
               {{"a", "b", "rides", EdgeKind::interaction}, {"b", "c", "holds", EdgeKind::interaction}}};
  CHECK_THROWS_AS(partition_nodes(g), ValidationError);
}

TEST_CASE("super-node prompt articles") {
  SceneGraph g{"p",
               {{"bear", "bear", "a bear"}, {"sax", "saxophone", "a saxophone"}, {"b1", "box", "a box"},
                {"b2", "box", "a box"}},
               {}};
  CHECK(supernode_prompt(g, {"bear", "sax", {"bear", "sax", "playing", EdgeKind::interaction}}) ==
        "a bear playing a saxophone");
  CHECK(supernode_prompt(g, {"b1", "b2", {"b1", "b2", "on", EdgeKind::interaction}}) == "a box on a box");
}

TEST_CASE("partition property: a partition, independent of input order") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    SceneGraph g;
    g.prompt = "random";
    const int n = 2 + static_cast<int>(rng() % 9);
    for (int i = 0; i < n; ++i) g.nodes.push_back({"n" + std::to_string(i), "obj", "an object"});
    // Disjoint interaction pairs plus random spatial edges.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int pairs = static_cast<int>(rng() % (n / 2 + 1));
    for (int p = 0; p < pairs; ++p)
      g.edges.push_back({g.nodes[order[2 * p]].id, g.nodes[order[2 * p + 1]].id, "touches", EdgeKind::interaction});
    for (int e = 0; e < n; ++e) {
      const int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
      if (a != b) g.edges.push_back({g.nodes[a].id, g.nodes[b].id, "near", EdgeKind::spatial});
    }
    const auto part = partition_nodes(g);
    CHECK(part.singles.size() + 2 * part.supernodes.size() == g.nodes.size());
    CHECK(part.supernodes.size() == static_cast<std::size_t>(pairs));

    auto shuffled = g;
    std::shuffle(shuffled.nodes.begin(), shuffled.nodes.end(), rng);
    std::shuffle(shuffled.edges.begin(), shuffled.edges.end(), rng);
    CHECK(partition_nodes(shuffled) == part);
  }
}

TEST_CASE("serialize then parse is the identity") {
  const auto doc = load_scene_file(testing::fixture("farm.json"));
  const auto again = parse_scene_file(serialize_scene(doc));
  CHECK(again.graph == doc.graph);
  CHECK(again.layout == doc.layout);
  CHECK(serialize_scene(again) == serialize_scene(doc));
}
