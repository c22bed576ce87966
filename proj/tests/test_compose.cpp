#include "grala/compose.hpp"

#include "doctest.h"
#include "grala/error.hpp"
#include "grala/io.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace grala;

namespace {

struct Transcript {
  std::string prompt;
  std::vector<std::string> replies;
};

Transcript transcript(const std::string& name) {
  const auto j = nlohmann::json::parse(read_text(testing::fixture(name)));
  return {j.at("prompt"), j.at("replies").get<std::vector<std::string>>()};
}

}  // namespace

TEST_CASE("farm transcript composes the farm graph") {
  const Transcript t = transcript("llm_farm.json");
  ScriptedLLMClient client(t.replies);
  const SceneDocument doc = compose_with_llm(t.prompt, client);
  const SceneDocument expected = load_scene_file(testing::fixture("farm.json"));
  CHECK(doc.graph == expected.graph);
  REQUIRE(doc.layout);
  CHECK(*doc.layout == *expected.layout);

  const Partition p = partition_nodes(doc.graph);
  CHECK(p.singles == std::vector<std::string>{"barn", "fence", "haystack"});
  REQUIRE(p.supernodes.size() == 1);
  CHECK(p.supernodes[0].first == "astronaut");
  CHECK(p.supernodes[0].edge.label == "riding");

  const auto& req = client.requests();
  REQUIRE(req.size() == 3);
  CHECK(req[0].find(t.prompt) != std::string::npos);
  CHECK(req[1].find("1. astronaut riding horse") != std::string::npos);
  CHECK(req[2].find("Interacting pairs: astronaut riding horse\n") != std::string::npos);
  CHECK(req[2].find("haystack (haystack: a haystack)") != std::string::npos);
  for (const auto& r : req)
    for (const char* slot : {"{prompt}", "{nodes}", "{edges}", "{interactions}"})
      CHECK(r.find(slot) == std::string::npos);
}

TEST_CASE("wizard transcript") {
  const Transcript t = transcript("llm_wizard.json");
  ScriptedLLMClient client(t.replies);
  const SceneDocument doc = compose_with_llm(t.prompt, client);
  CHECK(doc.graph.nodes.size() == 4);
  int interactions = 0;
  for (const auto& e : doc.graph.edges)
    if (e.kind == EdgeKind::interaction) {
      ++interactions;
      CHECK(e.label == "gazing into");
      CHECK(e.src == "wizard");
      CHECK(e.dst == "ball");
    }
  CHECK(interactions == 1);
}

TEST_CASE("reply errors keep the raw reply") {
  Transcript t = transcript("llm_farm.json");

  SUBCASE("missing layout section") {
    t.replies[2] = R"({"boxes": {}})";
    ScriptedLLMClient client(t.replies);
    try {
      compose_with_llm(t.prompt, client);
      FAIL("no error");
    } catch (const LLMReplyError& e) {
      CHECK(e.reply() == t.replies[2]);
      CHECK(std::string(e.what()).find("layout") != std::string::npos);
    }
  }
  SUBCASE("prose without JSON") {
    t.replies[0] = "I cannot draw a graph for this.";
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), LLMReplyError);
    CHECK(client.requests().size() == 1);
  }
  SUBCASE("wrong number of kinds") {
    t.replies[1] = R"({"kinds": ["spatial"]})";
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), LLMReplyError);
  }
  SUBCASE("unknown kind") {
    t.replies[1] = R"({"kinds": ["riding", "spatial", "spatial", "spatial"]})";
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), LLMReplyError);
  }
  SUBCASE("a box for a node the graph lacks") {
    auto j = nlohmann::json::parse(t.replies[2].substr(t.replies[2].find('{'), t.replies[2].rfind('}') - t.replies[2].find('{') + 1));
    j["layout"]["dog"] = {{"min", {0, 0, 0}}, {"max", {1, 1, 1}}};
    t.replies[2] = j.dump();
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), LLMReplyError);
  }
  SUBCASE("graph with a dangling edge is a validation error") {
    t.replies[0] = R"({"nodes": [{"id": "a", "name": "a", "prompt": "an a"}], "edges": [{"src": "a", "dst": "dog", "label": "near"}]})";
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), ValidationError);
  }
  SUBCASE("exhausted transcript") {
    t.replies.pop_back();
    ScriptedLLMClient client(t.replies);
    CHECK_THROWS_AS(compose_with_llm(t.prompt, client), ProviderError);
  }
}

TEST_CASE("invalid composed layout is rejected with its report") {
  Transcript t = transcript("llm_farm.json");
  auto j = nlohmann::json::parse(t.replies[2].substr(t.replies[2].find('{'), t.replies[2].rfind('}') - t.replies[2].find('{') + 1));
  j["layout"]["fence"] = {{"min", {-1.5, -0.5, 1.0}}, {"max", {1.5, 1.0, 1.2}}};
  t.replies[2] = j.dump();
  ScriptedLLMClient client(t.replies);
  try {
    compose_with_llm(t.prompt, client);
    FAIL("no error");
  } catch (const LayoutRejected& e) {
    REQUIRE(e.report().violations.size() == 1);
    CHECK(e.report().violations[0].rule == "floor");
  }
}

TEST_CASE("fill_template") {
  CHECK(fill_template("{a} and {\"k\": {a}} {b}", {{"a", "x{b}"}, {"b", "y"}}) == "x{b} and {\"k\": x{b}} y");
  CHECK(fill_template(kLayoutTemplate, {}).find("{\"layout\"") != std::string::npos);
}
