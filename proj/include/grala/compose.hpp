#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "grala/layout.hpp"
#include "grala/scene_graph.hpp"

namespace grala {

/// One text completion per request.
class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::string complete(const std::string& request) = 0;
};

/// Replays recorded replies in order and keeps the requests it was sent.
class ScriptedLLMClient final : public LLMClient {
 public:
  explicit ScriptedLLMClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  /// {"replies": [str, ...]} transcript file.
  static ScriptedLLMClient from_file(const std::string& path);

  std::string complete(const std::string& request) override;
  const std::vector<std::string>& requests() const { return requests_; }

 private:
  std::vector<std::string> replies_;
  std::vector<std::string> requests_;
};

extern const std::string_view kGraphTemplate;           // {prompt}
extern const std::string_view kClassificationTemplate;  // {nodes} {edges}
extern const std::string_view kLayoutTemplate;          // {nodes} {edges} {interactions}

/// Replaces each "{key}" of `values` in one pass; other braces are left alone.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::string describe_nodes(const SceneGraph& graph);
std::string describe_edges(const SceneGraph& graph);
std::string describe_interactions(const SceneGraph& graph);  // "none" without interaction edges

/// The client's reply could not be read; keeps the raw text.
class LLMReplyError : public ParseError {
 public:
  LLMReplyError(const std::string& what, std::string reply)
      : ParseError(what + "; reply was: " + reply), reply_(std::move(reply)) {}
  const std::string& reply() const { return reply_; }

 private:
  std::string reply_;
};

/// The composed layout failed validation.
class LayoutRejected : public ValidationError {
 public:
  LayoutRejected(const std::string& what, ValidationReport report) : ValidationError(what), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Three requests: graph, edge classification, layout. The result always
/// carries a layout that passed validate_layout.
SceneDocument compose_with_llm(const std::string& prompt, LLMClient& client);

}  // namespace grala
