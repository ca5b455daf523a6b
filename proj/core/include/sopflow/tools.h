// Copyright 2026 The sopflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The tools agents can call. Every tool returns text; failures come back as
// "ToolError: ..." observations instead of exceptions. Only backend failures
// (BackendError, ScriptExhaustedError) escape ToolRegistry::invoke.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "sopflow/sandbox.h"
#include "sopflow/sop_program.h"

namespace sopflow::tools {

enum class ToolCategory { kObservability, kSopFlow, kAnalysis, kTerminal };
std::string_view tool_category_name(ToolCategory category);

struct ParamSpec {
  std::string name;
  std::string type;  // semantic type shown in prompts: "pod", "component", ...
  bool required = true;
  std::string description;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
  ToolCategory category = ToolCategory::kAnalysis;

  const ParamSpec* find_param(std::string_view name) const;
  // Tools a SopProgram may call: observability and analysis tools.
  bool callable_from_program() const {
    return category == ToolCategory::kObservability || category == ToolCategory::kAnalysis;
  }
};

using ArgMap = std::map<std::string, std::string, std::less<>>;

struct ToolCall {
  std::string tool;
  ArgMap args;

  // tool(a="x", b="y") with arguments in name order.
  std::string render() const;
  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

// Parses `tool(a="x", b=3)` or `tool()`. Bare words are accepted as values.
std::optional<ToolCall> parse_tool_call(std::string_view text);

struct RootCause {
  std::string location;
  std::string type;  // canonical FaultType name when it parses as one
  double confidence = 1.0;
};

struct SpeakReport {
  std::vector<RootCause> causes;
  std::string explanation;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kMaxRootCauses = 3;

// "loc:type[:confidence];loc:type" -> causes. Blank entries are skipped.
std::vector<RootCause> parse_causes(std::string_view text);
std::string format_causes(const std::vector<RootCause>& causes);
// Throws ValidationError for zero causes; keeps the three most confident
// (stable for ties) and records a warning when truncating.
SpeakReport speak(std::vector<RootCause> causes, std::string explanation);

using Payload = std::variant<std::monostate, kb::SopDoc, SopProgram, RunReport,
                             std::vector<kb::ScoredSop>, std::vector<kb::ScoredIncident>,
                             SpeakReport>;

struct ToolResult {
  std::string tool;
  std::string observation;
  bool success = true;
  std::string error;
  // Metric verdicts carry these; a SopProgram can branch on them.
  std::optional<bool> anomalous;
  std::optional<double> value;
  // Components (pods, nodes, services) the tool reports as abnormal.
  std::vector<std::string> flagged;
  Payload payload;
  bool terminal = false;
};

// Per-episode SOP flow state the flow tools read and update.
struct SopSession {
  std::string alert;
  std::vector<kb::ScoredSop> last_matches;
  std::optional<kb::SopDoc> current_sop;
  std::optional<SopProgram> program;
  std::optional<RunReport> last_run;
  std::string last_run_observation;
};

// Sends one prompt to the language model under a persona (code_agent,
// generate_sop). The agents layer supplies this so calls land in the
// transcript.
using AskFn = std::function<std::string(std::string_view persona, const std::string& prompt)>;

struct ToolContext {
  const sandbox::DataSource* source = nullptr;
  const sandbox::DetectorConfig* detector = nullptr;
  kb::KnowledgeBase* kb = nullptr;
  Embedder* embedder = nullptr;
  AskFn ask;
  SopSession* session = nullptr;
  std::size_t top_k = kb::kDefaultTopK;
  double threshold = kb::kDefaultThreshold;
};

class ToolRegistry {
 public:
  // All seventeen tools.
  static ToolRegistry standard();

  const std::vector<ToolSpec>& specs() const { return specs_; }
  const ToolSpec* find(std::string_view name) const;
  std::vector<std::string> names() const;

  // Empty when the call satisfies the schema, else a description of what is
  // wrong (unknown tool, missing or unknown argument).
  std::optional<std::string> check(const ToolCall& call) const;

  ToolResult invoke(const ToolCall& call, ToolContext& ctx) const;

  // name, category, description and parameters, one block per tool.
  std::string catalog_text() const;
  std::string catalog_json() const;

 private:
  std::vector<ToolSpec> specs_;
};

// Flow tools, also used directly by the agents and tests.
kb::SopDoc parse_generated_sop(std::string_view reply);
std::string generate_sop_prompt(std::string_view fault_info,
                                const std::vector<kb::ScoredSop>& examples);
std::string code_agent_prompt(const kb::SopDoc& sop, const ToolRegistry& registry);

// Throws GenerationParseError; adds the SOP to ctx.kb and makes it current.
kb::SopDoc generate_sop(std::string_view fault_info, std::optional<kb::SopDoc> parent,
                        ToolContext& ctx);
// Throws GenerationParseError or ProgramValidationError.
SopProgram generate_sop_code(const kb::SopDoc& sop, const ToolRegistry& registry,
                             ToolContext& ctx);

std::vector<std::string> validate_program(const SopProgram& program, const ToolRegistry& registry);
// Runs every statement; stops at the first failing one. Never throws for
// tool failures; they mark the report failed.
RunReport run_program(const SopProgram& program, const ToolRegistry& registry, ToolContext& ctx);
// Throws ProgramRuntimeError where run_program would report a failure.
RunReport run_program_or_throw(const SopProgram& program, const ToolRegistry& registry,
                               ToolContext& ctx);
std::string render_run_report(const RunReport& report);

// Table text shared by the *_analyze tools and run_kubectl_command.
std::string render_resource_table(const sandbox::ResourceTable& table);

}  // namespace sopflow::tools
