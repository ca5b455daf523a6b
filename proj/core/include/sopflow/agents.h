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

// The diagnosis episode: each step the MainAgent thinks, an action set is
// built from ActionAgent proposals plus flow rules, the MainAgent picks one
// entry, the tool runs, and ObAgent/JudgeAgent react to what came back.
//
// Prompts start with a header line "[ROLE <persona>] [STEP <n>]" (n counts
// from 1) so scripted replies can be keyed per persona and step.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "sopflow/sandbox.h"
#include "sopflow/tools.h"
#include "sopflow/transcript.h"

namespace sopflow::agents {

enum class Provenance { kActionAgent, kFlowRule, kJudgeRule, kMainAgent };
std::string_view provenance_name(Provenance p);

struct ActionCandidate {
  tools::ToolCall call;
  std::string rationale;
  Provenance provenance = Provenance::kActionAgent;
  int rule = 0;  // 1..8 for rule candidates
};

struct ActionSet {
  std::vector<ActionCandidate> candidates;
  std::size_t max_size = 5;

  const ActionCandidate* find(const tools::ToolCall& call) const;
};

// Table 5 switches; all on is the full system.
struct Ablations {
  bool sop_knowledge = true;
  bool sop_flow = true;
  bool action_set = true;
  bool action_agent = true;
  bool ob_agent = true;
  bool judge_agent = true;

  static const std::vector<std::string>& flag_names();
  // Throws ConfigError for an unknown name.
  void disable(std::string_view flag);
  bool enabled(std::string_view flag) const;
  // Flow rules R1-R7 apply only when both SOP knowledge and the flow are on;
  // R8 needs only SOP knowledge.
  bool flow_rules_on() const { return sop_knowledge && sop_flow; }
  bool flow_prompt_on() const { return sop_knowledge && sop_flow; }
  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct AgentConfig {
  std::size_t max_steps = 20;
  std::size_t action_set_size = 5;
  Ablations ablations;
  // Also ask the JudgeAgent after a successful run_sop with findings.
  bool judge_after_run_sop = false;
  std::size_t top_k = kb::kDefaultTopK;
  double threshold = kb::kDefaultThreshold;
  // Record backend request/response bodies in the transcript.
  bool log_wire = false;
};

struct Hypothesis {
  std::string type;
  std::string confidence;
};

struct JudgeVerdict {
  bool found = false;
  std::string summary;
  std::vector<tools::RootCause> causes;
};

// What the flow rules look at. Built from the episode state, or rebuilt from
// a transcript when replaying.
struct FlowContext {
  std::size_t step = 0;  // 0-based index of the step being planned
  std::string alert;
  std::optional<std::string> prev_tool;
  bool prev_success = false;
  std::size_t prev_hits = 0;
  std::string best_sop_id;     // top match_sop hit
  std::string current_sop_id;  // SOP the session is working on
  std::optional<JudgeVerdict> verdict;
  Ablations ablations;
};

// Rule candidates mandated for this context, highest fallback priority first:
// R7 > R5 > R4 > R3/R1 > R6 > R2 > R8.
std::vector<ActionCandidate> flow_rule_candidates(const FlowContext& ctx);

// Rule candidates first (priority order), then agent candidates not already
// present. Agent candidates are evicted from the end to respect max_size.
ActionSet apply_flow_rules(const FlowContext& ctx, const std::vector<ActionCandidate>& agent_candidates,
                           std::size_t max_size);

struct StepRecord {
  std::size_t step = 0;
  std::string thought;
  ActionSet action_set;
  std::optional<ActionCandidate> chosen;
  bool fallback = false;
  tools::ToolResult result;
};

struct DiagnosisResult {
  std::vector<std::string> locations;
  std::vector<std::string> types;
  std::string explanation;
  std::vector<std::string> path;
  std::size_t path_length = 0;
};

enum class Outcome { kCompleted, kBudgetExhausted, kAborted };
std::string_view outcome_name(Outcome outcome);
std::optional<Outcome> parse_outcome(std::string_view text);

struct EpisodeState {
  std::string scenario_id;
  std::string alert;
  std::vector<StepRecord> history;
  tools::SopSession session;
  std::vector<Hypothesis> hypotheses;
  std::optional<JudgeVerdict> verdict;
  std::size_t step_count = 0;
  std::size_t executed_actions = 0;
  std::vector<std::string> path;
  bool terminated = false;
  std::optional<DiagnosisResult> diagnosis;
  std::optional<Outcome> outcome;
  std::string abort_reason;
};

struct EpisodeResult {
  Outcome outcome = Outcome::kAborted;
  EpisodeState state;
  Transcript transcript;
};

// Reply parsers; exposed for tests.
std::vector<ActionCandidate> parse_action_reply(std::string_view reply, const tools::ToolRegistry& registry,
                                                std::size_t limit, std::vector<std::string>* dropped = nullptr);
std::optional<std::size_t> parse_selection(std::string_view reply);
std::vector<Hypothesis> parse_hypotheses(std::string_view reply);
JudgeVerdict parse_verdict(std::string_view reply);

// Text shown to the MainAgent and ActionAgent describing the SOP flow.
std::string_view sop_flow_prompt();

// One diagnosis run. The knowledge base is copied, so SOPs generated during
// the episode do not leak into other episodes.
class Episode {
 public:
  Episode(const sandbox::EpisodeScenario& scenario, const kb::KnowledgeBase& kb, llm::LlmBackend& backend,
          const sandbox::DetectorConfig& detector, AgentConfig config);
  Episode(const Episode&) = delete;
  Episode& operator=(const Episode&) = delete;

  const EpisodeState& state() const { return state_; }
  const Transcript& transcript() const { return transcript_; }
  bool done() const { return state_.terminated; }

  // One thought/action-set/action/observation step. Throws AbortedEpisode
  // after a backend failure survives one retry.
  void step();
  EpisodeResult run();

  // Agent personas, each one backend call.
  std::string main_thought();
  std::vector<ActionCandidate> action_agent_propose(const std::string& thought);
  std::vector<Hypothesis> ob_agent_classify(const tools::ToolResult& observation);
  JudgeVerdict judge_agent(std::string_view trigger);
  tools::SopProgram code_agent_generate(const kb::SopDoc& sop);

  FlowContext flow_context() const;

 private:
  std::string ask(std::string_view persona, const std::string& prompt);
  std::string history_text(std::size_t max_steps) const;
  bool speak_allowed() const;
  std::optional<ActionCandidate> fallback(const ActionSet& set, const FlowContext& ctx) const;
  void execute(StepRecord& record);
  void finish(Outcome outcome);

  sandbox::DataSource source_;
  kb::KnowledgeBase kb_;
  llm::LlmBackend& backend_;
  sandbox::DetectorConfig detector_;
  AgentConfig config_;
  tools::ToolRegistry registry_;
  tools::ToolContext ctx_;
  EpisodeState state_;
  Transcript transcript_;
};

EpisodeResult run_episode(const sandbox::EpisodeScenario& scenario, const kb::KnowledgeBase& kb,
                          llm::LlmBackend& backend, const sandbox::DetectorConfig& detector,
                          const AgentConfig& config);

}  // namespace sopflow::agents
