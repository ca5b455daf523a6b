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

#include "sopflow/agents.h"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::agents {

using ojson = nlohmann::ordered_json;
using tools::ToolCall;

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kActionAgent: return "action_agent";
    case Provenance::kFlowRule: return "flow_rule";
    case Provenance::kJudgeRule: return "judge_rule";
    case Provenance::kMainAgent: return "main_agent";
  }
  return "?";
}

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::kCompleted: return "completed";
    case Outcome::kBudgetExhausted: return "budget_exhausted";
    case Outcome::kAborted: return "aborted";
  }
  return "?";
}

std::optional<Outcome> parse_outcome(std::string_view text) {
  for (auto o : {Outcome::kCompleted, Outcome::kBudgetExhausted, Outcome::kAborted}) {
    if (outcome_name(o) == text) return o;
  }
  return std::nullopt;
}

const ActionCandidate* ActionSet::find(const ToolCall& call) const {
  for (const auto& c : candidates) {
    if (c.call == call) return &c;
  }
  return nullptr;
}

const std::vector<std::string>& Ablations::flag_names() {
  static const std::vector<std::string> names = {"sop_knowledge", "sop_flow", "action_set",
                                                 "action_agent",  "ob_agent", "judge_agent"};
  return names;
}

namespace {

bool* flag_ptr(Ablations& a, std::string_view flag) {
  if (flag == "sop_knowledge") return &a.sop_knowledge;
  if (flag == "sop_flow") return &a.sop_flow;
  if (flag == "action_set") return &a.action_set;
  if (flag == "action_agent") return &a.action_agent;
  if (flag == "ob_agent") return &a.ob_agent;
  if (flag == "judge_agent") return &a.judge_agent;
  return nullptr;
}

}  // namespace

void Ablations::disable(std::string_view flag) {
  auto* p = flag_ptr(*this, flag);
  if (!p) {
    throw ConfigError(fmt::format("unknown ablation flag '{}'; known: {}", flag, fmt::join(flag_names(), ", ")));
  }
  *p = false;
}

bool Ablations::enabled(std::string_view flag) const {
  auto copy = *this;
  auto* p = flag_ptr(copy, flag);
  if (!p) throw ConfigError(fmt::format("unknown ablation flag '{}'", flag));
  return *p;
}

// ---------------------------------------------------------------------------
// Flow rules

std::vector<ActionCandidate> flow_rule_candidates(const FlowContext& ctx) {
  std::vector<ActionCandidate> out;
  auto add = [&](int rule, Provenance provenance, ToolCall call, std::string why) {
    for (const auto& c : out) {
      if (c.call == call) return;
    }
    out.push_back({std::move(call), std::move(why), provenance, rule});
  };
  auto sop_arg = [](const std::string& id) {
    tools::ArgMap args;
    if (!id.empty()) args["sop"] = id;
    return args;
  };
  if (ctx.ablations.flow_rules_on()) {
    const auto& prev = ctx.prev_tool;
    if (ctx.verdict && ctx.verdict->found && !ctx.verdict->causes.empty()) {
      tools::ArgMap args{{"causes", tools::format_causes(ctx.verdict->causes)}};
      if (!ctx.verdict->summary.empty()) args["explanation"] = ctx.verdict->summary;
      add(7, Provenance::kJudgeRule, {"Speak", args}, "JudgeAgent found the root cause");
    }
    if ((prev == "generate_sop_code" || prev == "run_sop") && !ctx.prev_success) {
      add(5, Provenance::kFlowRule, {"generate_sop_code", sop_arg(ctx.current_sop_id)},
          "the SOP program failed; generate it again");
    }
    if (prev == "generate_sop_code" && ctx.prev_success) {
      add(4, Provenance::kFlowRule, {"run_sop", {}}, "a valid SOP program is ready to run");
    }
    if (prev == "generate_sop" && ctx.prev_success) {
      add(3, Provenance::kFlowRule, {"generate_sop_code", sop_arg(ctx.current_sop_id)},
          "convert the new SOP into a program");
    }
    if (prev == "match_sop" && ctx.prev_success && ctx.prev_hits > 0) {
      add(1, Provenance::kFlowRule, {"generate_sop_code", sop_arg(ctx.best_sop_id)},
          "convert the best matching SOP into a program");
    }
    if (prev == "run_sop" && ctx.prev_success) {
      add(6, Provenance::kFlowRule, {"match_observation", {}}, "recall historical incidents like this observation");
    }
    if (prev == "match_sop" && ctx.prev_success && ctx.prev_hits == 0) {
      add(2, Provenance::kFlowRule, {"generate_sop", {{"fault_info", ctx.alert}}},
          "no SOP matched; write a new one");
    }
  }
  if (ctx.ablations.sop_knowledge && ctx.step == 0) {
    add(8, Provenance::kFlowRule, {"match_sop", {{"query", ctx.alert}}}, "find SOPs for the incident");
  }
  return out;
}

ActionSet apply_flow_rules(const FlowContext& ctx, const std::vector<ActionCandidate>& agent_candidates,
                           std::size_t max_size) {
  ActionSet set;
  set.max_size = max_size;
  set.candidates = flow_rule_candidates(ctx);
  for (const auto& c : agent_candidates) {
    if (!set.find(c.call)) set.candidates.push_back(c);
  }
  auto protected_candidate = [](const ActionCandidate& c) {
    return c.provenance == Provenance::kFlowRule || c.provenance == Provenance::kJudgeRule;
  };
  while (set.candidates.size() > max_size) {
    auto it = std::find_if(set.candidates.rbegin(), set.candidates.rend(),
                           [&](const ActionCandidate& c) { return !protected_candidate(c); });
    if (it == set.candidates.rend()) break;
    set.candidates.erase(std::next(it).base());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

std::string strip_list_marker(std::string_view line) {
  auto t = trim(line);
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) return trim(std::string_view(t).substr(i + 1));
  if (!t.empty() && (t[0] == '-' || t[0] == '*')) return trim(std::string_view(t).substr(1));
  return t;
}

// Length of the leading `tool(...)` text, honouring quotes; npos if unbalanced.
std::size_t call_extent(std::string_view text) {
  auto open = text.find('(');
  if (open == std::string_view::npos) return std::string_view::npos;
  char quote = 0;
  for (std::size_t i = open + 1; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == ')') {
      return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<ActionCandidate> parse_action_reply(std::string_view reply, const tools::ToolRegistry& registry,
                                                std::size_t limit, std::vector<std::string>* dropped) {
  std::vector<ActionCandidate> out;
  for (const auto& raw : split(reply, '\n')) {
    auto line = strip_list_marker(raw);
    if (line.empty() || iequals(line, "NONE")) continue;
    auto end = call_extent(line);
    std::optional<ToolCall> call;
    if (end != std::string_view::npos) call = tools::parse_tool_call(std::string_view(line).substr(0, end));
    if (!call) {
      if (dropped) dropped->push_back(fmt::format("unparseable proposal '{}'", line));
      continue;
    }
    if (auto problem = registry.check(*call)) {
      if (dropped) dropped->push_back(fmt::format("invalid proposal '{}': {}", line, *problem));
      continue;
    }
    auto rationale = trim(std::string_view(line).substr(end));
    while (!rationale.empty() && (rationale[0] == '|' || rationale[0] == ':' || rationale[0] == '-')) {
      rationale = trim(std::string_view(rationale).substr(1));
    }
    bool duplicate = std::any_of(out.begin(), out.end(), [&](const ActionCandidate& c) { return c.call == *call; });
    if (duplicate) continue;
    if (out.size() == limit) {
      if (dropped) dropped->push_back(fmt::format("proposal beyond the limit of {} '{}'", limit, line));
      continue;
    }
    out.push_back({*call, rationale, Provenance::kActionAgent, 0});
  }
  return out;
}

std::optional<std::size_t> parse_selection(std::string_view reply) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i > 6) return std::nullopt;
    return static_cast<std::size_t>(std::stoul(std::string(reply.substr(i, j - i))));
  }
  return std::nullopt;
}

std::vector<Hypothesis> parse_hypotheses(std::string_view reply) {
  std::vector<Hypothesis> out;
  for (const auto& raw : split(reply, '\n')) {
    auto line = strip_list_marker(raw);
    if (!starts_with_ci(line, "type:")) continue;
    auto rest = trim(std::string_view(line).substr(5));
    Hypothesis h;
    auto paren = rest.find('(');
    if (paren != std::string::npos) {
      auto close = rest.find(')', paren);
      h.confidence = trim(std::string_view(rest).substr(paren + 1, close == std::string::npos ? std::string::npos
                                                                                              : close - paren - 1));
      rest = trim(std::string_view(rest).substr(0, paren));
    }
    if (rest.empty()) continue;
    auto parsed = sandbox::parse_fault_type(rest);
    h.type = parsed ? std::string(sandbox::fault_type_name(*parsed)) : rest;
    out.push_back(std::move(h));
    if (out.size() == 3) break;
  }
  return out;
}

JudgeVerdict parse_verdict(std::string_view reply) {
  JudgeVerdict v;
  bool not_found = false;
  for (const auto& raw : split(reply, '\n')) {
    auto line = trim(raw);
    if (starts_with_ci(line, "NOT FOUND")) {
      not_found = true;
    } else if (starts_with_ci(line, "SUMMARY:")) {
      v.summary = trim(std::string_view(line).substr(8));
    } else if (starts_with_ci(line, "FOUND:")) {
      tools::RootCause cause;
      for (const auto& word : split(std::string_view(line).substr(6), ' ')) {
        auto eq = word.find('=');
        if (eq == std::string::npos) continue;
        auto key = to_lower(trim(std::string_view(word).substr(0, eq)));
        auto value = trim(std::string_view(word).substr(eq + 1));
        if (key == "location" || key == "pod" || key == "node" || key == "service" || key == "edge" ||
            key == "component") {
          cause.location = value;
        } else if (key == "type") {
          auto parsed = sandbox::parse_fault_type(value);
          cause.type = parsed ? std::string(sandbox::fault_type_name(*parsed)) : value;
        }
      }
      if (!cause.location.empty() && v.causes.size() < tools::kMaxRootCauses) v.causes.push_back(std::move(cause));
    }
  }
  v.found = !not_found && !v.causes.empty();
  if (!v.found) v.causes.clear();
  return v;
}

std::string_view sop_flow_prompt() {
  static const std::string text =
      "SOP flow:\n"
      "1. Start with match_sop on the fault information to find the relevant SOPs.\n"
      "2. If no SOP matches, write one with generate_sop.\n"
      "3. Turn the chosen SOP into a program with generate_sop_code.\n"
      "4. Execute the program with run_sop. If generating or running the program fails, call generate_sop_code "
      "again.\n"
      "5. After run_sop, call match_observation to recall similar historical incidents; the ObAgent then suggests "
      "fault types.\n"
      "6. If the observation points at a more specific fault, match or generate a more specific SOP and repeat.\n"
      "7. When the JudgeAgent confirms the root cause, report it with Speak.\n"
      "Other tools may be used at any point to gather evidence.\n";
  return text;
}

// ---------------------------------------------------------------------------
// Episode

namespace {

void add_record(Transcript& t, std::string_view kind, std::size_t step, ojson fields) {
  ojson r;
  r["seq"] = t.size();
  r["step"] = step;
  r["kind"] = kind;
  for (auto& [k, v] : fields.items()) r[k] = v;
  t.append(r.dump());
}

ojson candidate_json(const ActionCandidate& c, std::size_t index) {
  ojson j;
  j["index"] = index;
  j["call"] = c.call.render();
  j["tool"] = c.call.tool;
  j["provenance"] = provenance_name(c.provenance);
  if (c.rule) j["rule"] = fmt::format("R{}", c.rule);
  j["rationale"] = c.rationale;
  return j;
}

std::string clip_line(std::string_view text, std::size_t n) {
  auto line = text.substr(0, text.find('\n'));
  if (line.size() <= n) return std::string(line);
  return std::string(line.substr(0, n)) + "...";
}

std::string fault_type_list() {
  std::vector<std::string> names;
  for (auto t : sandbox::kAllFaultTypes) names.emplace_back(sandbox::fault_type_name(t));
  return fmt::format("{}", fmt::join(names, ", "));
}

}  // namespace

Episode::Episode(const sandbox::EpisodeScenario& scenario, const kb::KnowledgeBase& kb, llm::LlmBackend& backend,
                 const sandbox::DetectorConfig& detector, AgentConfig config)
    : source_(scenario),
      kb_(kb),
      backend_(backend),
      detector_(detector),
      config_(std::move(config)),
      registry_(tools::ToolRegistry::standard()) {
  if (config_.max_steps == 0) throw ConfigError("max_steps must be at least 1");
  if (config_.action_set_size < 3) {
    throw ConfigError("action_set_size must be at least 3 so rule candidates always fit");
  }
  if (!config_.ablations.sop_knowledge) kb_.clear_sops();
  state_.scenario_id = scenario.id;
  state_.alert = sandbox::render_alert(source_, detector_);
  state_.session.alert = state_.alert;
  ctx_.source = &source_;
  ctx_.detector = &detector_;
  ctx_.kb = &kb_;
  ctx_.embedder = &backend_;
  ctx_.session = &state_.session;
  ctx_.top_k = config_.top_k;
  ctx_.threshold = config_.threshold;
  ctx_.ask = [this](std::string_view persona, const std::string& prompt) { return ask(persona, prompt); };

  ojson header;
  header["scenario"] = scenario.id;
  ojson flags;
  for (const auto& name : Ablations::flag_names()) flags[name] = config_.ablations.enabled(name) ? "on" : "off";
  header["ablations"] = flags;
  header["max_steps"] = config_.max_steps;
  header["action_set_size"] = config_.action_set_size;
  header["judge_after_run_sop"] = config_.judge_after_run_sop;
  header["top_k"] = config_.top_k;
  header["threshold"] = config_.threshold;
  header["kb"] = {{"sops", kb_.sop_count()}, {"incidents", kb_.incident_count()}};
  add_record(transcript_, "episode", 0, header);
  add_record(transcript_, "alert", 0, {{"text", state_.alert}});
}

namespace {

std::string system_prompt(std::string_view persona, const tools::ToolRegistry& registry, std::size_t set_size) {
  if (persona == "main_thought") {
    return "You are the MainAgent, an SRE diagnosing an incident in a Kubernetes microservice system. "
           "Reason briefly about what is known and what to check next.";
  }
  if (persona == "action_agent") {
    return fmt::format("You are the ActionAgent. Propose up to {} next actions, one per line, as\n"
                       "- tool(arg=\"value\") | rationale\nReply NONE when you have nothing to add.\nTools:\n{}",
                       set_size, registry.catalog_text());
  }
  if (persona == "main_select") {
    return "You are the MainAgent. Choose exactly one action from the numbered action set and reply with its "
           "number only.";
  }
  if (persona == "main_act") {
    return fmt::format("You are the MainAgent. Reply with exactly one tool call, as tool(arg=\"value\").\nTools:\n{}",
                       registry.catalog_text());
  }
  if (persona == "ob_agent") {
    return "You are the ObAgent. From an observation and similar historical incidents, list up to 3 likely fault "
           "types, one per line, as\ntype: <fault type> (<confidence>)";
  }
  if (persona == "judge_agent") {
    return "You are the JudgeAgent. Decide whether the root cause has been identified. Reply with one line per "
           "cause (at most 3)\nFOUND: location=<component> type=<fault type>\nfollowed by\nSUMMARY: <one "
           "sentence>\nor reply NOT FOUND.";
  }
  if (persona == "code_agent") {
    return fmt::format("You are the CodeAgent. You know every tool and turn SOPs into SopPrograms.\nTools:\n{}",
                       registry.catalog_text());
  }
  return "You write standard operating procedures for diagnosing microservice incidents.";
}

}  // namespace

std::string Episode::ask(std::string_view persona, const std::string& prompt) {
  std::size_t step = state_.step_count + 1;
  auto content = fmt::format("[ROLE {}] [STEP {}]\n{}", persona, step, prompt);
  std::vector<llm::ChatMessage> messages = {
      {llm::Role::kSystem, system_prompt(persona, registry_, config_.action_set_size)},
      {llm::Role::kUser, content},
  };
  add_record(transcript_, "prompt", step, {{"persona", persona}, {"content", content}});
  if (config_.log_wire) {
    backend_.set_wire_logger([this, step](std::string_view direction, std::string_view body) {
      add_record(transcript_, "wire", step, {{"direction", direction}, {"body", body}});
    });
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      auto reply = backend_.complete(messages);
      if (config_.log_wire) backend_.set_wire_logger(nullptr);
      add_record(transcript_, "reply", step, {{"persona", persona}, {"content", reply}});
      return reply;
    } catch (const BackendError& e) {
      add_record(transcript_, "note", step,
                 {{"text", fmt::format("backend failure, {}: {}", attempt == 0 ? "retrying" : "giving up", e.what())}});
    } catch (const ScriptExhaustedError& e) {
      add_record(transcript_, "note", step,
                 {{"text", fmt::format("script exhausted, {}: {}", attempt == 0 ? "retrying" : "giving up", e.what())}});
    }
  }
  if (config_.log_wire) backend_.set_wire_logger(nullptr);
  throw AbortedEpisode(fmt::format("{} call failed twice at step {}", persona, step));
}

std::string Episode::history_text(std::size_t max_steps) const {
  std::string out;
  std::size_t from = state_.history.size() > max_steps ? state_.history.size() - max_steps : 0;
  for (std::size_t i = from; i < state_.history.size(); ++i) {
    const auto& h = state_.history[i];
    if (!h.chosen) {
      out += fmt::format("step {}: no action\n", h.step + 1);
    } else {
      out += fmt::format("step {}: {} -> {}\n", h.step + 1, h.chosen->call.render(),
                         clip_line(h.result.observation, 200));
    }
  }
  return out.empty() ? "(none)\n" : out;
}

bool Episode::speak_allowed() const {
  return !config_.ablations.judge_agent || (state_.verdict && state_.verdict->found);
}

FlowContext Episode::flow_context() const {
  FlowContext fc;
  fc.step = state_.step_count;
  fc.alert = state_.alert;
  fc.ablations = config_.ablations;
  fc.verdict = state_.verdict;
  if (state_.session.current_sop) fc.current_sop_id = state_.session.current_sop->id;
  if (!state_.history.empty() && state_.history.back().chosen) {
    const auto& last = state_.history.back();
    fc.prev_tool = last.chosen->call.tool;
    fc.prev_success = last.result.success;
    if (const auto* hits = std::get_if<std::vector<kb::ScoredSop>>(&last.result.payload)) {
      fc.prev_hits = hits->size();
      if (!hits->empty()) fc.best_sop_id = hits->front().sop.id;
    }
  }
  return fc;
}

std::string Episode::main_thought() {
  std::string prompt = fmt::format("Incident alert: {}\n", state_.alert);
  if (config_.ablations.flow_prompt_on()) prompt += "\n" + std::string(sop_flow_prompt());
  if (state_.session.current_sop) {
    prompt += fmt::format("\nCurrent SOP: [{}] {}\n", state_.session.current_sop->id, state_.session.current_sop->name);
  }
  if (state_.verdict) {
    prompt += state_.verdict->found ? fmt::format("\nJudgeAgent: root cause found. {}\n", state_.verdict->summary)
                                    : "\nJudgeAgent: root cause not found yet.\n";
  }
  if (!state_.hypotheses.empty()) {
    prompt += "\nObAgent hypotheses:";
    for (const auto& h : state_.hypotheses) prompt += fmt::format(" {} ({});", h.type, h.confidence);
    prompt += "\n";
  }
  prompt += "\nHistory:\n" + history_text(6);
  if (!state_.history.empty() && state_.history.back().chosen) {
    prompt += "\nLatest observation:\n" + state_.history.back().result.observation + "\n";
  }
  prompt += "\nWhat should be done next?";
  return ask("main_thought", prompt);
}

std::vector<ActionCandidate> Episode::action_agent_propose(const std::string& thought) {
  std::string prompt = fmt::format("Incident alert: {}\nThought: {}\n", state_.alert, thought);
  if (config_.ablations.flow_prompt_on()) prompt += "\n" + std::string(sop_flow_prompt());
  prompt += "\nHistory:\n" + history_text(6);
  prompt += fmt::format("\nPropose up to {} actions.", config_.action_set_size);
  auto reply = ask("action_agent", prompt);
  std::vector<std::string> dropped;
  auto out = parse_action_reply(reply, registry_, config_.action_set_size, &dropped);
  for (const auto& d : dropped) add_record(transcript_, "note", state_.step_count + 1, {{"text", d}});
  return out;
}

std::vector<Hypothesis> Episode::ob_agent_classify(const tools::ToolResult& observation) {
  std::string text = state_.session.last_run_observation.empty() ? state_.alert : state_.session.last_run_observation;
  std::string prompt = fmt::format("Observation:\n{}\n\nSimilar historical incidents:\n", text);
  const auto* hits = std::get_if<std::vector<kb::ScoredIncident>>(&observation.payload);
  if (!hits || hits->empty()) {
    prompt += "(none)\n";
  } else {
    for (const auto& h : *hits) {
      prompt += fmt::format("- [{}] type={} score={:.3f}: {}\n", h.incident.id, h.incident.fault_type, h.score,
                            h.incident.manifestation);
    }
  }
  prompt += fmt::format("\nKnown fault types: {}\nWhich fault types are likely?", fault_type_list());
  auto reply = ask("ob_agent", prompt);
  auto out = parse_hypotheses(reply);
  if (out.empty()) add_record(transcript_, "note", state_.step_count + 1, {{"text", "ObAgent reply had no hypotheses"}});
  return out;
}

JudgeVerdict Episode::judge_agent(std::string_view trigger) {
  std::string prompt = fmt::format("Incident alert: {}\n", state_.alert);
  if (!state_.hypotheses.empty()) {
    prompt += "ObAgent hypotheses:";
    for (const auto& h : state_.hypotheses) prompt += fmt::format(" {} ({});", h.type, h.confidence);
    prompt += "\n";
  }
  prompt += "\nEvidence so far:\n" + history_text(state_.history.size() + 1);
  if (!state_.session.last_run_observation.empty()) {
    prompt += "\nSOP findings:\n" + state_.session.last_run_observation + "\n";
  }
  prompt += fmt::format("\nKnown fault types: {}\nTriggered after: {}\nHas the root cause been identified?",
                        fault_type_list(), trigger);
  auto reply = ask("judge_agent", prompt);
  auto verdict = parse_verdict(reply);
  ojson causes = ojson::array();
  for (const auto& c : verdict.causes) causes.push_back({{"location", c.location}, {"type", c.type}});
  add_record(transcript_, "verdict", state_.step_count + 1,
             {{"trigger", trigger}, {"found", verdict.found}, {"summary", verdict.summary}, {"causes", causes}});
  state_.verdict = verdict;
  return verdict;
}

tools::SopProgram Episode::code_agent_generate(const kb::SopDoc& sop) {
  return tools::generate_sop_code(sop, registry_, ctx_);
}

std::optional<ActionCandidate> Episode::fallback(const ActionSet& set, const FlowContext& ctx) const {
  for (const auto& c : set.candidates) {
    if (c.provenance == Provenance::kFlowRule || c.provenance == Provenance::kJudgeRule) return c;
  }
  if (!set.candidates.empty()) return set.candidates.front();
  auto rules = flow_rule_candidates(ctx);
  if (!rules.empty()) return rules.front();
  return std::nullopt;
}

void Episode::step() {
  if (state_.terminated) return;
  if (state_.step_count >= config_.max_steps) {
    finish(Outcome::kBudgetExhausted);
    return;
  }
  std::size_t step_no = state_.step_count + 1;
  StepRecord rec;
  rec.step = state_.step_count;
  rec.thought = main_thought();
  auto fc = flow_context();

  if (config_.ablations.action_set) {
    std::vector<ActionCandidate> proposed;
    if (config_.ablations.action_agent) proposed = action_agent_propose(rec.thought);
    if (!speak_allowed()) {
      auto before = proposed.size();
      std::erase_if(proposed, [](const ActionCandidate& c) { return c.call.tool == "Speak"; });
      if (proposed.size() != before) {
        add_record(transcript_, "note", step_no, {{"text", "Speak proposal dropped: JudgeAgent has not found the root cause"}});
      }
    }
    rec.action_set = apply_flow_rules(fc, proposed, config_.action_set_size);
    ojson cands = ojson::array();
    for (std::size_t i = 0; i < rec.action_set.candidates.size(); ++i) {
      cands.push_back(candidate_json(rec.action_set.candidates[i], i + 1));
    }
    add_record(transcript_, "action_set", step_no, {{"mode", "set"}, {"candidates", cands}});
    if (rec.action_set.candidates.empty()) {
      add_record(transcript_, "note", step_no, {{"text", "empty action set; no action taken"}});
    } else {
      std::string listing;
      for (std::size_t i = 0; i < rec.action_set.candidates.size(); ++i) {
        const auto& c = rec.action_set.candidates[i];
        listing += fmt::format("{}. {} | {} | {}\n", i + 1, c.call.render(), provenance_name(c.provenance), c.rationale);
      }
      auto reply = ask("main_select", fmt::format("Thought: {}\n\nAction set:\n{}\nReply with the number of the "
                                                  "action to take.",
                                                  rec.thought, listing));
      auto idx = parse_selection(reply);
      if (idx && *idx >= 1 && *idx <= rec.action_set.candidates.size()) {
        rec.chosen = rec.action_set.candidates[*idx - 1];
      } else {
        rec.chosen = fallback(rec.action_set, fc);
        rec.fallback = true;
      }
    }
  } else {
    auto reply = ask("main_act", fmt::format("Incident alert: {}\nThought: {}\n\nHistory:\n{}\nReply with one tool call.",
                                             state_.alert, rec.thought, history_text(6)));
    auto parsed = parse_action_reply(reply, registry_, 1);
    if (!parsed.empty() && (parsed.front().call.tool != "Speak" || speak_allowed())) {
      auto c = parsed.front();
      c.provenance = Provenance::kMainAgent;
      rec.action_set.candidates.push_back(c);
      rec.chosen = c;
    } else if (auto fb = fallback(rec.action_set, fc)) {
      rec.action_set.candidates.push_back(*fb);
      rec.chosen = fb;
      rec.fallback = true;
    }
    rec.action_set.max_size = config_.action_set_size;
    ojson cands = ojson::array();
    for (std::size_t i = 0; i < rec.action_set.candidates.size(); ++i) {
      cands.push_back(candidate_json(rec.action_set.candidates[i], i + 1));
    }
    add_record(transcript_, "action_set", step_no, {{"mode", "direct"}, {"candidates", cands}});
  }

  if (rec.chosen) {
    const auto* in_set = rec.action_set.find(rec.chosen->call);
    std::size_t index = static_cast<std::size_t>(in_set - rec.action_set.candidates.data()) + 1;
    add_record(transcript_, "choice", step_no,
               {{"index", index},
                {"call", rec.chosen->call.render()},
                {"provenance", provenance_name(rec.chosen->provenance)},
                {"fallback", rec.fallback}});
    execute(rec);
  } else {
    add_record(transcript_, "choice", step_no, {{"index", nullptr}, {"call", nullptr}, {"fallback", rec.fallback}});
  }
  state_.history.push_back(std::move(rec));
  ++state_.step_count;
  if (state_.diagnosis) {
    finish(Outcome::kCompleted);
  } else if (state_.step_count >= config_.max_steps) {
    finish(Outcome::kBudgetExhausted);
  }
}

void Episode::execute(StepRecord& rec) {
  std::size_t step_no = state_.step_count + 1;
  const auto& call = rec.chosen->call;
  rec.result = registry_.invoke(call, ctx_);
  const auto& r = rec.result;
  ++state_.executed_actions;
  state_.path.push_back(call.tool);

  ojson obs;
  obs["tool"] = call.tool;
  obs["success"] = r.success;
  obs["text"] = r.observation;
  obs["flagged"] = r.flagged;
  if (const auto* hits = std::get_if<std::vector<kb::ScoredSop>>(&r.payload)) {
    ojson ids = ojson::array();
    for (const auto& h : *hits) ids.push_back(h.sop.id);
    obs["hits"] = ids;
  } else if (const auto* inc = std::get_if<std::vector<kb::ScoredIncident>>(&r.payload)) {
    ojson ids = ojson::array();
    for (const auto& h : *inc) ids.push_back(h.incident.id);
    obs["hits"] = ids;
  }
  obs["current_sop"] = state_.session.current_sop ? ojson(state_.session.current_sop->id) : ojson(nullptr);
  add_record(transcript_, "observation", step_no, obs);

  if (call.tool == "match_observation" && r.success) {
    if (config_.ablations.ob_agent) {
      state_.hypotheses = ob_agent_classify(r);
      ojson hs = ojson::array();
      for (const auto& h : state_.hypotheses) hs.push_back({{"type", h.type}, {"confidence", h.confidence}});
      add_record(transcript_, "hypotheses", step_no, {{"hypotheses", hs}});
    }
    if (config_.ablations.judge_agent) judge_agent("match_observation");
  } else if (call.tool == "run_sop" && r.success && config_.judge_after_run_sop && config_.ablations.judge_agent) {
    const auto* report = std::get_if<tools::RunReport>(&r.payload);
    if (report && !report->findings.empty()) judge_agent("run_sop");
  }

  if (r.terminal && r.success) {
    const auto& speak = std::get<tools::SpeakReport>(r.payload);
    for (const auto& w : speak.warnings) add_record(transcript_, "note", step_no, {{"text", w}});
    DiagnosisResult d;
    for (const auto& c : speak.causes) {
      if (std::find(d.locations.begin(), d.locations.end(), c.location) == d.locations.end()) {
        d.locations.push_back(c.location);
      }
      if (!c.type.empty() && std::find(d.types.begin(), d.types.end(), c.type) == d.types.end()) {
        d.types.push_back(c.type);
      }
    }
    d.explanation = speak.explanation;
    d.path = state_.path;
    d.path_length = state_.executed_actions;
    state_.diagnosis = std::move(d);
    // step() finishes the episode once this step is counted.
    state_.terminated = true;
  }
}

void Episode::finish(Outcome outcome) {
  if (state_.outcome) return;
  state_.terminated = true;
  state_.outcome = outcome;
  ojson out;
  out["outcome"] = outcome_name(outcome);
  out["steps"] = state_.step_count;
  out["path_length"] = state_.executed_actions;
  out["path"] = state_.path;
  if (state_.diagnosis) {
    out["locations"] = state_.diagnosis->locations;
    out["types"] = state_.diagnosis->types;
    out["explanation"] = state_.diagnosis->explanation;
  }
  if (!state_.abort_reason.empty()) out["reason"] = state_.abort_reason;
  // An abort interrupts the step in progress; other outcomes follow a counted step.
  add_record(transcript_, "outcome", outcome == Outcome::kAborted ? state_.step_count + 1 : state_.step_count, out);
}

EpisodeResult Episode::run() {
  try {
    while (!state_.terminated) step();
  } catch (const AbortedEpisode& e) {
    state_.abort_reason = e.what();
    finish(Outcome::kAborted);
  } catch (const BackendError& e) {
    state_.abort_reason = e.what();
    finish(Outcome::kAborted);
  } catch (const ScriptExhaustedError& e) {
    state_.abort_reason = e.what();
    finish(Outcome::kAborted);
  }
  if (config_.log_wire) backend_.set_wire_logger(nullptr);
  return {*state_.outcome, state_, transcript_};
}

EpisodeResult run_episode(const sandbox::EpisodeScenario& scenario, const kb::KnowledgeBase& kb,
                          llm::LlmBackend& backend, const sandbox::DetectorConfig& detector,
                          const AgentConfig& config) {
  Episode episode(scenario, kb, backend, detector, config);
  return episode.run();
}

}  // namespace sopflow::agents
