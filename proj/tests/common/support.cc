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

#include "support.h"

#include <atomic>
#include <map>
#include <optional>
#include <set>

#include <fmt/format.h>

namespace sopflow::testing {

std::filesystem::path data_dir() { return SOPFLOW_DATA_DIR; }
std::filesystem::path golden_dir() { return data_dir() / "golden"; }

std::vector<ojson> records(const agents::Transcript& transcript) {
  std::vector<ojson> out;
  out.reserve(transcript.size());
  for (const auto& line : transcript.lines()) out.push_back(ojson::parse(line));
  return out;
}

std::vector<ojson> records_of(const std::vector<ojson>& all, std::string_view kind) {
  std::vector<ojson> out;
  for (const auto& r : all) {
    if (r.at("kind") == kind) out.push_back(r);
  }
  return out;
}

namespace {

struct Observed {
  std::string tool;
  bool success = false;
  std::vector<std::string> hits;
};

}  // namespace

ReplayResult replay_transcript(const agents::Transcript& transcript, std::size_t max_set_size) {
  ReplayResult res;
  auto recs = records(transcript);
  auto fail = [&](std::size_t step, std::string what) {
    res.violations.push_back(fmt::format("step {}: {}", step, what));
  };
  if (recs.empty() || recs.front().at("kind") != "episode") {
    res.violations.push_back("transcript does not start with an episode header");
    return res;
  }
  const auto& header = recs.front();
  agents::Ablations ablations;
  for (const auto& [flag, value] : header.at("ablations").items()) {
    if (value == "off") ablations.disable(flag);
  }
  std::size_t set_size = header.at("action_set_size").get<std::size_t>();
  std::size_t max_steps = header.at("max_steps").get<std::size_t>();
  std::string alert;
  std::map<std::size_t, Observed> observed;
  std::string current_sop;
  std::optional<agents::JudgeVerdict> verdict;
  ojson last_set;

  std::size_t prev_step = 0;
  std::size_t choices = 0;
  for (const auto& r : recs) {
    const std::string kind = r.at("kind");
    const std::size_t step = r.at("step").get<std::size_t>();
    if (step < prev_step) fail(step, fmt::format("{} record goes back from step {}", kind, prev_step));
    prev_step = step;
    if (kind == "choice") ++choices;
    if (kind == "alert") {
      alert = r.at("text");
    } else if (kind == "verdict") {
      agents::JudgeVerdict v;
      v.found = r.at("found");
      v.summary = r.at("summary");
      for (const auto& c : r.at("causes")) v.causes.push_back({c.at("location"), c.at("type")});
      verdict = v;
    } else if (kind == "observation") {
      Observed o{r.at("tool"), r.at("success"), {}};
      if (r.contains("hits")) o.hits = r.at("hits").get<std::vector<std::string>>();
      observed[step] = o;
      current_sop = r.at("current_sop").is_null() ? "" : r.at("current_sop").get<std::string>();
    } else if (kind == "action_set") {
      ++res.steps;
      last_set = r;
      const auto& cands = r.at("candidates");
      if (cands.size() > set_size || cands.size() > max_set_size) {
        fail(step, fmt::format("action set has {} candidates", cands.size()));
      }
      if (r.at("mode") == "direct") {
        if (cands.size() > 1) fail(step, "direct mode recorded more than one candidate");
        continue;
      }
      agents::FlowContext ctx;
      ctx.step = step - 1;
      ctx.alert = alert;
      ctx.ablations = ablations;
      ctx.verdict = verdict;
      ctx.current_sop_id = current_sop;
      if (auto it = observed.find(step - 1); it != observed.end()) {
        ctx.prev_tool = it->second.tool;
        ctx.prev_success = it->second.success;
        if (it->second.tool == "match_sop") {
          ctx.prev_hits = it->second.hits.size();
          if (!it->second.hits.empty()) ctx.best_sop_id = it->second.hits.front();
        }
      }
      auto mandated = agents::flow_rule_candidates(ctx);
      for (const auto& m : mandated) {
        ++res.rule_candidates;
        std::string call = m.call.render();
        std::string rule = fmt::format("R{}", m.rule);
        bool present = false;
        for (const auto& c : cands) {
          if (c.at("call") == call && c.value("rule", "") == rule) present = true;
        }
        if (!present) fail(step, fmt::format("{} candidate {} missing", rule, call));
      }
      for (const auto& c : cands) {
        if (!c.contains("rule")) continue;
        bool mandated_here = false;
        for (const auto& m : mandated) {
          if (c.at("call") == m.call.render()) mandated_here = true;
        }
        if (!mandated_here) fail(step, fmt::format("unmandated rule candidate {}", c.at("call").dump()));
      }
    } else if (kind == "choice") {
      if (r.at("call").is_null()) continue;
      if (last_set.is_null() || last_set.at("step") != r.at("step")) {
        fail(step, "choice without an action set");
        continue;
      }
      const auto& cands = last_set.at("candidates");
      auto index = r.at("index").get<std::size_t>();
      if (index == 0 || index > cands.size() || cands[index - 1].at("call") != r.at("call")) {
        fail(step, fmt::format("chosen {} is not in the action set", r.at("call").dump()));
      }
      std::string call = r.at("call");
      if (call.starts_with("Speak(")) {
        bool gated = r.at("provenance") == "judge_rule" || !ablations.judge_agent ||
                     (verdict && verdict->found);
        if (!gated) fail(step, "Speak executed without a found verdict");
      }
    } else if (kind == "outcome") {
      if (r.at("steps").get<std::size_t>() > max_steps) {
        fail(step, fmt::format("{} steps exceed the cap {}", r.at("steps").get<std::size_t>(), max_steps));
      }
      // An abort can land after the choice of the interrupted step.
      const auto steps = r.at("steps").get<std::size_t>();
      const bool aborted = r.at("outcome") == "aborted";
      if (aborted ? (choices < steps || choices > steps + 1) : choices != steps) {
        fail(step, fmt::format("outcome reports {} steps but {} choices were made", steps, choices));
      }
    }
  }
  return res;
}

namespace {

const std::vector<std::string>& action_pool() {
  static const std::vector<std::string> pool = {
      "match_sop(query=\"cpu usage high\")",
      "generate_sop(fault_info=\"latency spike on redis\")",
      "generate_sop_code()",
      "generate_sop_code(sop=\"sop-cpu-stress\")",
      "run_sop()",
      "match_observation()",
      "collect_trace()",
      "pod_analyze()",
      "node_analyze()",
      "kubectl_logs(pod=\"adservice-0\")",
      "whether_is_abnormal_metric(target=\"frontend-0\", metric=\"cpu_usage\")",
      "whether_is_abnormal_metric(target=\"ghost-9\", metric=\"cpu_usage\")",
      "Speak(causes=\"adservice-0:CpuStress\")",
      "Speak(causes=\"a:CpuStress;b:MemoryStress;c:PodFailure;d:NetworkLoss;e:NetworkDelay\")",
      "Speak(causes=\"\")",
      "unknown_tool(x=\"1\")",
      "run_sop(extra=\"1\")",
      "this is not a tool call",
      "",
  };
  return pool;
}

const std::vector<std::string>& judge_pool() {
  static const std::vector<std::string> pool = {
      "NOT FOUND",
      "FOUND: location=adservice-0 type=CpuStress\nSUMMARY: cpu is saturated",
      "FOUND: location=a type=CpuStress\nFOUND: location=b type=MemoryStress\nFOUND: location=c "
      "type=PodFailure\nFOUND: location=d type=NetworkLoss\nFOUND: location=e type=NetworkDelay\nSUMMARY: many",
      "FOUND: nonsense",
      "maybe",
  };
  return pool;
}

const std::vector<std::string>& code_pool() {
  static const std::vector<std::string> pool = {
      "```\nlet m = whether_is_abnormal_metric(target=\"adservice-0\", metric=\"cpu_usage\")\n"
      "if anomalous(m): finding(\"cpu high on adservice-0\")\n```",
      "```\nlet m = whether_is_abnormal_metric(target=\"ghost-9\", metric=\"cpu_usage\")\n```",
      "```\nlet t = collect_trace()\nif contains(t, \"error\"): finding(t)\n```",
      "```\nfinding(x)\n```",
      "no program here",
  };
  return pool;
}

const std::vector<std::string>& sop_pool() {
  static const std::vector<std::string> pool = {
      "name: Fuzzed procedure\nsteps:\n1. Check cpu_usage.\n2. Check the traces.\n",
      "name: Without steps\n",
      "garbage",
  };
  return pool;
}

const std::vector<std::string>& ob_pool() {
  static const std::vector<std::string> pool = {
      "type: CpuStress (high)\ntype: MemoryStress (low)",
      "type: NetworkLoss (medium)",
      "nothing",
  };
  return pool;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

std::vector<llm::ScriptEntry> random_script(std::mt19937_64& rng, std::size_t steps) {
  std::vector<llm::ScriptEntry> out;
  auto key = [](std::string_view persona, std::size_t step) {
    return fmt::format("[ROLE {}] [STEP {}]", persona, step);
  };
  std::uniform_int_distribution<int> lines(0, 4);
  std::uniform_int_distribution<int> index(0, 7);
  for (std::size_t s = 1; s <= steps; ++s) {
    out.push_back({key("main_thought", s), "keep going", false});
    std::string proposals;
    for (int i = lines(rng); i > 0; --i) proposals += pick(rng, action_pool()) + "\n";
    out.push_back({key("action_agent", s), proposals, false});
    out.push_back({key("main_act", s), pick(rng, action_pool()), false});
    int sel = index(rng);
    out.push_back({key("main_select", s), sel == 7 ? "none of them" : std::to_string(sel), false});
    out.push_back({key("ob_agent", s), pick(rng, ob_pool()), false});
    out.push_back({key("judge_agent", s), pick(rng, judge_pool()), false});
    out.push_back({key("code_agent", s), pick(rng, code_pool()), false});
    out.push_back({key("generate_sop", s), pick(rng, sop_pool()), false});
  }
  if (std::bernoulli_distribution(0.8)(rng)) out.push_back({"*", "1", false});
  return out;
}

GenProgram random_program(std::mt19937_64& rng, const std::vector<std::string>& pods) {
  static const std::vector<std::string> metrics = {"cpu_usage", "memory_usage", "error_rate", "latency_p99_ms",
                                                   "bogus_metric"};
  static const std::vector<std::string> var_names = {"a", "b", "c", "m", "t"};
  auto uni = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  GenProgram g;
  std::set<std::string> bound;
  std::vector<std::string> lines;
  auto use_var = [&]() {
    const auto& v = var_names[uni(var_names.size())];
    if (!bound.count(v)) g.scope_ok = false;
    return v;
  };
  auto call_text = [&]() -> std::string {
    switch (uni(9)) {
      case 0:
      case 1: {
        std::string target = coin(0.15) ? "ghost-0" : pods[uni(pods.size())];
        if (coin(0.1)) return fmt::format("whether_is_abnormal_metric(target={}, metric=\"{}\")", use_var(),
                                          metrics[uni(metrics.size())]);
        return fmt::format("whether_is_abnormal_metric(target=\"{}\", metric=\"{}\")", target,
                           metrics[uni(metrics.size())]);
      }
      case 2: return "collect_trace()";
      case 3: return fmt::format("kubectl_logs(pod=\"{}\")", coin(0.15) ? "ghost-0" : pods[uni(pods.size())]);
      case 4: return "pod_analyze()";
      case 5: return "node_analyze()";
      case 6: return "get_relevant_metric(query=\"cpu\")";
      case 7:
        if (coin(0.5)) {
          g.tools_ok = false;
          return coin(0.5) ? "unknown_tool()" : "run_sop()";
        }
        return "service_analyze()";
      default: return "get_all_namespace()";
    }
  };
  std::size_t n = 1 + uni(12);
  for (std::size_t i = 0; i < n; ++i) {
    switch (uni(5)) {
      case 0: {
        auto v = var_names[uni(var_names.size())];
        lines.push_back(fmt::format("let {} = {}", v, call_text()));
        bound.insert(v);
        break;
      }
      case 1: {
        auto v = var_names[uni(var_names.size())];
        lines.push_back(fmt::format("let {} = \"{}\"", v, pods[uni(pods.size())]));
        bound.insert(v);
        break;
      }
      case 2: lines.push_back(call_text()); break;
      case 3: {
        std::string pred;
        switch (uni(3)) {
          case 0: pred = fmt::format("anomalous({})", use_var()); break;
          case 1: pred = fmt::format("contains({}, \"error\")", use_var()); break;
          default: pred = fmt::format("value({}) > 0.5", use_var()); break;
        }
        std::string branch = coin(0.5) ? call_text() : "finding(\"branch hit\")";
        lines.push_back(fmt::format("if {}{}: {}", coin(0.3) ? "not " : "", pred, branch));
        break;
      }
      default:
        lines.push_back(coin(0.5) ? "finding(\"plain\")" : fmt::format("finding({})", use_var()));
        break;
    }
  }
  for (const auto& l : lines) g.text += l + "\n";
  return g;
}

std::filesystem::path temp_dir(std::string_view prefix) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  auto dir = std::filesystem::temp_directory_path() /
             fmt::format("{}-{:x}-{}", prefix, rd(), counter.fetch_add(1));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sopflow::testing
