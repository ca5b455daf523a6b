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

// SOP generation, SOP-to-program generation, and the program interpreter.

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>

#include "sopflow/errors.h"
#include "sopflow/tools.h"
#include "sopflow/util.h"

namespace sopflow::tools {

namespace {

constexpr std::size_t kFewShotSops = 3;
constexpr std::size_t kTraceDetailChars = 160;

// "1. text", "2) text", "- text", "* text" -> "text"
std::optional<std::string> list_item(std::string_view line) {
  auto t = trim(line);
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
    auto rest = trim(std::string_view(t).substr(i + 1));
    if (!rest.empty()) return rest;
    return std::nullopt;
  }
  if (!t.empty() && (t[0] == '-' || t[0] == '*')) {
    auto rest = trim(std::string_view(t).substr(1));
    if (!rest.empty()) return rest;
  }
  return std::nullopt;
}

std::string clip(std::string_view text, std::size_t n) {
  auto nl = text.find('\n');
  auto line = text.substr(0, nl);
  if (line.size() <= n) return std::string(line);
  return std::string(line.substr(0, n)) + "...";
}

}  // namespace

kb::SopDoc parse_generated_sop(std::string_view reply) {
  kb::SopDoc sop;
  bool in_steps = false;
  for (const auto& raw : split(reply, '\n')) {
    auto line = trim(raw);
    if (line.empty() || line.starts_with("```")) continue;
    if (starts_with_ci(line, "name:")) {
      sop.name = trim(std::string_view(line).substr(5));
      in_steps = false;
    } else if (starts_with_ci(line, "steps:")) {
      in_steps = true;
    } else if (in_steps) {
      if (auto item = list_item(line)) sop.steps.push_back(*item);
    }
  }
  if (sop.name.empty()) throw GenerationParseError("generated SOP has no 'name:' line", std::string(reply));
  if (sop.steps.empty()) throw GenerationParseError("generated SOP has no step list", std::string(reply));
  std::string digest = sop.name;
  for (const auto& s : sop.steps) digest += "\n" + s;
  sop.id = fmt::format("gen-{:08x}", fnv1a64(digest) & 0xffffffffULL);
  return sop;
}

std::string generate_sop_prompt(std::string_view fault_info, const std::vector<kb::ScoredSop>& examples) {
  std::string out = fmt::format("Write a standard operating procedure (SOP) for diagnosing this fault.\n"
                                "Fault information: {}\n",
                                fault_info);
  if (!examples.empty()) {
    out += "\nExisting SOPs, for style and level of detail:\n";
    for (const auto& ex : examples) {
      out += fmt::format("\nname: {}\nsteps:\n", ex.sop.name);
      for (std::size_t i = 0; i < ex.sop.steps.size(); ++i) out += fmt::format("{}. {}\n", i + 1, ex.sop.steps[i]);
    }
  }
  out += "\nReply in exactly this format:\nname: <short title>\nsteps:\n1. <check, and what each outcome means>\n";
  return out;
}

std::string code_agent_prompt(const kb::SopDoc& sop, const ToolRegistry& registry) {
  std::string out = fmt::format("Convert SOP [{}] into a SopProgram.\nSOP name: {}\nSOP steps:\n", sop.id, sop.name);
  for (std::size_t i = 0; i < sop.steps.size(); ++i) out += fmt::format("{}. {}\n", i + 1, sop.steps[i]);
  out +=
      "\nProgram grammar, one statement per line:\n"
      "  let <var> = <tool>(<arg>=\"<value>\", ...)\n"
      "  let <var> = \"<text>\"\n"
      "  <tool>(<arg>=<value or var>, ...)\n"
      "  if [not] contains(<var>, \"<keyword>\"): <tool call or finding>\n"
      "  if [not] anomalous(<var>): <tool call or finding>\n"
      "  if value(<var>) <op> <number>: <tool call or finding>   (op: > >= < <= == !=)\n"
      "  finding(\"<text>\") or finding(<var>)\n"
      "No loops; at most 50 statements; bind variables before use.\n"
      "\nTools callable from a program:\n";
  for (const auto& spec : registry.specs()) {
    if (!spec.callable_from_program()) continue;
    out += fmt::format("  {}(", spec.name);
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
      const auto& p = spec.params[i];
      out += fmt::format("{}{}{}", i ? ", " : "", p.name, p.required ? "" : "?");
    }
    out += fmt::format("): {}\n", spec.description);
  }
  out += "\nReply with the program inside a ``` fenced block.\n";
  return out;
}

kb::SopDoc generate_sop(std::string_view fault_info, std::optional<kb::SopDoc> parent, ToolContext& ctx) {
  if (!ctx.kb || !ctx.embedder || !ctx.ask) throw ConfigError("generate_sop needs a knowledge base and a model");
  auto examples = ctx.kb->match_sop(fault_info, *ctx.embedder, kFewShotSops, -1.0);
  auto reply = ctx.ask("generate_sop", generate_sop_prompt(fault_info, examples));
  auto sop = parse_generated_sop(reply);
  sop.level = parent ? parent->level + 1 : 0;
  if (auto existing = ctx.kb->get_sop(sop.id)) {
    sop = *existing;
  } else {
    ctx.kb->add_sop(sop);
    sop = *ctx.kb->get_sop(sop.id);
  }
  if (ctx.session) {
    if (!ctx.session->current_sop || ctx.session->current_sop->id != sop.id) {
      ctx.session->program.reset();
      ctx.session->last_run.reset();
    }
    ctx.session->current_sop = sop;
  }
  return sop;
}

SopProgram generate_sop_code(const kb::SopDoc& sop, const ToolRegistry& registry, ToolContext& ctx) {
  if (!ctx.ask) throw ConfigError("generate_sop_code needs a model");
  auto reply = ctx.ask("code_agent", code_agent_prompt(sop, registry));
  auto program = parse_program(reply);
  program.sop_id = sop.id;
  auto violations = validate_program(program, registry);
  if (!violations.empty()) throw ProgramValidationError(std::move(violations));
  return program;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

enum class Binding { kLiteral, kResult };

void check_call(const ProgramCall& call, std::size_t index, const ToolRegistry& registry,
                const std::map<std::string, Binding>& bound, std::vector<std::string>& out) {
  const auto* spec = registry.find(call.tool);
  if (!spec) {
    out.push_back(fmt::format("statement {}: unknown tool '{}'", index, call.tool));
    return;
  }
  if (!spec->callable_from_program()) {
    out.push_back(fmt::format("statement {}: tool '{}' cannot be called from a program", index, call.tool));
  }
  for (const auto& a : call.args) {
    if (!spec->find_param(a.name)) {
      out.push_back(fmt::format("statement {}: {} has no argument '{}'", index, call.tool, a.name));
    }
    if (a.is_variable && !bound.count(a.value)) {
      out.push_back(fmt::format("statement {}: unbound variable '{}'", index, a.value));
    }
  }
  for (const auto& p : spec->params) {
    if (!p.required) continue;
    bool given = std::any_of(call.args.begin(), call.args.end(), [&](const ProgramArg& a) { return a.name == p.name; });
    if (!given) out.push_back(fmt::format("statement {}: {} needs argument '{}'", index, call.tool, p.name));
  }
}

void check_variable(const std::string& var, std::size_t index, const std::map<std::string, Binding>& bound,
                    std::vector<std::string>& out) {
  if (!bound.count(var)) out.push_back(fmt::format("statement {}: unbound variable '{}'", index, var));
}

}  // namespace

std::vector<std::string> validate_program(const SopProgram& program, const ToolRegistry& registry) {
  std::vector<std::string> out;
  if (program.statements.empty()) out.push_back("program has no statements");
  if (program.statements.size() > kMaxProgramStatements) {
    out.push_back(fmt::format("program has {} statements; the limit is {}", program.statements.size(),
                              kMaxProgramStatements));
  }
  std::map<std::string, Binding> bound;
  for (std::size_t i = 0; i < program.statements.size(); ++i) {
    const auto& s = program.statements[i];
    switch (s.kind) {
      case StatementKind::kLet:
        if (s.call) check_call(*s.call, i, registry, bound, out);
        bound[s.variable] = s.literal ? Binding::kLiteral : Binding::kResult;
        break;
      case StatementKind::kCall:
        check_call(*s.call, i, registry, bound, out);
        break;
      case StatementKind::kFinding:
        if (s.finding->is_variable) check_variable(s.finding->text, i, bound, out);
        break;
      case StatementKind::kIf: {
        const auto& p = s.predicate;
        check_variable(p.variable, i, bound, out);
        auto it = bound.find(p.variable);
        if (it != bound.end() && it->second == Binding::kLiteral && p.kind != PredicateKind::kContains) {
          out.push_back(fmt::format("statement {}: {}() needs a tool result, '{}' is text", i,
                                    p.kind == PredicateKind::kAnomalous ? "anomalous" : "value", p.variable));
        }
        if (s.call) check_call(*s.call, i, registry, bound, out);
        if (s.finding && s.finding->is_variable) check_variable(s.finding->text, i, bound, out);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpreter

namespace {

struct Value {
  std::optional<std::string> literal;
  ToolResult result;

  const std::string& text() const { return literal ? *literal : result.observation; }
};

class StatementFailure {
 public:
  explicit StatementFailure(std::string d) : detail(std::move(d)) {}
  std::string detail;
};

class Interpreter {
 public:
  Interpreter(const ToolRegistry& registry, ToolContext& ctx) : registry_(registry), ctx_(ctx) {}

  RunReport run(const SopProgram& program) {
    RunReport report;
    for (std::size_t i = 0; i < program.statements.size(); ++i) {
      const auto& s = program.statements[i];
      TraceEntry entry{i, s.source, true, ""};
      try {
        entry.detail = execute(s, report);
      } catch (const StatementFailure& f) {
        entry.ok = false;
        entry.detail = f.detail;
        report.trace.push_back(std::move(entry));
        report.success = false;
        report.failed_index = i;
        report.error = f.detail;
        return report;
      }
      report.trace.push_back(std::move(entry));
    }
    return report;
  }

 private:
  const Value& lookup(const std::string& var) const {
    auto it = vars_.find(var);
    if (it == vars_.end()) throw StatementFailure(fmt::format("unbound variable '{}'", var));
    return it->second;
  }

  ToolResult call(const ProgramCall& c, RunReport& report) {
    const auto* spec = registry_.find(c.tool);
    if (!spec) throw StatementFailure(fmt::format("unknown tool '{}'", c.tool));
    if (!spec->callable_from_program()) {
      throw StatementFailure(fmt::format("tool '{}' cannot be called from a program", c.tool));
    }
    ToolCall tc{c.tool, {}};
    for (const auto& a : c.args) {
      if (!a.is_variable) {
        tc.args[a.name] = a.value;
        continue;
      }
      const auto& v = lookup(a.value);
      if (v.literal) {
        tc.args[a.name] = *v.literal;
      } else if (!v.result.flagged.empty()) {
        tc.args[a.name] = v.result.flagged.front();
      } else {
        throw StatementFailure(fmt::format("variable '{}' names no component to pass as {}", a.value, a.name));
      }
    }
    auto result = registry_.invoke(tc, ctx_);
    if (!result.success) throw StatementFailure(result.error);
    for (const auto& f : result.flagged) {
      if (std::find(report.flagged.begin(), report.flagged.end(), f) == report.flagged.end()) {
        report.flagged.push_back(f);
      }
    }
    return result;
  }

  bool holds(const Predicate& p) const {
    const auto& v = lookup(p.variable);
    bool result = false;
    switch (p.kind) {
      case PredicateKind::kContains:
        result = icontains(v.text(), p.keyword);
        break;
      case PredicateKind::kAnomalous:
        if (v.literal) throw StatementFailure(fmt::format("'{}' is text, not a tool result", p.variable));
        result = v.result.anomalous.value_or(!v.result.flagged.empty());
        break;
      case PredicateKind::kCompare: {
        if (v.literal || !v.result.value) {
          throw StatementFailure(fmt::format("'{}' carries no numeric value", p.variable));
        }
        double x = *v.result.value;
        switch (p.op) {
          case CompareOp::kGt: result = x > p.rhs; break;
          case CompareOp::kGe: result = x >= p.rhs; break;
          case CompareOp::kLt: result = x < p.rhs; break;
          case CompareOp::kLe: result = x <= p.rhs; break;
          case CompareOp::kEq: result = x == p.rhs; break;
          case CompareOp::kNe: result = x != p.rhs; break;
        }
        break;
      }
    }
    return p.negated ? !result : result;
  }

  std::string emit(const FindingExpr& f, RunReport& report) {
    auto text = f.is_variable ? lookup(f.text).text() : f.text;
    report.findings.push_back(text);
    return "finding: " + clip(text, kTraceDetailChars);
  }

  std::string execute(const Statement& s, RunReport& report) {
    switch (s.kind) {
      case StatementKind::kLet:
        if (s.literal) {
          vars_[s.variable] = Value{s.literal, {}};
          return fmt::format("{} = \"{}\"", s.variable, *s.literal);
        } else {
          auto r = call(*s.call, report);
          auto detail = clip(r.observation, kTraceDetailChars);
          vars_[s.variable] = Value{std::nullopt, std::move(r)};
          return detail;
        }
      case StatementKind::kCall:
        return clip(call(*s.call, report).observation, kTraceDetailChars);
      case StatementKind::kFinding:
        return emit(*s.finding, report);
      case StatementKind::kIf:
        if (!holds(s.predicate)) return "condition false";
        if (s.call) return "condition true; " + clip(call(*s.call, report).observation, kTraceDetailChars);
        return "condition true; " + emit(*s.finding, report);
    }
    return "";
  }

  const ToolRegistry& registry_;
  ToolContext& ctx_;
  std::map<std::string, Value> vars_;
};

}  // namespace

RunReport run_program(const SopProgram& program, const ToolRegistry& registry, ToolContext& ctx) {
  return Interpreter(registry, ctx).run(program);
}

RunReport run_program_or_throw(const SopProgram& program, const ToolRegistry& registry, ToolContext& ctx) {
  auto report = run_program(program, registry, ctx);
  if (!report.success) throw ProgramRuntimeError(*report.failed_index, report.error);
  return report;
}

std::string render_run_report(const RunReport& report) {
  std::string out;
  if (!report.success) {
    out = fmt::format("ToolError: run_sop failed at statement {}: {}\n", *report.failed_index, report.error);
  } else if (report.findings.empty()) {
    out = fmt::format("run_sop: no findings ({} statements executed)\n", report.trace.size());
  } else {
    out = fmt::format("run_sop: {} findings ({} statements executed)\n", report.findings.size(), report.trace.size());
    for (const auto& f : report.findings) out += "- " + f + "\n";
  }
  out += "trace:";
  for (const auto& e : report.trace) {
    out += fmt::format("\n[{}] {} {}: {}", e.index, e.ok ? "ok" : "FAILED", e.statement, e.detail);
  }
  return out;
}

}  // namespace sopflow::tools
