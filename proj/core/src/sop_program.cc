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

#include "sopflow/sop_program.h"

#include <fmt/format.h>

#include "cursor.h"
#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::tools {

using detail::Cursor;

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string render_call(const ProgramCall& call) {
  std::string out = call.tool + "(";
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    const auto& a = call.args[i];
    if (i > 0) out += ", ";
    out += a.name + "=";
    if (a.is_variable) {
      out += a.value;
    } else {
      out += quote(a.value);
    }
  }
  return out + ")";
}

std::string render_finding(const FindingExpr& f) {
  return fmt::format("finding({})", f.is_variable ? f.text : quote(f.text));
}

std::string render_statement(const Statement& s) {
  switch (s.kind) {
    case StatementKind::kLet:
      return fmt::format("let {} = {}", s.variable, s.literal ? quote(*s.literal) : render_call(*s.call));
    case StatementKind::kCall:
      return render_call(*s.call);
    case StatementKind::kFinding:
      return render_finding(*s.finding);
    case StatementKind::kIf: {
      const auto& p = s.predicate;
      std::string pred;
      switch (p.kind) {
        case PredicateKind::kContains:
          pred = fmt::format("contains({}, {})", p.variable, quote(p.keyword));
          break;
        case PredicateKind::kAnomalous:
          pred = fmt::format("anomalous({})", p.variable);
          break;
        case PredicateKind::kCompare:
          pred = fmt::format("value({}) {} {}", p.variable, compare_op_text(p.op), p.rhs);
          break;
      }
      return fmt::format("if {}{}: {}", p.negated ? "not " : "", pred,
                         s.call ? render_call(*s.call) : render_finding(*s.finding));
    }
  }
  return "";
}

class LineParser {
 public:
  explicit LineParser(std::string_view line) : cur_(line), line_(line) {}

  Statement parse() {
    Statement s;
    if (cur_.accept_keyword("let")) {
      s.kind = StatementKind::kLet;
      s.variable = need(cur_.ident(), "variable name after 'let'");
      if (!cur_.accept('=')) fail("expected '=' after the variable name");
      if (auto lit = cur_.string_literal()) {
        s.literal = *lit;
      } else {
        s.call = call();
      }
    } else if (cur_.accept_keyword("if")) {
      s.kind = StatementKind::kIf;
      s.predicate = predicate();
      if (!cur_.accept(':')) fail("expected ':' after the condition");
      if (cur_.accept_keyword("let")) fail("bindings are not allowed inside a branch");
      if (peek_finding()) {
        s.finding = finding();
      } else {
        s.call = call();
      }
    } else if (peek_finding()) {
      s.kind = StatementKind::kFinding;
      s.finding = finding();
    } else {
      s.kind = StatementKind::kCall;
      s.call = call();
    }
    if (!cur_.at_end()) fail(fmt::format("unexpected text '{}'", cur_.rest()));
    s.source = render_statement(s);
    return s;
  }

 private:
  [[noreturn]] void fail(const std::string& why) {
    throw GenerationParseError(fmt::format("cannot parse statement '{}': {}", line_, why),
                               std::string(line_));
  }

  template <typename T>
  T need(std::optional<T> v, std::string_view what) {
    if (!v) fail(fmt::format("expected {}", what));
    return std::move(*v);
  }

  bool peek_finding() {
    return trim(cur_.rest()).starts_with("finding(");
  }

  FindingExpr finding() {
    cur_.accept("finding");
    if (!cur_.accept('(')) fail("expected '(' after finding");
    FindingExpr f;
    if (auto lit = cur_.string_literal()) {
      f.text = *lit;
    } else {
      f.is_variable = true;
      f.text = need(cur_.ident(), "a string or variable in finding()");
    }
    if (!cur_.accept(')')) fail("expected ')' to close finding(");
    return f;
  }

  ProgramCall call() {
    ProgramCall c;
    c.tool = need(cur_.ident(), "a tool name");
    if (!cur_.accept('(')) fail(fmt::format("expected '(' after {}", c.tool));
    if (cur_.accept(')')) return c;
    while (true) {
      ProgramArg a;
      a.name = need(cur_.ident(), "an argument name");
      if (!cur_.accept('=')) fail(fmt::format("expected '=' after argument {}", a.name));
      if (auto lit = cur_.string_literal()) {
        a.value = *lit;
      } else if (auto num = cur_.number()) {
        a.value = *num;
      } else if (auto var = cur_.ident()) {
        a.is_variable = true;
        a.value = *var;
      } else {
        fail(fmt::format("bad value for argument {}", a.name));
      }
      for (const auto& prev : c.args) {
        if (prev.name == a.name) fail(fmt::format("argument {} given twice", a.name));
      }
      c.args.push_back(std::move(a));
      if (cur_.accept(')')) break;
      if (!cur_.accept(',')) fail("expected ',' or ')' in the argument list");
    }
    return c;
  }

  Predicate predicate() {
    Predicate p;
    p.negated = cur_.accept_keyword("not");
    auto fn = need(cur_.ident(), "contains, anomalous or value");
    if (!cur_.accept('(')) fail(fmt::format("expected '(' after {}", fn));
    p.variable = need(cur_.ident(), "a variable");
    if (fn == "contains") {
      p.kind = PredicateKind::kContains;
      if (!cur_.accept(',')) fail("contains() takes a variable and a keyword");
      p.keyword = need(cur_.string_literal(), "a quoted keyword");
      if (!cur_.accept(')')) fail("expected ')' to close contains(");
    } else if (fn == "anomalous") {
      p.kind = PredicateKind::kAnomalous;
      if (!cur_.accept(')')) fail("expected ')' to close anomalous(");
    } else if (fn == "value") {
      p.kind = PredicateKind::kCompare;
      if (!cur_.accept(')')) fail("expected ')' to close value(");
      if (cur_.accept(">=")) p.op = CompareOp::kGe;
      else if (cur_.accept("<=")) p.op = CompareOp::kLe;
      else if (cur_.accept("==")) p.op = CompareOp::kEq;
      else if (cur_.accept("!=")) p.op = CompareOp::kNe;
      else if (cur_.accept(">")) p.op = CompareOp::kGt;
      else if (cur_.accept("<")) p.op = CompareOp::kLt;
      else fail("expected a comparison operator");
      auto num = need(cur_.number(), "a number");
      p.rhs = std::stod(num);
    } else {
      fail(fmt::format("unknown predicate '{}'", fn));
    }
    return p;
  }

  Cursor cur_;
  std::string_view line_;
};

std::string strip_comment(std::string_view line) {
  char quote_char = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quote_char) {
      if (c == '\\') ++i;
      else if (c == quote_char) quote_char = 0;
    } else if (c == '"' || c == '\'') {
      quote_char = c;
    } else if (c == '#') {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

std::string_view program_body(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return text;
  auto body_start = text.find('\n', open);
  if (body_start == std::string_view::npos) return {};
  ++body_start;
  auto close = text.find("```", body_start);
  return text.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
}

}  // namespace

std::string_view compare_op_text(CompareOp op) {
  switch (op) {
    case CompareOp::kGt: return ">";
    case CompareOp::kGe: return ">=";
    case CompareOp::kLt: return "<";
    case CompareOp::kLe: return "<=";
    case CompareOp::kEq: return "==";
    case CompareOp::kNe: return "!=";
  }
  return "?";
}

SopProgram parse_program(std::string_view text) {
  SopProgram program;
  for (const auto& raw : split(program_body(text), '\n')) {
    auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    program.statements.push_back(LineParser(line).parse());
  }
  if (program.statements.empty()) {
    throw GenerationParseError("the reply contains no program statements", std::string(text));
  }
  return program;
}

std::string format_program(const SopProgram& program) {
  std::string out;
  for (const auto& s : program.statements) out += render_statement(s) + "\n";
  return out;
}

}  // namespace sopflow::tools
