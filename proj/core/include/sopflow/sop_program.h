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

// SopProgram: an SOP compiled into a straight-line tool program. Grammar
// (one statement per line, '#' starts a comment):
//
//   stmt      := let | call | if | finding
//   let       := "let" IDENT "=" (call | STRING)
//   call      := TOOL "(" [arg {"," arg}] ")"
//   arg       := IDENT "=" (STRING | NUMBER | IDENT)
//   if        := "if" ["not"] pred ":" (call | finding)
//   pred      := "contains(" IDENT "," STRING ")"
//              | "anomalous(" IDENT ")"
//              | "value(" IDENT ")" CMP NUMBER
//   CMP       := ">" | ">=" | "<" | "<=" | "==" | "!="
//   finding   := "finding(" (STRING | IDENT) ")"
//
// There are no loops and no conditional bindings, so every variable is bound
// on every path that reaches its use.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sopflow::tools {

inline constexpr std::size_t kMaxProgramStatements = 50;

struct ProgramArg {
  std::string name;
  bool is_variable = false;
  std::string value;  // literal text, or the variable name
  friend bool operator==(const ProgramArg&, const ProgramArg&) = default;
};

struct ProgramCall {
  std::string tool;
  std::vector<ProgramArg> args;
  friend bool operator==(const ProgramCall&, const ProgramCall&) = default;
};

enum class PredicateKind { kContains, kAnomalous, kCompare };
enum class CompareOp { kGt, kGe, kLt, kLe, kEq, kNe };

struct Predicate {
  PredicateKind kind = PredicateKind::kContains;
  bool negated = false;
  std::string variable;
  std::string keyword;
  CompareOp op = CompareOp::kGt;
  double rhs = 0.0;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct FindingExpr {
  bool is_variable = false;
  std::string text;  // literal text, or the variable name
  friend bool operator==(const FindingExpr&, const FindingExpr&) = default;
};

enum class StatementKind { kLet, kCall, kIf, kFinding };

struct Statement {
  StatementKind kind = StatementKind::kCall;
  std::string variable;                  // kLet
  std::optional<std::string> literal;    // kLet bound to a string
  std::optional<ProgramCall> call;       // kLet, kCall, kIf with a call branch
  Predicate predicate;                   // kIf
  std::optional<FindingExpr> finding;    // kFinding, kIf with a finding branch
  std::string source;                    // the line as written
  friend bool operator==(const Statement&, const Statement&) = default;
};

struct SopProgram {
  std::string sop_id;
  std::vector<Statement> statements;
  friend bool operator==(const SopProgram&, const SopProgram&) = default;
};

// Accepts a bare program or the first ``` fenced block of a reply. Throws
// GenerationParseError with the offending line.
SopProgram parse_program(std::string_view text);
// Canonical text: one statement per line.
std::string format_program(const SopProgram& program);
std::string_view compare_op_text(CompareOp op);

struct TraceEntry {
  std::size_t index = 0;
  std::string statement;
  bool ok = true;
  std::string detail;
};

struct RunReport {
  bool success = true;
  std::vector<std::string> findings;
  std::vector<TraceEntry> trace;
  std::optional<std::size_t> failed_index;
  std::string error;
  std::vector<std::string> flagged;  // components flagged by any tool call
};

}  // namespace sopflow::tools
