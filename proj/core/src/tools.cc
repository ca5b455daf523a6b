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

#include "sopflow/tools.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "cursor.h"
#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::tools {

using sandbox::DataSource;
using sandbox::QueryWindow;
using sandbox::ResourceKind;

std::string_view tool_category_name(ToolCategory category) {
  switch (category) {
    case ToolCategory::kObservability: return "observability";
    case ToolCategory::kSopFlow: return "sop_flow";
    case ToolCategory::kAnalysis: return "analysis";
    case ToolCategory::kTerminal: return "terminal";
  }
  return "?";
}

const ParamSpec* ToolSpec::find_param(std::string_view param) const {
  for (const auto& p : params) {
    if (p.name == param) return &p;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Tool calls

namespace {

std::string quote_arg(std::string_view s) {
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

}  // namespace

std::string ToolCall::render() const {
  std::string out = tool + "(";
  bool first = true;
  for (const auto& [name, value] : args) {
    if (!first) out += ", ";
    first = false;
    out += name + "=" + quote_arg(value);
  }
  return out + ")";
}

std::optional<ToolCall> parse_tool_call(std::string_view text) {
  detail::Cursor cur(text);
  ToolCall call;
  auto name = cur.ident();
  if (!name) return std::nullopt;
  call.tool = *name;
  if (!cur.accept('(')) return std::nullopt;
  if (!cur.accept(')')) {
    while (true) {
      auto arg = cur.ident();
      if (!arg || !cur.accept('=')) return std::nullopt;
      std::string value;
      if (auto lit = cur.string_literal()) {
        value = *lit;
      } else {
        value = cur.bare_value();
        // An opening quote with no closing one is not a bare value.
        if (value.empty() || value[0] == '"' || value[0] == '\'') return std::nullopt;
      }
      if (call.args.count(*arg)) return std::nullopt;
      call.args.emplace(*arg, value);
      if (cur.accept(')')) break;
      if (!cur.accept(',')) return std::nullopt;
    }
  }
  if (!cur.at_end()) return std::nullopt;
  return call;
}

// ---------------------------------------------------------------------------
// Speak

std::vector<RootCause> parse_causes(std::string_view text) {
  std::vector<RootCause> out;
  for (const auto& entry : split(text, ';')) {
    auto item = trim(entry);
    if (item.empty()) continue;
    auto parts = split(item, ':');
    RootCause c;
    c.location = trim(parts[0]);
    if (parts.size() > 1) {
      auto type = trim(parts[1]);
      auto parsed = sandbox::parse_fault_type(type);
      c.type = parsed ? std::string(sandbox::fault_type_name(*parsed)) : type;
    }
    if (parts.size() > 2) {
      try {
        c.confidence = std::stod(trim(parts[2]));
      } catch (const std::exception&) {
        throw ValidationError(fmt::format("bad confidence in root cause '{}'", item));
      }
    }
    if (c.location.empty()) throw ValidationError(fmt::format("root cause '{}' has no location", item));
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_causes(const std::vector<RootCause>& causes) {
  std::string out;
  for (const auto& c : causes) {
    if (!out.empty()) out += ";";
    out += c.location + ":" + c.type;
  }
  return out;
}

SpeakReport speak(std::vector<RootCause> causes, std::string explanation) {
  if (causes.empty()) throw ValidationError("Speak requires at least one root cause");
  SpeakReport report;
  report.explanation = std::move(explanation);
  if (causes.size() > kMaxRootCauses) {
    std::stable_sort(causes.begin(), causes.end(),
                     [](const RootCause& a, const RootCause& b) { return a.confidence > b.confidence; });
    report.warnings.push_back(fmt::format("{} root causes given; kept the {} most confident",
                                          causes.size(), kMaxRootCauses));
    causes.resize(kMaxRootCauses);
  }
  report.causes = std::move(causes);
  return report;
}

// ---------------------------------------------------------------------------
// Rendering helpers

std::string render_resource_table(const sandbox::ResourceTable& table) {
  std::string out;
  std::vector<std::string> unhealthy;
  for (const auto& row : table.rows) {
    out += fmt::format("- {} status={}", row.name, row.status);
    for (const auto& [k, v] : row.attributes) out += fmt::format(" {}={}", k, v);
    if (!row.note.empty()) out += fmt::format(" ({})", row.note);
    out += "\n";
    if (!row.healthy) unhealthy.push_back(row.name);
  }
  auto kind = sandbox::resource_kind_name(table.kind);
  if (unhealthy.empty()) {
    out += fmt::format("{} {}, all healthy", table.rows.size(), kind);
  } else {
    out += fmt::format("{} {}, {} unhealthy: {}", table.rows.size(), kind, unhealthy.size(),
                       fmt::join(unhealthy, ", "));
  }
  return out;
}

namespace {

constexpr std::size_t kMaxListedTraces = 20;
constexpr std::size_t kMaxListedLogs = 10;

ToolResult error_result(std::string tool, std::string message) {
  ToolResult r;
  r.tool = std::move(tool);
  r.success = false;
  r.error = message;
  r.observation = "ToolError: " + message;
  return r;
}

void add_unique(std::vector<std::string>& v, const std::string& item) {
  if (std::find(v.begin(), v.end(), item) == v.end()) v.push_back(item);
}

const std::string* arg(const ToolCall& call, std::string_view name) {
  auto it = call.args.find(name);
  return it == call.args.end() ? nullptr : &it->second;
}

double parse_seconds(const std::string& text, std::string_view name) {
  try {
    std::size_t used = 0;
    auto s = trim(text);
    if (!s.empty() && s.back() == 's') s.pop_back();
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(name.data());
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("argument {} must be a number of seconds, got '{}'", name, text));
  }
}

QueryWindow window_arg(const ToolCall& call, const DataSource& source) {
  auto w = source.full_window();
  if (const auto* s = arg(call, "start")) w.start_s = parse_seconds(*s, "start");
  if (const auto* e = arg(call, "end")) w.end_s = parse_seconds(*e, "end");
  if (w.end_s <= w.start_s) throw ValidationError("the window end must be after its start");
  return w;
}

class Tools {
 public:
  Tools(const ToolRegistry& registry, ToolContext& ctx) : registry_(registry), ctx_(ctx) {}

  ToolResult dispatch(const ToolCall& call) {
    const auto& n = call.tool;
    if (n == "whether_is_abnormal_metric") return abnormal_metric(call);
    if (n == "collect_trace") return collect_trace(call);
    if (n == "kubectl_logs") return kubectl_logs(call);
    if (n == "pod_analyze") return analyze(n, ResourceKind::kPods);
    if (n == "node_analyze") return analyze(n, ResourceKind::kNodes);
    if (n == "service_analyze") return analyze(n, ResourceKind::kServices);
    if (n == "deployment_analyze") return analyze(n, ResourceKind::kDeployments);
    if (n == "statefulset_analyze") return analyze(n, ResourceKind::kStatefulSets);
    if (n == "run_kubectl_command") return kubectl(call);
    if (n == "get_all_namespace") return namespaces();
    if (n == "get_relevant_metric") return relevant_metric(call);
    if (n == "match_sop") return match_sop(call);
    if (n == "generate_sop") return generate(call);
    if (n == "generate_sop_code") return generate_code(call);
    if (n == "run_sop") return run_sop();
    if (n == "match_observation") return match_observation(call);
    if (n == "Speak") return speak_tool(call);
    return error_result(n, fmt::format("unknown tool '{}'", n));
  }

 private:
  const DataSource& source() const {
    if (!ctx_.source) throw ConfigError("no data source connected");
    return *ctx_.source;
  }
  const sandbox::DetectorConfig& detector() const {
    if (!ctx_.detector) throw ConfigError("no detector configured");
    return *ctx_.detector;
  }
  kb::KnowledgeBase& knowledge() const {
    if (!ctx_.kb || !ctx_.embedder) throw ConfigError("no knowledge base connected");
    return *ctx_.kb;
  }
  SopSession& session() const {
    if (!ctx_.session) throw ConfigError("no SOP session");
    return *ctx_.session;
  }

  ToolResult ok(std::string tool, std::string observation) const {
    ToolResult r;
    r.tool = std::move(tool);
    r.observation = std::move(observation);
    return r;
  }

  // --- observability -----------------------------------------------------

  ToolResult abnormal_metric(const ToolCall& call) {
    const auto& target = *arg(call, "target");
    const auto& metric = *arg(call, "metric");
    const auto* info = sandbox::find_metric(metric);
    if (!info) {
      return error_result(call.tool, fmt::format("unknown metric '{}'; use get_relevant_metric to list metric names", metric));
    }
    const auto& src = source();
    if (!src.is_pod(target) && !src.is_node(target)) {
      return error_result(call.tool, fmt::format("unknown component '{}': no pod or node has that name", target));
    }
    if ((info->scope == sandbox::MetricScope::kPod) != src.is_pod(target)) {
      return error_result(call.tool, fmt::format("metric {} is not collected for {} {}", metric,
                                                 src.is_pod(target) ? "pod" : "node", target));
    }
    auto window = window_arg(call, src);
    auto v = sandbox::evaluate_metric(src, detector(), target, metric, window);
    auto r = ok(call.tool, "");
    r.anomalous = v.anomalous;
    r.value = v.peak;
    auto ref = v.rule == "threshold" ? fmt::format("threshold {:.3f}", v.reference)
                                     : fmt::format("baseline {:.3f}", v.reference);
    if (!v.anomalous) {
      r.observation = fmt::format("metric {} on {} is normal (peak {:.3f}, {}, window {:.0f}-{:.0f}s)", metric,
                                  target, v.peak, ref, window.start_s, window.end_s);
    } else if (v.direction == "missing samples") {
      r.observation = fmt::format("metric {} on {} is abnormal: missing samples from t={:.0f}s, the component stopped reporting",
                                  metric, target, *v.first_anomaly_t);
      r.flagged.push_back(target);
    } else {
      r.observation = fmt::format("metric {} on {} is abnormal: {} from t={:.0f}s (peak {:.3f}, {}; {} of {} samples)",
                                  metric, target, v.direction, *v.first_anomaly_t, v.peak, ref,
                                  v.anomalous_samples, v.evaluated);
      r.flagged.push_back(target);
    }
    return r;
  }

  ToolResult collect_trace(const ToolCall& call) {
    const auto& src = source();
    auto window = window_arg(call, src);
    auto traces = src.query_traces(window);
    struct Group {
      std::string service, pod, message;
      std::size_t count = 0;
      double total_ms = 0.0;
    };
    std::vector<Group> groups;
    std::vector<std::string> listed;
    std::size_t error_spans = 0, error_traces = 0;
    auto r = ok(call.tool, "");
    for (const auto& trace : traces) {
      std::vector<std::string> parts;
      for (const auto& span : trace.spans) {
        if (span.status != sandbox::SpanStatus::kError) continue;
        ++error_spans;
        parts.push_back(fmt::format("{} [{}] \"{}\" {:.1f}ms", span.service, span.pod, span.error_message,
                                    span.duration_ms));
        add_unique(r.flagged, span.pod);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
          return g.service == span.service && g.message == span.error_message;
        });
        if (it == groups.end()) {
          groups.push_back({span.service, span.pod, span.error_message, 0, 0.0});
          it = std::prev(groups.end());
        }
        ++it->count;
        it->total_ms += span.duration_ms;
      }
      if (parts.empty()) continue;
      ++error_traces;
      if (listed.size() < kMaxListedTraces) {
        listed.push_back(fmt::format("trace {} ({}, t={:.0f}s): {}", trace.trace_id, trace.request, trace.t,
                                     fmt::join(parts, "; ")));
      }
    }
    if (error_spans == 0) {
      r.observation = fmt::format("no abnormal spans between {:.0f}s and {:.0f}s ({} traces inspected)",
                                  window.start_s, window.end_s, traces.size());
      return r;
    }
    std::string out = fmt::format("{} error spans in {} of {} traces between {:.0f}s and {:.0f}s\n", error_spans,
                                  error_traces, traces.size(), window.start_s, window.end_s);
    out += "by service:\n";
    for (const auto& g : groups) {
      out += fmt::format("- service {} (pod {}): \"{}\" x{}, mean {:.1f}ms\n", g.service, g.pod, g.message,
                         g.count, g.total_ms / static_cast<double>(g.count));
    }
    out += "traces:\n";
    for (const auto& line : listed) out += line + "\n";
    if (error_traces > listed.size()) out += fmt::format("... {} more traces with error spans\n", error_traces - listed.size());
    out.pop_back();
    r.observation = std::move(out);
    return r;
  }

  ToolResult kubectl_logs(const ToolCall& call) {
    const auto& pod = *arg(call, "pod");
    const auto& src = source();
    if (!src.is_pod(pod)) return error_result(call.tool, fmt::format("unknown pod '{}'", pod));
    auto window = window_arg(call, src);
    std::vector<const sandbox::LogLine*> abnormal;
    auto logs = src.query_logs(pod, window);
    for (const auto& line : logs) {
      if (sandbox::is_abnormal_log(detector(), line.text)) abnormal.push_back(&line);
    }
    auto r = ok(call.tool, "");
    if (abnormal.empty()) {
      r.observation = fmt::format("no abnormal logs for pod {} between {:.0f}s and {:.0f}s ({} lines scanned)", pod,
                                  window.start_s, window.end_s, logs.size());
      return r;
    }
    r.flagged.push_back(pod);
    std::string out = fmt::format("{} abnormal log lines for pod {} between {:.0f}s and {:.0f}s:\n", abnormal.size(),
                                  pod, window.start_s, window.end_s);
    for (std::size_t i = 0; i < abnormal.size() && i < kMaxListedLogs; ++i) {
      out += fmt::format("[t={:.0f}s] {}\n", abnormal[i]->t, abnormal[i]->text);
    }
    if (abnormal.size() > kMaxListedLogs) out += fmt::format("... {} more\n", abnormal.size() - kMaxListedLogs);
    out.pop_back();
    r.observation = std::move(out);
    return r;
  }

  // --- analysis ----------------------------------------------------------

  ToolResult table_result(const std::string& tool, ResourceKind kind) {
    auto table = source().query_resource_state(kind);
    auto r = ok(tool, render_resource_table(table));
    for (const auto& row : table.rows) {
      if (!row.healthy) r.flagged.push_back(row.name);
    }
    return r;
  }

  ToolResult analyze(const std::string& tool, ResourceKind kind) { return table_result(tool, kind); }

  ToolResult namespaces() {
    return ok("get_all_namespace", fmt::format("namespaces: {}", fmt::join(source().namespaces(), ", ")));
  }

  ToolResult kubectl(const ToolCall& call) {
    static const std::string kSupported =
        "supported: get pods|nodes|services|deployments|statefulsets|namespaces, describe pod <name>, logs <pod>";
    auto words = tokenize_command(*arg(call, "command"));
    if (!words.empty() && words.front() == "kubectl") words.erase(words.begin());
    // Namespace flags only select the application namespace.
    std::string ns;
    std::vector<std::string> plain;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if ((words[i] == "-n" || words[i] == "--namespace") && i + 1 < words.size()) {
        ns = words[++i];
      } else if (words[i].starts_with("--namespace=")) {
        ns = words[i].substr(12);
      } else if (words[i] == "-A" || words[i] == "--all-namespaces" || words[i] == "-o" ||
                 words[i].starts_with("-o")) {
        if (words[i] == "-o" && i + 1 < words.size()) ++i;
      } else {
        plain.push_back(words[i]);
      }
    }
    const auto& src = source();
    if (!ns.empty() && ns != src.topology().app_namespace) {
      auto known = src.namespaces();
      if (std::find(known.begin(), known.end(), ns) == known.end()) {
        return error_result(call.tool, fmt::format("namespace '{}' not found", ns));
      }
      return ok(call.tool, fmt::format("No resources found in {} namespace.", ns));
    }
    if (plain.size() == 2 && plain[0] == "get") {
      if (plain[1] == "namespaces" || plain[1] == "ns" || plain[1] == "namespace") {
        auto r = namespaces();
        r.tool = call.tool;
        return r;
      }
      if (auto kind = sandbox::parse_resource_kind(plain[1])) return table_result(call.tool, *kind);
    }
    if (plain.size() == 3 && plain[0] == "describe" && (plain[1] == "pod" || plain[1] == "pods")) {
      return describe_pod(call.tool, plain[2]);
    }
    if (plain.size() == 2 && plain[0] == "logs") {
      const auto& pod = plain[1];
      if (!src.is_pod(pod)) return error_result(call.tool, fmt::format("pods \"{}\" not found", pod));
      auto logs = src.query_logs(pod, src.full_window());
      std::string out;
      std::size_t from = logs.size() > 20 ? logs.size() - 20 : 0;
      for (std::size_t i = from; i < logs.size(); ++i) {
        out += fmt::format("[t={:.0f}s] {}\n", logs[i].t, logs[i].text);
      }
      if (out.empty()) out = fmt::format("no log lines for pod {}\n", pod);
      out.pop_back();
      return ok(call.tool, out);
    }
    return error_result(call.tool, fmt::format("unsupported command '{}'; {}", *arg(call, "command"), kSupported));
  }

  static std::vector<std::string> tokenize_command(std::string_view command) {
    std::vector<std::string> words;
    for (const auto& w : split(command, ' ')) {
      auto t = trim(w);
      if (!t.empty()) words.push_back(t);
    }
    return words;
  }

  ToolResult describe_pod(const std::string& tool, const std::string& pod) {
    const auto& src = source();
    if (!src.is_pod(pod)) return error_result(tool, fmt::format("pods \"{}\" not found", pod));
    auto table = src.query_resource_state(ResourceKind::kPods);
    auto it = std::find_if(table.rows.begin(), table.rows.end(),
                           [&](const sandbox::ResourceRow& row) { return row.name == pod; });
    std::string out = fmt::format("Name: {}\nNamespace: {}\nStatus: {}\n", pod, src.topology().app_namespace,
                                  it->status);
    for (const auto& [k, v] : it->attributes) out += fmt::format("{}: {}\n", k, v);
    out += fmt::format("Conditions: {}", it->healthy ? "Ready" : "NotReady");
    if (!it->note.empty()) out += fmt::format("\nEvents: {}", it->note);
    auto r = ok(tool, out);
    if (!it->healthy) r.flagged.push_back(pod);
    return r;
  }

  ToolResult relevant_metric(const ToolCall& call) {
    const auto& query = *arg(call, "query");
    if (trim(query).empty()) return error_result(call.tool, "get_relevant_metric needs a non-empty query");
    auto q = to_lower(trim(query));
    auto q_tokens = tokenize(q);
    std::set<std::string> qs(q_tokens.begin(), q_tokens.end());
    struct Ranked {
      const sandbox::MetricInfo* info;
      double score;
    };
    std::vector<Ranked> ranked;
    for (const auto& m : sandbox::metric_catalog()) {
      double score = m.name.find(q) != std::string::npos ? 2.0 : 0.0;
      auto toks = tokenize(m.name + " " + m.description);
      std::set<std::string> ms(toks.begin(), toks.end());
      std::size_t inter = 0;
      for (const auto& t : qs) inter += ms.count(t);
      std::size_t uni = qs.size() + ms.size() - inter;
      if (uni > 0) score += static_cast<double>(inter) / static_cast<double>(uni);
      ranked.push_back({&m, score});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    std::string out = fmt::format("metrics relevant to \"{}\":", query);
    for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) {
      const auto* m = ranked[i].info;
      out += fmt::format("\n{}. {} ({}, {}): {}", i + 1, m->name,
                         m->scope == sandbox::MetricScope::kPod ? "pod" : "node", m->unit, m->description);
    }
    return ok(call.tool, out);
  }

  // --- SOP flow ----------------------------------------------------------

  void set_current(const kb::SopDoc& sop) {
    auto& s = session();
    if (!s.current_sop || s.current_sop->id != sop.id) {
      s.program.reset();
      s.last_run.reset();
    }
    s.current_sop = sop;
  }

  ToolResult match_sop(const ToolCall& call) {
    const auto& query = *arg(call, "query");
    auto hits = knowledge().match_sop(query, *ctx_.embedder, ctx_.top_k, ctx_.threshold);
    auto& s = session();
    s.last_matches = hits;
    auto r = ok(call.tool, "");
    if (hits.empty()) {
      r.observation = fmt::format("no SOP matched \"{}\" (threshold {:.2f}, {} SOPs searched)", query,
                                  ctx_.threshold, knowledge().sop_count());
    } else {
      set_current(hits.front().sop);
      std::string out = fmt::format("matched {} SOPs for \"{}\":", hits.size(), query);
      for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& sop = hits[i].sop;
        out += fmt::format("\n{}. [{}] {} (level {}, score {:.3f})", i + 1, sop.id, sop.name, sop.level,
                           hits[i].score);
        for (std::size_t j = 0; j < sop.steps.size(); ++j) out += fmt::format("\n   {}) {}", j + 1, sop.steps[j]);
      }
      r.observation = std::move(out);
    }
    r.payload = std::move(hits);
    return r;
  }

  ToolResult generate(const ToolCall& call) {
    const auto& info = *arg(call, "fault_info");
    std::optional<kb::SopDoc> parent;
    if (const auto* p = arg(call, "parent")) {
      parent = knowledge().get_sop(*p);
      if (!parent) return error_result(call.tool, fmt::format("no SOP with id '{}'", *p));
    } else {
      parent = session().current_sop;
    }
    auto sop = generate_sop(info, parent, ctx_);
    auto r = ok(call.tool, fmt::format("generated SOP [{}] {} (level {}, {} steps):", sop.id, sop.name, sop.level,
                                       sop.steps.size()));
    for (std::size_t j = 0; j < sop.steps.size(); ++j) r.observation += fmt::format("\n{}. {}", j + 1, sop.steps[j]);
    r.payload = sop;
    return r;
  }

  ToolResult generate_code(const ToolCall& call) {
    std::optional<kb::SopDoc> sop;
    if (const auto* id = arg(call, "sop")) {
      sop = knowledge().get_sop(*id);
      if (!sop) return error_result(call.tool, fmt::format("no SOP with id '{}'", *id));
    } else {
      sop = session().current_sop;
      if (!sop) return error_result(call.tool, "no SOP selected; call match_sop or generate_sop first");
    }
    set_current(*sop);
    session().program.reset();
    try {
      auto program = generate_sop_code(*sop, registry_, ctx_);
      session().program = program;
      auto r = ok(call.tool, fmt::format("generated program for SOP [{}] ({} statements):\n```\n{}```", sop->id,
                                         program.statements.size(), format_program(program)));
      r.payload = std::move(program);
      return r;
    } catch (const ProgramValidationError& e) {
      return error_result(call.tool, fmt::format("program for SOP [{}] failed validation: {}", sop->id,
                                                 fmt::join(e.violations(), "; ")));
    }
  }

  ToolResult run_sop() {
    auto& s = session();
    if (!s.program) return error_result("run_sop", "no SOP program to run; call generate_sop_code first");
    auto report = run_program(*s.program, registry_, ctx_);
    s.last_run = report;
    ToolResult r;
    r.tool = "run_sop";
    r.observation = render_run_report(report);
    r.success = report.success;
    r.flagged = report.flagged;
    if (report.success) {
      s.last_run_observation = report.findings.empty() ? r.observation : fmt::format("{}", fmt::join(report.findings, "\n"));
    } else {
      r.error = fmt::format("statement {}: {}", *report.failed_index, report.error);
    }
    r.payload = std::move(report);
    return r;
  }

  ToolResult match_observation(const ToolCall& call) {
    auto& s = session();
    std::string text;
    if (const auto* o = arg(call, "observation")) text = *o;
    else if (!s.last_run_observation.empty()) text = s.last_run_observation;
    else text = s.alert;
    if (trim(text).empty()) return error_result(call.tool, "no observation to match");
    auto hits = knowledge().match_observation(text, *ctx_.embedder, ctx_.top_k, ctx_.threshold);
    auto r = ok(call.tool, "");
    if (hits.empty()) {
      r.observation = fmt::format("no historical incident matched the observation (threshold {:.2f}, {} incidents searched)",
                                  ctx_.threshold, knowledge().incident_count());
    } else {
      r.observation = fmt::format("matched {} historical incidents:", hits.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& inc = hits[i].incident;
        r.observation += fmt::format("\n{}. [{}] type={} score={:.3f}: {}", i + 1, inc.id, inc.fault_type,
                                     hits[i].score, inc.manifestation);
      }
    }
    r.payload = std::move(hits);
    return r;
  }

  ToolResult speak_tool(const ToolCall& call) {
    const auto* explanation = arg(call, "explanation");
    auto report = speak(parse_causes(*arg(call, "causes")), explanation ? *explanation : "");
    std::string out = "root causes:";
    for (std::size_t i = 0; i < report.causes.size(); ++i) {
      const auto& c = report.causes[i];
      out += fmt::format("\n{}. location={} type={}", i + 1, c.location, c.type.empty() ? "unknown" : c.type);
    }
    if (!report.explanation.empty()) out += "\nexplanation: " + report.explanation;
    for (const auto& w : report.warnings) out += "\nwarning: " + w;
    auto r = ok(call.tool, out);
    r.terminal = true;
    r.payload = std::move(report);
    return r;
  }

  const ToolRegistry& registry_;
  ToolContext& ctx_;
};

ParamSpec req(std::string name, std::string type, std::string description) {
  return {std::move(name), std::move(type), true, std::move(description)};
}
ParamSpec opt(std::string name, std::string type, std::string description) {
  return {std::move(name), std::move(type), false, std::move(description)};
}

}  // namespace

ToolRegistry ToolRegistry::standard() {
  ToolRegistry r;
  auto start = opt("start", "seconds", "window start, default the episode start");
  auto end = opt("end", "seconds", "window end, default the episode end");
  using C = ToolCategory;
  r.specs_ = {
      {"whether_is_abnormal_metric",
       "Check one metric of one pod or node for anomalies and describe the deviation.",
       {req("target", "component", "pod or node name"), req("metric", "metric", "metric name"), start, end},
       C::kObservability},
      {"collect_trace", "List error spans across all call chains, grouped by service.", {start, end},
       C::kObservability},
      {"kubectl_logs", "Show the abnormal log lines of one pod.", {req("pod", "pod", "pod name"), start, end},
       C::kObservability},
      {"match_sop", "Find the SOPs whose names best match the fault information.",
       {req("query", "text", "fault information")}, C::kSopFlow},
      {"generate_sop", "Write a new SOP for fault information no existing SOP covers.",
       {req("fault_info", "text", "fault information"), opt("parent", "sop", "id of the SOP being refined")},
       C::kSopFlow},
      {"generate_sop_code", "Convert an SOP into an executable SopProgram.",
       {opt("sop", "sop", "SOP id, default the current SOP")}, C::kSopFlow},
      {"run_sop", "Run the current SopProgram from start to finish and report its findings.", {}, C::kSopFlow},
      {"match_observation", "Recall historical incidents similar to an observation.",
       {opt("observation", "text", "observation text, default the last run_sop findings")}, C::kSopFlow},
      {"pod_analyze", "Analyze all pods' status.", {}, C::kAnalysis},
      {"node_analyze", "Analyze all nodes' status.", {}, C::kAnalysis},
      {"service_analyze", "Analyze all services' status.", {}, C::kAnalysis},
      {"deployment_analyze", "Analyze all deployments' status.", {}, C::kAnalysis},
      {"statefulset_analyze", "Analyze all statefulsets' status.", {}, C::kAnalysis},
      {"run_kubectl_command", "Execute a read-only kubectl command (get, describe pod, logs).",
       {req("command", "text", "kubectl command")}, C::kAnalysis},
      {"get_all_namespace", "List all namespaces.", {}, C::kAnalysis},
      {"get_relevant_metric", "List the metric names most relevant to a query.",
       {req("query", "text", "what to measure")}, C::kAnalysis},
      {"Speak", "Report the root causes and end the diagnosis.",
       {req("causes", "causes", "location:type pairs separated by ';', at most 3"),
        opt("explanation", "text", "short justification")},
       C::kTerminal},
  };
  return r;
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
  for (const auto& s : specs_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.name);
  return out;
}

std::optional<std::string> ToolRegistry::check(const ToolCall& call) const {
  const auto* spec = find(call.tool);
  if (!spec) return fmt::format("unknown tool '{}'", call.tool);
  for (const auto& [name, value] : call.args) {
    if (!spec->find_param(name)) return fmt::format("{} has no argument '{}'", call.tool, name);
  }
  for (const auto& p : spec->params) {
    if (p.required && !call.args.count(p.name)) return fmt::format("{} needs argument '{}'", call.tool, p.name);
  }
  return std::nullopt;
}

ToolResult ToolRegistry::invoke(const ToolCall& call, ToolContext& ctx) const {
  if (auto problem = check(call)) return error_result(call.tool, *problem);
  try {
    return Tools(*this, ctx).dispatch(call);
  } catch (const AbortedEpisode&) {
    throw;
  } catch (const BackendError&) {
    throw;
  } catch (const ScriptExhaustedError&) {
    throw;
  } catch (const GenerationParseError& e) {
    return error_result(call.tool, fmt::format("could not parse the generated reply: {}", e.what()));
  } catch (const Error& e) {
    return error_result(call.tool, e.what());
  }
}

std::string ToolRegistry::catalog_text() const {
  std::string out;
  for (const auto& s : specs_) {
    out += fmt::format("{} [{}]: {}\n", s.name, tool_category_name(s.category), s.description);
    for (const auto& p : s.params) {
      out += fmt::format("  {}: {}{} - {}\n", p.name, p.type, p.required ? "" : " (optional)", p.description);
    }
  }
  return out;
}

std::string ToolRegistry::catalog_json() const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& s : specs_) {
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (const auto& p : s.params) {
      params.push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}, {"description", p.description}});
    }
    doc.push_back({{"name", s.name},
                   {"category", tool_category_name(s.category)},
                   {"description", s.description},
                   {"params", params}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace sopflow::tools
