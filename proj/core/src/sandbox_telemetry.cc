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

// Fault signatures:
//   CpuStress         cpu_usage -> magnitude; "CPU throttling" log
//   MemoryStress      memory_usage -> magnitude; "OOM" log at >= 0.95
//   PodFailure        pod metrics absent; spans "Service unavailable";
//                     callers log "connection refused"; phase Failed
//   NetworkDelay      affected spans += magnitude ms; latency_p99_ms up
//   NetworkLoss       error_rate up; spans "request timeout"
//   NetworkCorrupt    error_rate up; spans "checksum mismatch"
//   NetworkDuplicate  error_rate up; spans "duplicate ack"
//   NetworkPartition  error_rate 1; spans "connection refused"
//   NetworkBandwidth  node throughput -> cap; crossing spans += 10000/cap ms

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/sandbox.h"
#include "sopflow/util.h"

namespace sopflow::sandbox {

using ojson = nlohmann::ordered_json;

const std::vector<MetricInfo>& metric_catalog() {
  static const std::vector<MetricInfo> catalog = {
      {"cpu_usage", MetricScope::kPod, "fraction", "container CPU usage relative to its limit"},
      {"memory_usage", MetricScope::kPod, "fraction", "container working-set memory relative to its limit"},
      {"latency_p99_ms", MetricScope::kPod, "ms", "99th percentile request latency served by the pod"},
      {"error_rate", MetricScope::kPod, "fraction", "fraction of requests to or from the pod that failed"},
      {"request_rate", MetricScope::kPod, "req/s", "requests served per second"},
      {"node_cpu_usage", MetricScope::kNode, "fraction", "node CPU usage"},
      {"node_memory_usage", MetricScope::kNode, "fraction", "node memory usage"},
      {"node_network_throughput_mbps", MetricScope::kNode, "Mbps", "node network throughput"},
  };
  return catalog;
}

const MetricInfo* find_metric(std::string_view name) {
  const auto& catalog = metric_catalog();
  auto it = std::find_if(catalog.begin(), catalog.end(), [&](const MetricInfo& m) { return m.name == name; });
  return it == catalog.end() ? nullptr : &*it;
}

namespace {

constexpr double kClip = 1.5;

double unit_hash(std::string_view a, std::string_view b) {
  return static_cast<double>(fnv1a64(fmt::format("{}/{}", a, b)) % 1000) / 1000.0;
}

std::uint64_t seed_for(std::uint64_t seed, std::string_view label) {
  std::uint64_t state = seed ^ fnv1a64(label);
  return splitmix64(state);
}

double clipped_normal(GaussianSource& rng) { return std::clamp(rng.normal(), -kClip, kClip); }

double request_latency_ms(const Service& s) { return 2.0 * s.base_latency_ms + 1.0; }

}  // namespace

NominalBand nominal_band(const Topology& topo, std::string_view component, std::string_view metric) {
  if (const auto* pod = topo.find_pod(component)) {
    const auto* svc = topo.find_service(pod->service);
    if (metric == "cpu_usage") return {0.20 + 0.10 * unit_hash(component, metric), 0.02};
    if (metric == "memory_usage") return {0.35 + 0.10 * unit_hash(component, metric), 0.02};
    if (metric == "latency_p99_ms") {
      double b = request_latency_ms(*svc);
      return {b, 0.025 * b};
    }
    if (metric == "error_rate") return {0.003, 0.001};
    if (metric == "request_rate") return {svc->base_request_rate, 0.025 * svc->base_request_rate};
  } else if (topo.find_node(component)) {
    if (metric == "node_cpu_usage") return {0.30 + 0.10 * unit_hash(component, metric), 0.02};
    if (metric == "node_memory_usage") return {0.45 + 0.10 * unit_hash(component, metric), 0.02};
    if (metric == "node_network_throughput_mbps") {
      double b = 600.0 + 100.0 * unit_hash(component, metric);
      return {b, 0.02 * b};
    }
  }
  throw NotFoundError(fmt::format("no metric {} on component {}", metric, component));
}

namespace {

struct Renderer {
  const EpisodeScenario& s;
  const Topology& topo;
  std::vector<double> times;
  // Running counters for fraction-based span errors, one per fault.
  std::vector<std::uint64_t> affected_count;

  explicit Renderer(const EpisodeScenario& scenario) : s(scenario), topo(scenario.topology) {
    for (double t = s.window.start_s; t < s.window.end_s - 1e-9; t += s.step_s) times.push_back(t);
    affected_count.assign(s.faults.size(), 0);
  }

  std::string service_of_pod(std::string_view pod) const { return topo.find_pod(pod)->service; }

  std::string node_of_service(std::string_view service) const {
    return topo.pods_of(service).front()->node;
  }

  // Does fault f touch the call caller->callee?
  bool edge_affected(const FaultSpec& f, std::string_view caller, std::string_view callee) const {
    switch (f.target.kind) {
      case TargetKind::kPod: {
        auto svc = service_of_pod(f.target.a);
        return caller == svc || callee == svc;
      }
      case TargetKind::kEdge:
        return caller == f.target.a && callee == f.target.b;
      case TargetKind::kNodePair: {
        auto a = node_of_service(caller);
        auto b = node_of_service(callee);
        return (a == f.target.a && b == f.target.b) || (a == f.target.b && b == f.target.a);
      }
    }
    return false;
  }

  // Pods whose own metrics carry a network fault's signature.
  std::vector<std::string> metric_pods(const FaultSpec& f) const {
    std::vector<std::string> out;
    switch (f.target.kind) {
      case TargetKind::kPod:
        out.push_back(f.target.a);
        break;
      case TargetKind::kEdge:
        for (const auto* p : topo.pods_of(f.target.b)) out.push_back(p->id);
        break;
      case TargetKind::kNodePair:
        for (const auto& e : topo.call_edges) {
          if (!edge_affected(f, e.caller, e.callee)) continue;
          for (const auto* p : topo.pods_of(e.callee)) {
            if (std::find(out.begin(), out.end(), p->id) == out.end()) out.push_back(p->id);
          }
        }
        break;
    }
    return out;
  }

  bool pod_failed(std::string_view pod, double t) const {
    return std::any_of(s.faults.begin(), s.faults.end(), [&](const FaultSpec& f) {
      return f.type == FaultType::kPodFailure && f.target.a == pod && f.active_at(t);
    });
  }

  double metric_value(std::string_view component, std::string_view metric, double t,
                      double nominal) const {
    double v = nominal;
    for (const auto& f : s.faults) {
      if (!f.active_at(t)) continue;
      bool on_pod = f.target.kind == TargetKind::kPod && f.target.a == component;
      auto band = nominal_band(topo, component, metric);
      double noise = nominal - band.baseline;
      switch (f.type) {
        case FaultType::kCpuStress:
          if (on_pod && metric == "cpu_usage") v = std::clamp(f.magnitude + noise, 0.0, 1.0);
          break;
        case FaultType::kMemoryStress:
          if (on_pod && metric == "memory_usage") v = std::clamp(f.magnitude + noise, 0.0, 1.0);
          break;
        case FaultType::kNetworkDelay:
          if (metric == "latency_p99_ms") {
            auto pods = metric_pods(f);
            if (std::find(pods.begin(), pods.end(), component) != pods.end()) v += f.magnitude;
          }
          break;
        case FaultType::kNetworkLoss:
        case FaultType::kNetworkDuplicate:
        case FaultType::kNetworkCorrupt:
        case FaultType::kNetworkPartition:
          if (metric == "error_rate") {
            auto pods = metric_pods(f);
            if (std::find(pods.begin(), pods.end(), component) != pods.end()) {
              double level = f.type == FaultType::kNetworkPartition ? 1.0 : f.magnitude;
              v = std::clamp(std::max(v, level + noise), 0.0, 1.0);
            }
          }
          break;
        case FaultType::kNetworkBandwidth:
          if (metric == "node_network_throughput_mbps" &&
              (component == f.target.a || component == f.target.b)) {
            v = f.magnitude * (1.0 + noise / band.baseline);
          } else if (metric == "latency_p99_ms") {
            auto pods = metric_pods(f);
            if (std::find(pods.begin(), pods.end(), component) != pods.end()) {
              v += 10000.0 / f.magnitude;
            }
          }
          break;
        case FaultType::kPodFailure:
          break;
      }
    }
    return v;
  }

  void render_metrics(Telemetry& out) const {
    for (const auto& node : topo.nodes) {
      for (const auto& m : metric_catalog()) {
        if (m.scope != MetricScope::kNode) continue;
        out.metrics.push_back(render_series(node.name, m.name, false));
      }
    }
    for (const auto& pod : topo.pods) {
      for (const auto& m : metric_catalog()) {
        if (m.scope != MetricScope::kPod) continue;
        out.metrics.push_back(render_series(pod.id, m.name, true));
      }
    }
  }

  MetricSeries render_series(const std::string& component, const std::string& metric, bool is_pod) const {
    MetricSeries series{component, metric, {}};
    auto band = nominal_band(topo, component, metric);
    GaussianSource rng(seed_for(s.seed, fmt::format("metric/{}/{}", component, metric)));
    for (double t : times) {
      double nominal = band.baseline + band.noise_sigma * clipped_normal(rng);
      if (is_pod && pod_failed(component, t)) continue;
      series.samples.push_back({t, metric_value(component, metric, t, nominal)});
    }
    return series;
  }

  // --- logs ---------------------------------------------------------------

  void render_logs(Telemetry& out, const Telemetry& with_metrics) const {
    auto metric_at = [&](const std::string& pod, std::string_view metric, double t) -> std::optional<double> {
      for (const auto& series : with_metrics.metrics) {
        if (series.component != pod || series.metric != metric) continue;
        for (const auto& sample : series.samples) {
          if (sample.t == t) return sample.value;
        }
      }
      return std::nullopt;
    };
    for (double t : times) {
      for (const auto& pod : topo.pods) {
        auto add = [&](std::string text) { out.logs.push_back({pod.id, t, std::move(text)}); };
        if (!pod_failed(pod.id, t)) {
          auto rate = metric_at(pod.id, "request_rate", t).value_or(0.0);
          auto lat = metric_at(pod.id, "latency_p99_ms", t).value_or(0.0);
          add(fmt::format("INFO {} handled {} requests, p99 {:.1f}ms", pod.service,
                          static_cast<long>(std::lround(rate * s.step_s)), lat));
        }
        for (const auto& f : s.faults) {
          if (!f.active_at(t)) continue;
          fault_logs(f, pod, t, add, metric_at);
        }
      }
    }
  }

  template <typename Add, typename MetricAt>
  void fault_logs(const FaultSpec& f, const Pod& pod, double t, Add& add, MetricAt& metric_at) const {
    bool is_target = f.target.kind == TargetKind::kPod && f.target.a == pod.id;
    switch (f.type) {
      case FaultType::kCpuStress:
        if (is_target) {
          auto v = metric_at(pod.id, "cpu_usage", t).value_or(f.magnitude);
          add(fmt::format("WARN CPU throttling detected on container {} (usage {:.0f}%)", pod.id, v * 100));
        }
        break;
      case FaultType::kMemoryStress:
        if (is_target) {
          if (f.magnitude >= 0.95) {
            add(fmt::format("ERROR OOM: container {} exceeded its memory limit and was OOMKilled", pod.id));
          } else {
            auto v = metric_at(pod.id, "memory_usage", t).value_or(f.magnitude);
            add(fmt::format("WARN memory usage at {:.0f}% of limit", v * 100));
          }
        }
        break;
      case FaultType::kPodFailure: {
        auto failed_svc = service_of_pod(f.target.a);
        if (topo.find_edge(pod.service, failed_svc)) {
          add(fmt::format("ERROR connection refused: dial {}:8080", failed_svc));
        }
        break;
      }
      case FaultType::kNetworkPartition:
        if (f.target.kind == TargetKind::kPod) {
          auto svc = service_of_pod(f.target.a);
          if (is_target) add(fmt::format("ERROR connection refused: {} is partitioned from its peers", pod.id));
          else if (topo.find_edge(pod.service, svc)) add(fmt::format("ERROR connection refused: dial {}:8080", svc));
        } else if (f.target.kind == TargetKind::kEdge && pod.service == f.target.a) {
          add(fmt::format("ERROR connection refused: dial {}:8080", f.target.b));
        }
        break;
      case FaultType::kNetworkLoss:
      case FaultType::kNetworkCorrupt:
      case FaultType::kNetworkDuplicate: {
        std::string_view what = f.type == FaultType::kNetworkLoss      ? "request timeout after packet loss"
                                : f.type == FaultType::kNetworkCorrupt ? "checksum mismatch in received payload"
                                                                       : "duplicate ack received on stream";
        if (f.target.kind == TargetKind::kPod && is_target) {
          add(fmt::format("ERROR {} on {}", what, pod.id));
        } else if (f.target.kind == TargetKind::kEdge && pod.service == f.target.a) {
          add(fmt::format("ERROR {} calling {}", what, f.target.b));
        }
        break;
      }
      case FaultType::kNetworkDelay:
      case FaultType::kNetworkBandwidth:
        break;
    }
  }

  // --- traces -------------------------------------------------------------

  struct SpanOutcome {
    bool error = false;
    bool skip_children = false;
    std::string message;
    double extra_ms = 0.0;
  };

  SpanOutcome span_faults(std::string_view caller, std::string_view service, double t) {
    SpanOutcome out;
    for (std::size_t i = 0; i < s.faults.size(); ++i) {
      const auto& f = s.faults[i];
      if (!f.active_at(t)) continue;
      if (f.type == FaultType::kPodFailure) {
        if (service == service_of_pod(f.target.a)) {
          out.error = out.skip_children = true;
          if (out.message.empty()) out.message = "Service unavailable";
        }
        continue;
      }
      if (caller.empty() || !edge_affected(f, caller, service)) continue;
      switch (f.type) {
        case FaultType::kNetworkPartition:
          out.error = out.skip_children = true;
          if (out.message.empty()) out.message = "connection refused";
          break;
        case FaultType::kNetworkLoss:
        case FaultType::kNetworkCorrupt:
        case FaultType::kNetworkDuplicate: {
          auto k = affected_count[i]++;
          bool hit = std::floor(static_cast<double>(k + 1) * f.magnitude) >
                     std::floor(static_cast<double>(k) * f.magnitude);
          if (hit) {
            out.error = out.skip_children = true;
            if (out.message.empty()) {
              out.message = f.type == FaultType::kNetworkLoss      ? "request timeout"
                            : f.type == FaultType::kNetworkCorrupt ? "checksum mismatch"
                                                                   : "duplicate ack";
            }
          }
          break;
        }
        case FaultType::kNetworkDelay:
          out.extra_ms += f.magnitude;
          break;
        case FaultType::kNetworkBandwidth:
          out.extra_ms += 10000.0 / f.magnitude;
          break;
        default:
          break;
      }
    }
    return out;
  }

  // Appends the span for `node` and its subtree; returns its duration.
  double emit_span(Trace& trace, const CallNode& node, const std::string& caller,
                   const std::string& parent_id, double start_s, GaussianSource& rng) {
    const auto* svc = topo.find_service(node.service);
    double own = svc->base_latency_ms * (1.0 + 0.05 * clipped_normal(rng));
    double hop = caller.empty() ? 0.0 : topo.find_edge(caller, node.service)->baseline_latency_ms;
    auto outcome = span_faults(caller, node.service, trace.t);

    std::size_t index = trace.spans.size();
    Span span;
    span.trace_id = trace.trace_id;
    span.span_id = fmt::format("{}-{:02d}", trace.trace_id, index);
    span.parent_span_id = parent_id;
    span.service = node.service;
    span.pod = topo.pods_of(node.service).front()->id;
    span.caller = caller;
    span.start_s = start_s;
    trace.spans.push_back(span);

    double children_ms = 0.0;
    if (!outcome.skip_children) {
      for (const auto& child : node.children) {
        double child_start = start_s + (hop + own + children_ms) / 1000.0;
        children_ms += emit_span(trace, child, node.service, span.span_id, child_start, rng);
      }
    }
    double duration = outcome.skip_children ? hop + 0.5 : hop + own + children_ms;
    duration += outcome.extra_ms;
    auto& stored = trace.spans[index];
    stored.duration_ms = duration;
    if (outcome.error) {
      stored.status = SpanStatus::kError;
      stored.error_message = outcome.message;
    }
    return duration;
  }

  void render_traces(Telemetry& out) {
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      for (std::size_t ri = 0; ri < topo.requests.size(); ++ri) {
        const auto& req = topo.requests[ri];
        Trace trace;
        trace.t = times[ti];
        trace.request = req.name;
        trace.trace_id = fmt::format("{:016x}", seed_for(s.seed, fmt::format("trace/{}/{}", ti, ri)));
        GaussianSource rng(seed_for(s.seed, fmt::format("span-noise/{}/{}", ti, ri)));
        emit_span(trace, req.root, "", "", trace.t, rng);
        out.traces.push_back(std::move(trace));
      }
    }
  }
};

}  // namespace

Telemetry render_telemetry(const EpisodeScenario& scenario) {
  Renderer r(scenario);
  Telemetry out;
  r.render_metrics(out);
  r.render_logs(out, out);
  r.render_traces(out);
  return out;
}

std::string Telemetry::serialize() const {
  std::string out;
  for (const auto& m : metrics) {
    ojson samples = ojson::array();
    for (const auto& s : m.samples) samples.push_back({s.t, s.value});
    out += ojson{{"kind", "metric"}, {"component", m.component}, {"metric", m.metric}, {"samples", samples}}.dump();
    out += '\n';
  }
  for (const auto& l : logs) {
    out += ojson{{"kind", "log"}, {"pod", l.pod}, {"t", l.t}, {"text", l.text}}.dump();
    out += '\n';
  }
  for (const auto& tr : traces) {
    for (const auto& sp : tr.spans) {
      out += ojson{{"kind", "span"},
                   {"trace_id", sp.trace_id},
                   {"span_id", sp.span_id},
                   {"parent_span_id", sp.parent_span_id},
                   {"request", tr.request},
                   {"service", sp.service},
                   {"pod", sp.pod},
                   {"caller", sp.caller},
                   {"start_s", sp.start_s},
                   {"duration_ms", sp.duration_ms},
                   {"status", sp.status == SpanStatus::kOk ? "ok" : "error"},
                   {"error_message", sp.error_message}}
                 .dump();
      out += '\n';
    }
  }
  return out;
}

std::uint64_t Telemetry::fingerprint() const { return fnv1a64(serialize()); }

void export_telemetry(const Telemetry& telemetry, const std::filesystem::path& dir) {
  std::string metrics, logs, spans;
  std::istringstream in(telemetry.serialize());
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(R"({"kind":"metric")", 0) == 0) metrics += line + "\n";
    else if (line.rfind(R"({"kind":"log")", 0) == 0) logs += line + "\n";
    else spans += line + "\n";
  }
  write_file(dir / "metrics.jsonl", metrics);
  write_file(dir / "logs.jsonl", logs);
  write_file(dir / "traces.jsonl", spans);
}

}  // namespace sopflow::sandbox
