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

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/sandbox.h"
#include "sopflow/util.h"

namespace sopflow::sandbox {

std::string_view resource_kind_name(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::kPods: return "pods";
    case ResourceKind::kNodes: return "nodes";
    case ResourceKind::kServices: return "services";
    case ResourceKind::kDeployments: return "deployments";
    case ResourceKind::kStatefulSets: return "statefulsets";
  }
  return "?";
}

std::optional<ResourceKind> parse_resource_kind(std::string_view text) {
  auto lower = to_lower(trim(text));
  if (lower == "pods" || lower == "pod" || lower == "po") return ResourceKind::kPods;
  if (lower == "nodes" || lower == "node" || lower == "no") return ResourceKind::kNodes;
  if (lower == "services" || lower == "service" || lower == "svc") return ResourceKind::kServices;
  if (lower == "deployments" || lower == "deployment" || lower == "deploy") return ResourceKind::kDeployments;
  if (lower == "statefulsets" || lower == "statefulset" || lower == "sts") return ResourceKind::kStatefulSets;
  return std::nullopt;
}

DataSource::DataSource(EpisodeScenario scenario)
    : scenario_(std::move(scenario)), telemetry_(render_telemetry(scenario_)) {
  for (std::size_t i = 0; i < telemetry_.metrics.size(); ++i) {
    const auto& m = telemetry_.metrics[i];
    series_index_.emplace(std::make_pair(m.component, m.metric), i);
  }
}

double DataSource::now() const {
  double last = scenario_.window.start_s;
  for (double t = scenario_.window.start_s; t < scenario_.window.end_s - 1e-9; t += scenario_.step_s) last = t;
  return last;
}

bool DataSource::is_pod(std::string_view id) const { return topology().find_pod(id) != nullptr; }
bool DataSource::is_node(std::string_view id) const { return topology().find_node(id) != nullptr; }

std::vector<std::string> DataSource::components() const {
  std::vector<std::string> out;
  for (const auto& n : topology().nodes) out.push_back(n.name);
  for (const auto& p : topology().pods) out.push_back(p.id);
  return out;
}

MetricSeries DataSource::query_metrics(std::string_view component, std::string_view metric,
                                       QueryWindow window) const {
  if (!is_pod(component) && !is_node(component)) {
    throw NotFoundError(fmt::format("unknown component '{}'", component));
  }
  const auto* info = find_metric(metric);
  if (!info) throw NotFoundError(fmt::format("unknown metric '{}'", metric));
  auto it = series_index_.find(std::make_pair(std::string(component), std::string(metric)));
  if (it == series_index_.end()) {
    throw NotFoundError(fmt::format("metric '{}' is not collected for '{}'", metric, component));
  }
  const auto& full = telemetry_.metrics[it->second];
  MetricSeries out{full.component, full.metric, {}};
  for (const auto& s : full.samples) {
    if (window.contains(s.t)) out.samples.push_back(s);
  }
  return out;
}

std::vector<LogLine> DataSource::query_logs(std::string_view pod, QueryWindow window) const {
  if (!is_pod(pod)) throw NotFoundError(fmt::format("unknown pod '{}'", pod));
  std::vector<LogLine> out;
  for (const auto& l : telemetry_.logs) {
    if (l.pod == pod && window.contains(l.t)) out.push_back(l);
  }
  return out;
}

std::vector<Trace> DataSource::query_traces(QueryWindow window) const {
  std::vector<Trace> out;
  for (const auto& t : telemetry_.traces) {
    if (window.contains(t.t)) out.push_back(t);
  }
  return out;
}

std::vector<std::string> DataSource::namespaces() const {
  return {"default", "kube-system", "monitoring", topology().app_namespace};
}

ResourceTable DataSource::query_resource_state(ResourceKind kind) const {
  return query_resource_state(kind, now());
}

ResourceTable DataSource::query_resource_state(ResourceKind kind, double at_s) const {
  const auto& topo = topology();
  ResourceTable table{kind, at_s, {}};
  auto active = [&](FaultType type, std::string_view pod) {
    return std::any_of(scenario_.faults.begin(), scenario_.faults.end(), [&](const FaultSpec& f) {
      return f.type == type && f.target.kind == TargetKind::kPod && f.target.a == pod && f.active_at(at_s);
    });
  };
  auto oom_killed = [&](std::string_view pod) {
    return std::any_of(scenario_.faults.begin(), scenario_.faults.end(), [&](const FaultSpec& f) {
      return f.type == FaultType::kMemoryStress && f.target.a == pod && f.magnitude >= 0.95 &&
             f.active_at(at_s);
    });
  };
  auto ready_pods = [&](std::string_view service) {
    std::size_t ready = 0;
    auto pods = topo.pods_of(service);
    for (const auto* p : pods) {
      if (!active(FaultType::kPodFailure, p->id)) ++ready;
    }
    return std::make_pair(ready, pods.size());
  };

  switch (kind) {
    case ResourceKind::kPods:
      for (const auto& p : topo.pods) {
        ResourceRow row;
        row.name = p.id;
        bool failed = active(FaultType::kPodFailure, p.id);
        bool oom = oom_killed(p.id);
        row.status = std::string(pod_phase_name(failed ? PodPhase::kFailed : p.phase));
        row.healthy = !failed && !oom && p.phase == PodPhase::kRunning;
        row.attributes = {{"service", p.service},
                          {"node", p.node},
                          {"ready", failed ? "0/1" : "1/1"},
                          {"restarts", oom ? "1" : "0"}};
        if (failed) row.note = "container not ready: readiness probe failing";
        else if (oom) row.note = "last termination reason: OOMKilled";
        table.rows.push_back(std::move(row));
      }
      break;
    case ResourceKind::kNodes:
      for (const auto& n : topo.nodes) {
        std::size_t pods = 0;
        for (const auto& p : topo.pods) pods += p.node == n.name ? 1 : 0;
        table.rows.push_back({n.name,
                              "Ready",
                              true,
                              {{"cpu", fmt::format("{:g}", n.cpu_cores)},
                               {"memory", fmt::format("{:g}Gi", n.memory_gib)},
                               {"pods", std::to_string(pods)}},
                              ""});
      }
      break;
    case ResourceKind::kServices:
      for (const auto& s : topo.services) {
        auto [ready, total] = ready_pods(s.name);
        ResourceRow row{s.name, ready == total ? "Active" : "Degraded", ready == total,
                        {{"type", "ClusterIP"}, {"endpoints", fmt::format("{}/{}", ready, total)}}, ""};
        if (ready != total) row.note = "no ready endpoints";
        table.rows.push_back(std::move(row));
      }
      break;
    case ResourceKind::kDeployments:
    case ResourceKind::kStatefulSets:
      for (const auto& s : topo.services) {
        if (s.stateful != (kind == ResourceKind::kStatefulSets)) continue;
        auto [ready, total] = ready_pods(s.name);
        ResourceRow row{s.name, ready == total ? "Available" : "Unavailable", ready == total,
                        {{"ready", fmt::format("{}/{}", ready, total)}}, ""};
        if (ready != total) row.note = "minimum replicas unavailable";
        table.rows.push_back(std::move(row));
      }
      break;
  }
  return table;
}

// ---------------------------------------------------------------------------

DetectorConfig DetectorConfig::defaults() {
  DetectorConfig c;
  c.log_keywords = {"error", "timeout", "refused", "OOM", "throttling"};
  c.metric_rules = {
      {"cpu_usage", {0.8, 0.0, 0.0}},
      {"memory_usage", {0.85, 0.0, 0.0}},
      {"error_rate", {0.05, 0.0, 0.0}},
      {"node_cpu_usage", {0.9, 0.0, 0.0}},
      {"node_memory_usage", {0.9, 0.0, 0.0}},
      {"latency_p99_ms", {std::nullopt, 0.5, 0.03}},
      {"request_rate", {std::nullopt, 1.0, 0.03}},
      {"node_network_throughput_mbps", {std::nullopt, 5.0, 0.03}},
  };
  return c;
}

DetectorConfig DetectorConfig::from_json(std::string_view text) {
  auto c = defaults();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("detector config is not valid JSON: {}", e.what()));
  }
  c.k_sigma = doc.value("k_sigma", c.k_sigma);
  c.baseline_samples = doc.value("baseline_samples", c.baseline_samples);
  if (doc.contains("log_keywords")) c.log_keywords = doc["log_keywords"].get<std::vector<std::string>>();
  if (doc.contains("metric_rules")) {
    for (const auto& [name, rule] : doc["metric_rules"].items()) {
      MetricRule r = c.metric_rules.count(name) ? c.metric_rules.at(name) : MetricRule{};
      if (rule.contains("threshold")) {
        r.threshold = rule["threshold"].is_null() ? std::nullopt : std::optional<double>(rule["threshold"].get<double>());
      }
      r.sigma_floor_abs = rule.value("sigma_floor_abs", r.sigma_floor_abs);
      r.sigma_floor_rel = rule.value("sigma_floor_rel", r.sigma_floor_rel);
      c.metric_rules[name] = r;
    }
  }
  if (c.k_sigma <= 0.0) throw ConfigError("k_sigma must be positive");
  if (c.baseline_samples < 2) throw ConfigError("baseline_samples must be >= 2");
  return c;
}

std::string DetectorConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["k_sigma"] = k_sigma;
  doc["baseline_samples"] = baseline_samples;
  doc["log_keywords"] = log_keywords;
  doc["metric_rules"] = nlohmann::ordered_json::object();
  for (const auto& [name, r] : metric_rules) {
    nlohmann::ordered_json rule;
    rule["threshold"] = r.threshold ? nlohmann::ordered_json(*r.threshold) : nlohmann::ordered_json(nullptr);
    rule["sigma_floor_abs"] = r.sigma_floor_abs;
    rule["sigma_floor_rel"] = r.sigma_floor_rel;
    doc["metric_rules"][name] = rule;
  }
  return doc.dump(2) + "\n";
}

bool is_abnormal_log(const DetectorConfig& config, std::string_view line) {
  return std::any_of(config.log_keywords.begin(), config.log_keywords.end(),
                     [&](const std::string& kw) { return icontains(line, kw); });
}

MetricVerdict evaluate_metric(const DataSource& source, const DetectorConfig& config,
                              std::string_view component, std::string_view metric,
                              QueryWindow window) {
  auto full = source.query_metrics(component, metric, source.full_window());
  const auto& scn = source.scenario();
  MetricVerdict v;
  v.component = std::string(component);
  v.metric = std::string(metric);
  v.direction = "normal";

  std::vector<double> grid;
  for (double t = scn.window.start_s; t < scn.window.end_s - 1e-9; t += scn.step_s) grid.push_back(t);
  auto value_at = [&](double t) -> std::optional<double> {
    for (const auto& s : full.samples) {
      if (s.t == t) return s.value;
    }
    return std::nullopt;
  };

  MetricRule rule;
  if (auto it = config.metric_rules.find(metric); it != config.metric_rules.end()) rule = it->second;
  bool use_threshold = rule.threshold.has_value();
  v.rule = use_threshold ? "threshold" : "k-sigma";

  // Baseline: grid samples before the window; if too few, the first
  // baseline_samples of the series, which are then not evaluated.
  std::vector<double> baseline;
  double eval_from = std::max(window.start_s, scn.window.start_s);
  for (double t : grid) {
    if (t < window.start_s) {
      if (auto x = value_at(t)) baseline.push_back(*x);
    }
  }
  if (!use_threshold && baseline.size() < config.baseline_samples) {
    baseline.clear();
    for (std::size_t i = 0; i < grid.size() && i < config.baseline_samples; ++i) {
      if (auto x = value_at(grid[i])) baseline.push_back(*x);
    }
    if (grid.size() > config.baseline_samples) {
      eval_from = std::max(eval_from, grid[config.baseline_samples]);
    } else {
      eval_from = scn.window.end_s;
    }
  }

  std::vector<double> eval_times;
  for (double t : grid) {
    if (t >= eval_from && window.contains(t)) eval_times.push_back(t);
  }

  double mean = 0.0, sigma = 0.0;
  if (!use_threshold && !baseline.empty()) {
    for (double x : baseline) mean += x;
    mean /= static_cast<double>(baseline.size());
    double ss = 0.0;
    for (double x : baseline) ss += (x - mean) * (x - mean);
    double sd = baseline.size() > 1 ? std::sqrt(ss / static_cast<double>(baseline.size() - 1)) : 0.0;
    sigma = std::max({sd, rule.sigma_floor_abs, rule.sigma_floor_rel * std::abs(mean)});
  }
  v.reference = use_threshold ? *rule.threshold : mean;

  // Missing samples only count as an anomaly when the series reported
  // before (a component that has always been silent is not a new event).
  std::optional<double> first_missing;
  double worst = -1.0;
  for (double t : eval_times) {
    auto x = value_at(t);
    if (!x) {
      bool reported_before = !full.samples.empty() && full.samples.front().t < t;
      if (reported_before && !first_missing) first_missing = t;
      continue;
    }
    ++v.evaluated;
    bool anomalous = false;
    double severity = 0.0;
    if (use_threshold) {
      anomalous = *x > *rule.threshold;
      severity = *x;
    } else if (!baseline.empty()) {
      anomalous = std::abs(*x - mean) > config.k_sigma * sigma;
      severity = std::abs(*x - mean);
    }
    if (severity > worst) {
      worst = severity;
      v.peak = *x;
    }
    if (anomalous) {
      ++v.anomalous_samples;
      if (!v.first_anomaly_t) v.first_anomaly_t = t;
    }
  }

  if (first_missing && (!v.first_anomaly_t || *first_missing <= *v.first_anomaly_t)) {
    v.anomalous = true;
    v.direction = "missing samples";
    v.first_anomaly_t = first_missing;
    return v;
  }
  if (v.anomalous_samples > 0) {
    v.anomalous = true;
    if (use_threshold) v.direction = "above threshold";
    else v.direction = v.peak >= mean ? "above baseline" : "below baseline";
  }
  return v;
}

std::string render_alert(const DataSource& source, const DetectorConfig& config) {
  auto window = source.full_window();
  std::optional<MetricVerdict> earliest;
  for (const auto& component : source.components()) {
    bool is_pod = source.is_pod(component);
    for (const auto& m : metric_catalog()) {
      if ((m.scope == MetricScope::kPod) != is_pod) continue;
      auto v = evaluate_metric(source, config, component, m.name, window);
      if (!v.anomalous) continue;
      if (!earliest || *v.first_anomaly_t < *earliest->first_anomaly_t) earliest = v;
    }
  }
  if (earliest) {
    const auto& v = *earliest;
    auto kind = source.is_pod(v.component) ? "pod" : "node";
    if (v.direction == "missing samples") {
      return fmt::format("ALERT t={:.0f}s: {} on {} {} has missing samples (component stopped reporting)",
                         *v.first_anomaly_t, v.metric, kind, v.component);
    }
    return fmt::format("ALERT t={:.0f}s: {} on {} {} is {} (peak {:.3f}, reference {:.3f})",
                       *v.first_anomaly_t, v.metric, kind, v.component, v.direction, v.peak, v.reference);
  }
  for (const auto& trace : source.query_traces(window)) {
    for (const auto& span : trace.spans) {
      if (span.status == SpanStatus::kError) {
        return fmt::format("ALERT t={:.0f}s: error span in service {} (pod {}): {}", trace.t,
                           span.service, span.pod, span.error_message);
      }
    }
  }
  for (const auto& log : source.telemetry().logs) {
    if (is_abnormal_log(config, log.text)) {
      return fmt::format("ALERT t={:.0f}s: abnormal log on pod {}: {}", log.t, log.pod, log.text);
    }
  }
  return fmt::format("ALERT: no anomaly detected between {:.0f}s and {:.0f}s", window.start_s, window.end_s);
}

}  // namespace sopflow::sandbox
