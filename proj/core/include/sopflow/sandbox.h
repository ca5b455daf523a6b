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

// Deterministic simulated microservice deployment. A scenario is a topology
// plus injected faults; render_telemetry turns it into metrics, logs and
// traces, and DataSource answers the read queries the diagnosis tools make.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sopflow::sandbox {

enum class FaultType {
  kCpuStress,
  kMemoryStress,
  kPodFailure,
  kNetworkDelay,
  kNetworkLoss,
  kNetworkPartition,
  kNetworkDuplicate,
  kNetworkCorrupt,
  kNetworkBandwidth,
};

inline constexpr std::array<FaultType, 9> kAllFaultTypes = {
    FaultType::kCpuStress,        FaultType::kMemoryStress,     FaultType::kPodFailure,
    FaultType::kNetworkDelay,     FaultType::kNetworkLoss,      FaultType::kNetworkPartition,
    FaultType::kNetworkDuplicate, FaultType::kNetworkCorrupt,   FaultType::kNetworkBandwidth,
};

std::string_view fault_type_name(FaultType type);
// Case-, space- and underscore-insensitive: "cpu stress" == "CpuStress".
std::optional<FaultType> parse_fault_type(std::string_view text);

enum class PodPhase { kRunning, kFailed, kPending };
std::string_view pod_phase_name(PodPhase phase);

struct Service {
  std::string name;
  double base_latency_ms = 10.0;    // own processing time per request
  double base_request_rate = 50.0;  // requests per second
  bool stateful = false;
};

struct Pod {
  std::string id;
  std::string service;
  std::string node;
  PodPhase phase = PodPhase::kRunning;
};

struct Node {
  std::string name;
  double cpu_cores = 8.0;
  double memory_gib = 32.0;
  double bandwidth_mbps = 800.0;
};

struct CallEdge {
  std::string caller;
  std::string callee;
  double baseline_latency_ms = 1.0;  // network hop
  double baseline_error_rate = 0.0;
  std::string id() const { return caller + "->" + callee; }
};

// A request shape: a call tree rooted at the frontend.
struct CallNode {
  std::string service;
  std::vector<CallNode> children;
};

struct RequestTemplate {
  std::string name;
  CallNode root;
};

struct Topology {
  std::string name;
  std::string app_namespace;
  std::string frontend;
  std::vector<Service> services;
  std::vector<Pod> pods;
  std::vector<Node> nodes;
  std::vector<CallEdge> call_edges;
  std::vector<RequestTemplate> requests;

  const Service* find_service(std::string_view name) const;
  const Pod* find_pod(std::string_view id) const;
  const Node* find_node(std::string_view name) const;
  const CallEdge* find_edge(std::string_view caller, std::string_view callee) const;
  std::vector<const Pod*> pods_of(std::string_view service) const;

  // Throws ValidationError: dangling pod references, non-positive
  // latencies, call edges unreachable from the frontend, request trees using
  // undeclared edges.
  void validate() const;
};

// Throws ConfigError for an unknown fixture name.
Topology topology_fixture(std::string_view name);
std::vector<std::string> topology_fixture_names();

enum class TargetKind { kPod, kEdge, kNodePair };

struct FaultTarget {
  TargetKind kind = TargetKind::kPod;
  std::string a;  // pod id, edge caller service, or first node
  std::string b;  // edge callee service or second node
  // "pod", "caller->callee", "nodeA<->nodeB"
  std::string id() const;
  static FaultTarget parse(std::string_view id);
  friend bool operator==(const FaultTarget&, const FaultTarget&) = default;
};

struct FaultSpec {
  FaultType type = FaultType::kCpuStress;
  FaultTarget target;
  double start_s = 0.0;
  double duration_s = 0.0;
  // CpuStress/MemoryStress: load fraction; NetworkDelay: added ms;
  // Loss/Duplicate/Corrupt: affected fraction; NetworkBandwidth: Mbps cap;
  // PodFailure/NetworkPartition: unused (1.0).
  double magnitude = 1.0;

  bool active_at(double t) const { return t >= start_s && t < start_s + duration_s; }
  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

struct MagnitudeRange {
  double lo;
  double hi;
};
MagnitudeRange magnitude_range(FaultType type);
bool target_kind_allowed(FaultType type, TargetKind kind);
void validate(const FaultSpec& fault, const Topology& topology);

struct Window {
  double start_s = 0.0;
  double end_s = 600.0;
  friend bool operator==(const Window&, const Window&) = default;
};

struct GroundTruth {
  std::vector<std::string> locations;
  std::vector<FaultType> types;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

GroundTruth derive_ground_truth(const std::vector<FaultSpec>& faults);

struct EpisodeScenario {
  std::string id;
  Topology topology;
  std::vector<FaultSpec> faults;
  Window window;
  double step_s = 15.0;
  GroundTruth ground_truth;
  std::uint64_t seed = 0;
  // Optional location equivalences for scoring, e.g. service -> pod.
  std::map<std::string, std::string> aliases;

  void validate() const;
};

bool same_content(const EpisodeScenario& a, const EpisodeScenario& b);

struct ScenarioConfig {
  std::string fixture = "online-boutique";
  std::vector<FaultType> allowed_types;  // empty = all nine
  std::size_t fault_count = 1;
  Window window;
  double step_s = 15.0;
};

// Deterministic in (seed, config). Throws ConfigError.
EpisodeScenario generate_scenario(std::uint64_t seed, const ScenarioConfig& config);
// Scenario i gets type types[i % |types|] and seed derived from (seed, i).
std::vector<EpisodeScenario> generate_corpus(std::uint64_t seed, std::size_t count,
                                             const ScenarioConfig& config);

// JSON scenario files reference the topology by fixture name.
std::string serialize_scenario(const EpisodeScenario& scenario);
EpisodeScenario parse_scenario(std::string_view text);
EpisodeScenario load_scenario(const std::filesystem::path& path);
void save_scenario(const EpisodeScenario& scenario, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Telemetry

enum class MetricScope { kPod, kNode };

struct MetricInfo {
  std::string name;
  MetricScope scope;
  std::string unit;
  std::string description;
};

const std::vector<MetricInfo>& metric_catalog();
const MetricInfo* find_metric(std::string_view name);

struct Sample {
  double t = 0.0;
  double value = 0.0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct MetricSeries {
  std::string component;
  std::string metric;
  std::vector<Sample> samples;
};

struct LogLine {
  std::string pod;
  double t = 0.0;
  std::string text;
};

enum class SpanStatus { kOk, kError };

struct Span {
  std::string trace_id;
  std::string span_id;
  std::string parent_span_id;  // empty for the root
  std::string service;
  std::string pod;
  std::string caller;          // calling service, empty for the root
  double start_s = 0.0;
  double duration_ms = 0.0;
  SpanStatus status = SpanStatus::kOk;
  std::string error_message;
};

struct Trace {
  std::string trace_id;
  std::string request;
  double t = 0.0;
  std::vector<Span> spans;  // pre-order, root first
};

struct Telemetry {
  std::vector<MetricSeries> metrics;
  std::vector<LogLine> logs;
  std::vector<Trace> traces;

  // Line-delimited JSON, one record per line, metrics then logs then spans.
  std::string serialize() const;
  std::uint64_t fingerprint() const;
};

// Pure function of the scenario (including its seed).
Telemetry render_telemetry(const EpisodeScenario& scenario);
void export_telemetry(const Telemetry& telemetry, const std::filesystem::path& dir);

// Nominal band of a metric on a component: baseline +/- 1.5 noise sigma.
struct NominalBand {
  double baseline;
  double noise_sigma;
  double lo() const { return baseline - 1.5 * noise_sigma; }
  double hi() const { return baseline + 1.5 * noise_sigma; }
};
NominalBand nominal_band(const Topology& topology, std::string_view component,
                         std::string_view metric);

// ---------------------------------------------------------------------------
// Query API

struct QueryWindow {
  double start_s = 0.0;
  double end_s = 0.0;
  bool contains(double t) const { return t >= start_s && t < end_s; }
};

enum class ResourceKind { kPods, kNodes, kServices, kDeployments, kStatefulSets };
std::string_view resource_kind_name(ResourceKind kind);
std::optional<ResourceKind> parse_resource_kind(std::string_view text);

struct ResourceRow {
  std::string name;
  std::string status;
  bool healthy = true;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string note;
};

struct ResourceTable {
  ResourceKind kind;
  double at_s = 0.0;
  std::vector<ResourceRow> rows;
};

// Read-only view over one rendered scenario. Safe for concurrent readers.
class DataSource {
 public:
  explicit DataSource(EpisodeScenario scenario);

  const EpisodeScenario& scenario() const { return scenario_; }
  const Topology& topology() const { return scenario_.topology; }
  const Telemetry& telemetry() const { return telemetry_; }
  QueryWindow full_window() const { return {scenario_.window.start_s, scenario_.window.end_s}; }
  // Instant used for resource state; the last sample of the window.
  double now() const;

  // NotFoundError for unknown components or metrics. Outside the window the
  // series is empty.
  MetricSeries query_metrics(std::string_view component, std::string_view metric,
                             QueryWindow window) const;
  std::vector<LogLine> query_logs(std::string_view pod, QueryWindow window) const;
  std::vector<Trace> query_traces(QueryWindow window) const;
  ResourceTable query_resource_state(ResourceKind kind) const;
  ResourceTable query_resource_state(ResourceKind kind, double at_s) const;
  std::vector<std::string> namespaces() const;
  // Components with metrics: nodes first, then pods, topology order.
  std::vector<std::string> components() const;
  bool is_pod(std::string_view id) const;
  bool is_node(std::string_view id) const;

 private:
  EpisodeScenario scenario_;
  Telemetry telemetry_;
  std::map<std::pair<std::string, std::string>, std::size_t, std::less<>> series_index_;
};

// ---------------------------------------------------------------------------
// Rule-based detection: static thresholds where configured, k-sigma against a
// pre-window baseline otherwise, and keyword matching for logs.

struct MetricRule {
  std::optional<double> threshold;  // static upper threshold
  double sigma_floor_abs = 0.0;
  double sigma_floor_rel = 0.0;     // fraction of the baseline mean
};

struct DetectorConfig {
  double k_sigma = 3.0;
  std::size_t baseline_samples = 8;
  std::vector<std::string> log_keywords;
  std::map<std::string, MetricRule, std::less<>> metric_rules;

  static DetectorConfig defaults();
  // JSON with the same field names; missing fields keep defaults.
  static DetectorConfig from_json(std::string_view json);
  std::string to_json() const;
};

struct MetricVerdict {
  std::string component;
  std::string metric;
  bool anomalous = false;
  std::string rule;       // "threshold" or "k-sigma"
  std::string direction;  // "normal", "above threshold", "above baseline",
                          // "below baseline", "missing samples"
  double peak = 0.0;      // most extreme evaluated value
  double reference = 0.0; // threshold, or baseline mean
  std::size_t evaluated = 0;
  std::size_t anomalous_samples = 0;
  std::optional<double> first_anomaly_t;
};

MetricVerdict evaluate_metric(const DataSource& source, const DetectorConfig& config,
                              std::string_view component, std::string_view metric,
                              QueryWindow window);

bool is_abnormal_log(const DetectorConfig& config, std::string_view line);

// Incident-ticket style summary of the earliest detected anomaly.
std::string render_alert(const DataSource& source, const DetectorConfig& config);

}  // namespace sopflow::sandbox
