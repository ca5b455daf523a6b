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
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "sopflow/errors.h"
#include "sopflow/sandbox.h"
#include "sopflow/util.h"

namespace sopflow::sandbox {

std::string_view fault_type_name(FaultType type) {
  switch (type) {
    case FaultType::kCpuStress: return "CpuStress";
    case FaultType::kMemoryStress: return "MemoryStress";
    case FaultType::kPodFailure: return "PodFailure";
    case FaultType::kNetworkDelay: return "NetworkDelay";
    case FaultType::kNetworkLoss: return "NetworkLoss";
    case FaultType::kNetworkPartition: return "NetworkPartition";
    case FaultType::kNetworkDuplicate: return "NetworkDuplicate";
    case FaultType::kNetworkCorrupt: return "NetworkCorrupt";
    case FaultType::kNetworkBandwidth: return "NetworkBandwidth";
  }
  return "?";
}

std::optional<FaultType> parse_fault_type(std::string_view text) {
  std::string squashed;
  for (unsigned char c : text) {
    if (std::isalnum(c)) squashed.push_back(static_cast<char>(std::tolower(c)));
  }
  for (auto type : kAllFaultTypes) {
    if (to_lower(fault_type_name(type)) == squashed) return type;
  }
  return std::nullopt;
}

std::string_view pod_phase_name(PodPhase phase) {
  switch (phase) {
    case PodPhase::kRunning: return "Running";
    case PodPhase::kFailed: return "Failed";
    case PodPhase::kPending: return "Pending";
  }
  return "?";
}

const Service* Topology::find_service(std::string_view name) const {
  auto it = std::find_if(services.begin(), services.end(), [&](const Service& s) { return s.name == name; });
  return it == services.end() ? nullptr : &*it;
}

const Pod* Topology::find_pod(std::string_view id) const {
  auto it = std::find_if(pods.begin(), pods.end(), [&](const Pod& p) { return p.id == id; });
  return it == pods.end() ? nullptr : &*it;
}

const Node* Topology::find_node(std::string_view name) const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.name == name; });
  return it == nodes.end() ? nullptr : &*it;
}

const CallEdge* Topology::find_edge(std::string_view caller, std::string_view callee) const {
  auto it = std::find_if(call_edges.begin(), call_edges.end(), [&](const CallEdge& e) {
    return e.caller == caller && e.callee == callee;
  });
  return it == call_edges.end() ? nullptr : &*it;
}

std::vector<const Pod*> Topology::pods_of(std::string_view service) const {
  std::vector<const Pod*> out;
  for (const auto& p : pods) {
    if (p.service == service) out.push_back(&p);
  }
  return out;
}

namespace {

void check_request_tree(const Topology& topo, const CallNode& node) {
  if (!topo.find_service(node.service)) {
    throw ValidationError(fmt::format("request references unknown service '{}'", node.service));
  }
  for (const auto& child : node.children) {
    if (!topo.find_edge(node.service, child.service)) {
      throw ValidationError(
          fmt::format("request uses undeclared edge {}->{}", node.service, child.service));
    }
    check_request_tree(topo, child);
  }
}

}  // namespace

void Topology::validate() const {
  if (!find_service(frontend)) throw ValidationError("frontend service is not declared");
  for (const auto& s : services) {
    if (s.base_latency_ms <= 0.0) throw ValidationError(fmt::format("service {} latency <= 0", s.name));
  }
  for (const auto& p : pods) {
    if (!find_service(p.service)) {
      throw ValidationError(fmt::format("pod {} references unknown service {}", p.id, p.service));
    }
    if (!find_node(p.node)) {
      throw ValidationError(fmt::format("pod {} references unknown node {}", p.id, p.node));
    }
  }
  for (const auto& s : services) {
    if (pods_of(s.name).empty()) throw ValidationError(fmt::format("service {} has no pods", s.name));
  }
  for (const auto& e : call_edges) {
    if (!find_service(e.caller) || !find_service(e.callee)) {
      throw ValidationError(fmt::format("edge {} references unknown service", e.id()));
    }
    if (e.baseline_latency_ms <= 0.0) throw ValidationError(fmt::format("edge {} latency <= 0", e.id()));
  }
  // Every service reachable from the frontend.
  std::set<std::string> reached{frontend};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& e : call_edges) {
      if (reached.count(e.caller) && !reached.count(e.callee)) {
        reached.insert(e.callee);
        grew = true;
      }
    }
  }
  for (const auto& s : services) {
    if (!reached.count(s.name)) {
      throw ValidationError(fmt::format("service {} unreachable from {}", s.name, frontend));
    }
  }
  for (const auto& r : requests) {
    if (r.root.service != frontend) throw ValidationError("requests must start at the frontend");
    check_request_tree(*this, r.root);
  }
}

namespace {

Topology online_boutique() {
  Topology t;
  t.name = "online-boutique";
  t.app_namespace = "online-boutique";
  t.frontend = "frontend";
  t.services = {
      {"frontend", 8.0, 120.0, false},
      {"productcatalogservice", 4.0, 200.0, false},
      {"currencyservice", 2.0, 250.0, false},
      {"cartservice", 5.0, 90.0, false},
      {"redis-cart", 1.0, 90.0, true},
      {"recommendationservice", 6.0, 60.0, false},
      {"adservice", 3.0, 80.0, false},
      {"shippingservice", 4.0, 40.0, false},
      {"checkoutservice", 10.0, 15.0, false},
      {"paymentservice", 6.0, 15.0, false},
      {"emailservice", 5.0, 15.0, false},
  };
  t.nodes = {{"node-1", 8.0, 32.0, 800.0}, {"node-2", 8.0, 32.0, 800.0}, {"node-3", 8.0, 32.0, 800.0}};
  for (std::size_t i = 0; i < t.services.size(); ++i) {
    t.pods.push_back({t.services[i].name + "-0", t.services[i].name, t.nodes[i % t.nodes.size()].name,
                      PodPhase::kRunning});
  }
  t.call_edges = {
      {"frontend", "productcatalogservice", 1.0, 0.0},
      {"frontend", "currencyservice", 0.8, 0.0},
      {"frontend", "cartservice", 1.0, 0.0},
      {"frontend", "recommendationservice", 1.2, 0.0},
      {"frontend", "adservice", 0.9, 0.0},
      {"frontend", "shippingservice", 1.0, 0.0},
      {"frontend", "checkoutservice", 1.5, 0.0},
      {"checkoutservice", "cartservice", 1.0, 0.0},
      {"checkoutservice", "productcatalogservice", 1.0, 0.0},
      {"checkoutservice", "currencyservice", 0.8, 0.0},
      {"checkoutservice", "shippingservice", 1.0, 0.0},
      {"checkoutservice", "paymentservice", 1.2, 0.0},
      {"checkoutservice", "emailservice", 1.1, 0.0},
      {"recommendationservice", "productcatalogservice", 1.0, 0.0},
      {"cartservice", "redis-cart", 0.5, 0.0},
  };
  auto leaf = [](std::string s) { return CallNode{std::move(s), {}}; };
  t.requests = {
      {"home",
       {"frontend",
        {leaf("currencyservice"), leaf("productcatalogservice"),
         {"cartservice", {leaf("redis-cart")}}, leaf("adservice")}}},
      {"product",
       {"frontend",
        {leaf("productcatalogservice"),
         {"recommendationservice", {leaf("productcatalogservice")}}, leaf("currencyservice"),
         leaf("adservice")}}},
      {"cart",
       {"frontend",
        {{"cartservice", {leaf("redis-cart")}},
         {"recommendationservice", {leaf("productcatalogservice")}}, leaf("shippingservice"),
         leaf("currencyservice")}}},
      {"checkout",
       {"frontend",
        {{"checkoutservice",
          {{"cartservice", {leaf("redis-cart")}}, leaf("productcatalogservice"),
           leaf("currencyservice"), leaf("shippingservice"), leaf("paymentservice"),
           leaf("emailservice")}}}}},
  };
  return t;
}

}  // namespace

std::vector<std::string> topology_fixture_names() { return {"online-boutique"}; }

Topology topology_fixture(std::string_view name) {
  if (name == "online-boutique") {
    auto t = online_boutique();
    t.validate();
    return t;
  }
  throw ConfigError(fmt::format("unknown topology fixture '{}'", name));
}

// ---------------------------------------------------------------------------

std::string FaultTarget::id() const {
  switch (kind) {
    case TargetKind::kPod: return a;
    case TargetKind::kEdge: return a + "->" + b;
    case TargetKind::kNodePair: return a + "<->" + b;
  }
  return a;
}

FaultTarget FaultTarget::parse(std::string_view id) {
  if (auto pos = id.find("<->"); pos != std::string_view::npos) {
    return {TargetKind::kNodePair, std::string(id.substr(0, pos)), std::string(id.substr(pos + 3))};
  }
  if (auto pos = id.find("->"); pos != std::string_view::npos) {
    return {TargetKind::kEdge, std::string(id.substr(0, pos)), std::string(id.substr(pos + 2))};
  }
  return {TargetKind::kPod, std::string(id), ""};
}

MagnitudeRange magnitude_range(FaultType type) {
  switch (type) {
    case FaultType::kCpuStress: return {0.85, 1.0};
    case FaultType::kMemoryStress: return {0.90, 1.0};
    case FaultType::kPodFailure: return {1.0, 1.0};
    case FaultType::kNetworkDelay: return {100.0, 1000.0};
    case FaultType::kNetworkLoss: return {0.2, 1.0};
    case FaultType::kNetworkPartition: return {1.0, 1.0};
    case FaultType::kNetworkDuplicate: return {0.2, 1.0};
    case FaultType::kNetworkCorrupt: return {0.2, 1.0};
    case FaultType::kNetworkBandwidth: return {10.0, 100.0};
  }
  return {0.0, 0.0};
}

bool target_kind_allowed(FaultType type, TargetKind kind) {
  switch (type) {
    case FaultType::kCpuStress:
    case FaultType::kMemoryStress:
    case FaultType::kPodFailure:
      return kind == TargetKind::kPod;
    case FaultType::kNetworkBandwidth:
      return kind == TargetKind::kNodePair;
    default:
      return kind == TargetKind::kPod || kind == TargetKind::kEdge;
  }
}

void validate(const FaultSpec& fault, const Topology& topology) {
  auto name = fault_type_name(fault.type);
  if (!(fault.duration_s > 0.0)) throw ValidationError(fmt::format("{}: duration must be > 0", name));
  if (fault.start_s < 0.0) throw ValidationError(fmt::format("{}: start must be >= 0", name));
  auto range = magnitude_range(fault.type);
  if (fault.magnitude < range.lo || fault.magnitude > range.hi) {
    throw ValidationError(fmt::format("{}: magnitude {} outside [{}, {}]", name, fault.magnitude,
                                      range.lo, range.hi));
  }
  if (!target_kind_allowed(fault.type, fault.target.kind)) {
    throw ValidationError(fmt::format("{}: target '{}' has the wrong kind", name, fault.target.id()));
  }
  switch (fault.target.kind) {
    case TargetKind::kPod:
      if (!topology.find_pod(fault.target.a)) {
        throw ValidationError(fmt::format("{}: unknown pod '{}'", name, fault.target.a));
      }
      break;
    case TargetKind::kEdge:
      if (!topology.find_edge(fault.target.a, fault.target.b)) {
        throw ValidationError(fmt::format("{}: unknown edge '{}'", name, fault.target.id()));
      }
      break;
    case TargetKind::kNodePair:
      if (!topology.find_node(fault.target.a) || !topology.find_node(fault.target.b) ||
          fault.target.a == fault.target.b) {
        throw ValidationError(fmt::format("{}: bad node pair '{}'", name, fault.target.id()));
      }
      break;
  }
}

}  // namespace sopflow::sandbox
