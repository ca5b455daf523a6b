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
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/sandbox.h"
#include "sopflow/util.h"

namespace sopflow::sandbox {

using ojson = nlohmann::ordered_json;

GroundTruth derive_ground_truth(const std::vector<FaultSpec>& faults) {
  GroundTruth gt;
  for (const auto& f : faults) {
    auto loc = f.target.id();
    if (std::find(gt.locations.begin(), gt.locations.end(), loc) == gt.locations.end()) {
      gt.locations.push_back(loc);
    }
    if (std::find(gt.types.begin(), gt.types.end(), f.type) == gt.types.end()) {
      gt.types.push_back(f.type);
    }
  }
  return gt;
}

void EpisodeScenario::validate() const {
  topology.validate();
  if (!(window.end_s > window.start_s)) throw ValidationError("scenario window is empty");
  if (!(step_s > 0.0)) throw ValidationError("step must be positive");
  for (const auto& f : faults) sandbox::validate(f, topology);
  if (ground_truth != derive_ground_truth(faults)) {
    throw ValidationError("ground truth does not match the injected faults");
  }
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t state = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  return splitmix64(state);
}

double round_to(double v, double quantum) { return std::round(v / quantum) * quantum; }

// Node pairs with at least one call edge crossing them.
std::vector<std::pair<std::string, std::string>> crossing_node_pairs(const Topology& t) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& e : t.call_edges) {
    for (const auto* from : t.pods_of(e.caller)) {
      for (const auto* to : t.pods_of(e.callee)) {
        if (from->node == to->node) continue;
        pairs.insert(std::minmax(from->node, to->node));
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

FaultSpec make_fault(FaultType type, GaussianSource& rng, const Topology& topo,
                     const ScenarioConfig& config, const std::set<std::string>& taken) {
  FaultSpec f;
  f.type = type;
  if (type == FaultType::kNetworkBandwidth) {
    auto pairs = crossing_node_pairs(topo);
    std::erase_if(pairs, [&](const auto& p) { return taken.count(p.first + "<->" + p.second); });
    if (pairs.empty()) throw ConfigError("no free node pair for a bandwidth fault");
    const auto& p = pairs[rng.next() % pairs.size()];
    f.target = {TargetKind::kNodePair, p.first, p.second};
  } else {
    std::vector<const Pod*> pods;
    for (const auto& p : topo.pods) {
      if (!taken.count(p.id)) pods.push_back(&p);
    }
    if (pods.empty()) throw ConfigError("no free pod to inject into");
    f.target = {TargetKind::kPod, pods[rng.next() % pods.size()]->id, ""};
  }
  // Faults start after a clean baseline of at least ten samples and run to
  // the end of the window.
  double first = config.window.start_s + 10 * config.step_s;
  auto slots = static_cast<std::uint64_t>(9);
  f.start_s = first + static_cast<double>(rng.next() % slots) * config.step_s;
  if (f.start_s >= config.window.end_s) throw ConfigError("window too short for a fault");
  f.duration_s = config.window.end_s - f.start_s;
  auto range = magnitude_range(type);
  double u = rng.uniform();
  double quantum = type == FaultType::kNetworkDelay || type == FaultType::kNetworkBandwidth ? 1.0 : 0.01;
  f.magnitude = std::clamp(round_to(range.lo + u * (range.hi - range.lo), quantum), range.lo, range.hi);
  return f;
}

}  // namespace

EpisodeScenario generate_scenario(std::uint64_t seed, const ScenarioConfig& config) {
  EpisodeScenario s;
  s.topology = topology_fixture(config.fixture);
  s.id = fmt::format("scn-{:016x}", seed);
  s.seed = seed;
  s.window = config.window;
  s.step_s = config.step_s;
  std::vector<FaultType> types = config.allowed_types;
  if (types.empty()) types.assign(kAllFaultTypes.begin(), kAllFaultTypes.end());
  GaussianSource rng(mix(seed, fnv1a64("scenario")));
  std::set<std::string> taken;
  for (std::size_t i = 0; i < config.fault_count; ++i) {
    auto type = types[rng.next() % types.size()];
    auto fault = make_fault(type, rng, s.topology, config, taken);
    taken.insert(fault.target.id());
    s.faults.push_back(std::move(fault));
  }
  s.ground_truth = derive_ground_truth(s.faults);
  s.validate();
  return s;
}

std::vector<EpisodeScenario> generate_corpus(std::uint64_t seed, std::size_t count,
                                             const ScenarioConfig& config) {
  std::vector<FaultType> types = config.allowed_types;
  if (types.empty()) types.assign(kAllFaultTypes.begin(), kAllFaultTypes.end());
  std::vector<EpisodeScenario> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ScenarioConfig one = config;
    auto type = types[i % types.size()];
    one.allowed_types = {type};
    auto scenario = generate_scenario(mix(seed, i + 1), one);
    scenario.id = fmt::format("scn-{:03d}-{}", i, fault_type_name(type));
    out.push_back(std::move(scenario));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string serialize_scenario(const EpisodeScenario& s) {
  ojson doc;
  doc["id"] = s.id;
  doc["topology"] = s.topology.name;
  doc["seed"] = s.seed;
  doc["window"] = {{"start_s", s.window.start_s}, {"end_s", s.window.end_s}};
  doc["step_s"] = s.step_s;
  doc["faults"] = ojson::array();
  for (const auto& f : s.faults) {
    doc["faults"].push_back({{"type", fault_type_name(f.type)},
                             {"target", f.target.id()},
                             {"start_s", f.start_s},
                             {"duration_s", f.duration_s},
                             {"magnitude", f.magnitude}});
  }
  ojson types = ojson::array();
  for (auto t : s.ground_truth.types) types.push_back(fault_type_name(t));
  doc["ground_truth"] = {{"locations", s.ground_truth.locations}, {"types", types}};
  doc["aliases"] = ojson::object();
  for (const auto& [k, v] : s.aliases) doc["aliases"][k] = v;
  return doc.dump(2) + "\n";
}

EpisodeScenario parse_scenario(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::exception& e) {
    throw ValidationError(fmt::format("scenario is not valid JSON: {}", e.what()));
  }
  EpisodeScenario s;
  try {
    s.id = doc.at("id").get<std::string>();
    s.topology = topology_fixture(doc.at("topology").get<std::string>());
    s.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("window")) {
      s.window.start_s = doc["window"].at("start_s").get<double>();
      s.window.end_s = doc["window"].at("end_s").get<double>();
    }
    s.step_s = doc.value("step_s", 15.0);
    for (const auto& f : doc.value("faults", ojson::array())) {
      FaultSpec spec;
      auto type_name = f.at("type").get<std::string>();
      auto type = parse_fault_type(type_name);
      if (!type) throw ValidationError(fmt::format("unknown fault type '{}'", type_name));
      spec.type = *type;
      spec.target = FaultTarget::parse(f.at("target").get<std::string>());
      spec.start_s = f.at("start_s").get<double>();
      spec.duration_s = f.at("duration_s").get<double>();
      spec.magnitude = f.value("magnitude", 1.0);
      s.faults.push_back(std::move(spec));
    }
    if (doc.contains("ground_truth")) {
      s.ground_truth.locations = doc["ground_truth"].at("locations").get<std::vector<std::string>>();
      for (const auto& t : doc["ground_truth"].at("types")) {
        auto type = parse_fault_type(t.get<std::string>());
        if (!type) throw ValidationError("unknown ground-truth type");
        s.ground_truth.types.push_back(*type);
      }
    } else {
      s.ground_truth = derive_ground_truth(s.faults);
    }
    auto aliases = doc.value("aliases", ojson::object());
    for (const auto& [k, v] : aliases.items()) {
      s.aliases[k] = v.get<std::string>();
    }
  } catch (const ojson::exception& e) {
    throw ValidationError(fmt::format("malformed scenario: {}", e.what()));
  }
  s.validate();
  return s;
}

EpisodeScenario load_scenario(const std::filesystem::path& path) {
  try {
    return parse_scenario(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_scenario(const EpisodeScenario& scenario, const std::filesystem::path& path) {
  write_file(path, serialize_scenario(scenario));
}

bool same_content(const EpisodeScenario& a, const EpisodeScenario& b) {
  return serialize_scenario(a) == serialize_scenario(b);
}

}  // namespace sopflow::sandbox
