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

// Scoring and the benchmark runner.
//
// LA = (L_c - sigma * L_i) / L_t with counts summed over the corpus; TA is
// the same over fault types. APL averages path length over completed
// episodes only.

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sopflow/agents.h"
#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "sopflow/sandbox.h"

namespace sopflow::eval {

inline constexpr double kDefaultSigma = 0.1;

// Everything a run needs, loadable from one JSON file. Paths in the file are
// relative to the file.
struct EvalConfig {
  double sigma = kDefaultSigma;
  bool per_episode_mean = false;
  std::size_t workers = 1;
  agents::AgentConfig agent;
  llm::BackendConfig backend;
  sandbox::DetectorConfig detector = sandbox::DetectorConfig::defaults();
  std::filesystem::path kb_dir;
  std::filesystem::path corpus;

  // Throws ConfigError.
  static EvalConfig from_json(std::string_view json, const std::filesystem::path& base_dir = {});
  static EvalConfig load(const std::filesystem::path& path);
  std::string to_json() const;
  void validate() const;
};

struct Counts {
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t total = 0;
  friend bool operator==(const Counts&, const Counts&) = default;
};

// A prediction is correct when it equals an unclaimed ground-truth item,
// directly or through `aliases` (predicted id -> ground-truth id). Each
// ground-truth item is claimed at most once; everything else is incorrect.
Counts score_items(const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
                   const std::map<std::string, std::string>& aliases = {});

struct EpisodeRow {
  std::string scenario_id;
  std::vector<std::string> predicted_locations;
  std::vector<std::string> predicted_types;
  std::vector<std::string> truth_locations;
  std::vector<std::string> truth_types;
  Counts locations;
  Counts types;
  std::size_t path_length = 0;
  agents::Outcome outcome = agents::Outcome::kAborted;
  std::string note;  // abort reason, if any
};

// Builds a row from an episode result; predictions beyond three are dropped.
EpisodeRow make_row(const sandbox::EpisodeScenario& scenario, const agents::EpisodeResult& result);

// Aggregate-count form. Throws UndefinedMetricError when L_t is 0.
double location_accuracy(const std::vector<EpisodeRow>& rows, double sigma = kDefaultSigma);
double type_accuracy(const std::vector<EpisodeRow>& rows, double sigma = kDefaultSigma);
// Mean of the per-episode scores; episodes with L_t = 0 are skipped.
double location_accuracy_mean(const std::vector<EpisodeRow>& rows, double sigma = kDefaultSigma);
double type_accuracy_mean(const std::vector<EpisodeRow>& rows, double sigma = kDefaultSigma);
// nullopt when no episode completed.
std::optional<double> average_path_length(const std::vector<EpisodeRow>& rows);

struct Aggregates {
  std::optional<double> la;
  std::optional<double> ta;
  std::optional<double> average;
  std::optional<double> apl;
  std::size_t completed = 0;
  std::size_t budget_exhausted = 0;
  std::size_t aborted = 0;
  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

Aggregates compute_aggregates(const std::vector<EpisodeRow>& rows, double sigma, bool per_episode_mean);

struct BenchmarkReport {
  std::string config_json;  // EvalConfig::to_json() of the run
  double sigma = kDefaultSigma;
  bool per_episode_mean = false;
  std::vector<EpisodeRow> rows;
  Aggregates aggregates;
  // Not serialized; kept for callers that write transcripts.
  std::vector<agents::Transcript> transcripts;

  std::string to_json() const;
  // Recomputes the aggregates and throws ValidationError if they differ
  // from the stored ones.
  static BenchmarkReport from_json(std::string_view json);
  std::string render_table() const;
};

// Manifest: one scenario per line, optionally followed by a script path;
// '#' starts a comment. Paths are relative to the manifest.
struct CorpusEntry {
  std::filesystem::path scenario;
  std::filesystem::path script;
};
std::vector<CorpusEntry> parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
std::vector<CorpusEntry> load_manifest(const std::filesystem::path& path);

// A fresh backend per episode; scripted backends carry per-episode state.
using BackendFactory = std::function<std::unique_ptr<llm::LlmBackend>(const CorpusEntry& entry)>;
BackendFactory default_backend_factory(const llm::BackendConfig& config);

// Runs every entry once. Aborted episodes become rows, never failures.
BenchmarkReport run_benchmark(const std::vector<CorpusEntry>& corpus, const kb::KnowledgeBase& kb,
                              const EvalConfig& config, const BackendFactory& factory);

}  // namespace sopflow::eval
