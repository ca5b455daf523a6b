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

#include "sopflow/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iterator>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::eval {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

template <typename T>
void read_opt(const ojson& j, const char* key, T& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("config field '{}' has the wrong type", key));
  }
}

void check_keys(const ojson& j, std::string_view section, std::initializer_list<std::string_view> known) {
  for (auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("unknown config field '{}{}'", section.empty() ? "" : std::string(section) + ".", key));
    }
  }
}

}  // namespace

EvalConfig EvalConfig::from_json(std::string_view json, const std::filesystem::path& base_dir) {
  ojson j;
  try {
    j = ojson::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, "", {"sigma", "per_episode_mean", "workers", "agent", "ablations", "backend", "detector", "kb",
                     "corpus"});
  EvalConfig c;
  read_opt(j, "sigma", c.sigma);
  read_opt(j, "per_episode_mean", c.per_episode_mean);
  read_opt(j, "workers", c.workers);
  if (j.contains("agent")) {
    const auto& a = j["agent"];
    check_keys(a, "agent", {"max_steps", "action_set_size", "judge_after_run_sop", "top_k", "threshold", "log_wire"});
    read_opt(a, "max_steps", c.agent.max_steps);
    read_opt(a, "action_set_size", c.agent.action_set_size);
    read_opt(a, "judge_after_run_sop", c.agent.judge_after_run_sop);
    read_opt(a, "top_k", c.agent.top_k);
    read_opt(a, "threshold", c.agent.threshold);
    read_opt(a, "log_wire", c.agent.log_wire);
  }
  if (j.contains("ablations")) {
    for (auto& [flag, value] : j["ablations"].items()) {
      bool on = true;
      if (value.is_boolean()) {
        on = value.get<bool>();
      } else if (value.is_string() && (value == "on" || value == "off")) {
        on = value == "on";
      } else {
        throw ConfigError(fmt::format("ablation '{}' must be \"on\" or \"off\"", flag));
      }
      if (!on) {
        c.agent.ablations.disable(flag);
      } else {
        c.agent.ablations.enabled(flag);  // rejects unknown names
      }
    }
  }
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    check_keys(b, "backend", {"kind", "endpoint", "model", "embedding_model", "temperature", "max_tokens",
                              "api_key_env", "embedding_dim", "script", "timeout_s"});
    std::string kind = "scripted";
    read_opt(b, "kind", kind);
    if (kind == "scripted") {
      c.backend.kind = llm::BackendKind::kScripted;
    } else if (kind == "remote") {
      c.backend.kind = llm::BackendKind::kRemote;
    } else {
      throw ConfigError(fmt::format("backend.kind must be scripted or remote, got '{}'", kind));
    }
    read_opt(b, "endpoint", c.backend.endpoint);
    read_opt(b, "model", c.backend.model);
    read_opt(b, "embedding_model", c.backend.embedding_model);
    read_opt(b, "temperature", c.backend.temperature);
    read_opt(b, "max_tokens", c.backend.max_tokens);
    read_opt(b, "api_key_env", c.backend.api_key_env);
    read_opt(b, "embedding_dim", c.backend.embedding_dim);
    read_opt(b, "timeout_s", c.backend.timeout_s);
    std::string script;
    read_opt(b, "script", script);
    c.backend.script_path = resolve(base_dir, script);
  }
  if (j.contains("detector")) c.detector = sandbox::DetectorConfig::from_json(j["detector"].dump());
  std::string kb_dir, corpus;
  read_opt(j, "kb", kb_dir);
  read_opt(j, "corpus", corpus);
  c.kb_dir = resolve(base_dir, kb_dir);
  c.corpus = resolve(base_dir, corpus);
  c.validate();
  return c;
}

EvalConfig EvalConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_json(text, path.parent_path());
}

std::string EvalConfig::to_json() const {
  ojson j;
  j["sigma"] = sigma;
  j["per_episode_mean"] = per_episode_mean;
  j["workers"] = workers;
  j["agent"] = {{"max_steps", agent.max_steps},
                {"action_set_size", agent.action_set_size},
                {"judge_after_run_sop", agent.judge_after_run_sop},
                {"top_k", agent.top_k},
                {"threshold", agent.threshold},
                {"log_wire", agent.log_wire}};
  ojson flags;
  for (const auto& name : agents::Ablations::flag_names()) flags[name] = agent.ablations.enabled(name) ? "on" : "off";
  j["ablations"] = flags;
  ojson b;
  b["kind"] = backend.kind == llm::BackendKind::kRemote ? "remote" : "scripted";
  b["endpoint"] = backend.endpoint;
  b["model"] = backend.model;
  b["embedding_model"] = backend.embedding_model;
  b["temperature"] = backend.temperature;
  b["max_tokens"] = backend.max_tokens;
  b["api_key_env"] = backend.api_key_env;
  b["embedding_dim"] = backend.embedding_dim;
  b["script"] = backend.script_path.generic_string();
  b["timeout_s"] = backend.timeout_s;
  j["backend"] = b;
  j["detector"] = ojson::parse(detector.to_json());
  j["kb"] = kb_dir.generic_string();
  j["corpus"] = corpus.generic_string();
  return j.dump(2);
}

void EvalConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be a finite value >= 0");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (agent.max_steps == 0) throw ConfigError("agent.max_steps must be at least 1");
  if (agent.action_set_size < 3) throw ConfigError("agent.action_set_size must be at least 3");
  if (agent.top_k == 0) throw ConfigError("agent.top_k must be at least 1");
  backend.validate();
}

// ---------------------------------------------------------------------------
// Scoring

Counts score_items(const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
                   const std::map<std::string, std::string>& aliases) {
  Counts c;
  c.total = truth.size();
  std::vector<bool> claimed(truth.size(), false);
  for (const auto& p : predicted) {
    bool hit = false;
    auto try_claim = [&](const std::string& id) {
      for (std::size_t i = 0; i < truth.size() && !hit; ++i) {
        if (!claimed[i] && truth[i] == id) {
          claimed[i] = true;
          hit = true;
        }
      }
    };
    try_claim(p);
    if (!hit) {
      if (auto it = aliases.find(p); it != aliases.end()) try_claim(it->second);
    }
    if (hit) {
      ++c.correct;
    } else {
      ++c.incorrect;
    }
  }
  return c;
}

EpisodeRow make_row(const sandbox::EpisodeScenario& scenario, const agents::EpisodeResult& result) {
  EpisodeRow row;
  row.scenario_id = scenario.id;
  row.outcome = result.outcome;
  row.note = result.state.abort_reason;
  row.truth_locations = scenario.ground_truth.locations;
  for (auto t : scenario.ground_truth.types) row.truth_types.emplace_back(sandbox::fault_type_name(t));
  if (result.outcome == agents::Outcome::kCompleted && result.state.diagnosis) {
    const auto& d = *result.state.diagnosis;
    row.path_length = d.path_length;
    for (std::size_t i = 0; i < d.locations.size() && i < tools::kMaxRootCauses; ++i) {
      row.predicted_locations.push_back(d.locations[i]);
    }
    for (std::size_t i = 0; i < d.types.size() && i < tools::kMaxRootCauses; ++i) {
      auto parsed = sandbox::parse_fault_type(d.types[i]);
      row.predicted_types.push_back(parsed ? std::string(sandbox::fault_type_name(*parsed)) : d.types[i]);
    }
  } else {
    row.path_length = result.state.executed_actions;
  }
  row.locations = score_items(row.predicted_locations, row.truth_locations, scenario.aliases);
  row.types = score_items(row.predicted_types, row.truth_types);
  return row;
}

namespace {

double aggregate(const std::vector<EpisodeRow>& rows, double sigma, bool types, std::string_view name) {
  std::size_t correct = 0, incorrect = 0, total = 0;
  for (const auto& r : rows) {
    const auto& c = types ? r.types : r.locations;
    correct += c.correct;
    incorrect += c.incorrect;
    total += c.total;
  }
  if (total == 0) throw UndefinedMetricError(fmt::format("{} is undefined: no ground-truth items", name));
  return (static_cast<double>(correct) - sigma * static_cast<double>(incorrect)) / static_cast<double>(total);
}

double per_episode(const std::vector<EpisodeRow>& rows, double sigma, bool types, std::string_view name) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    const auto& c = types ? r.types : r.locations;
    if (c.total == 0) continue;
    sum += (static_cast<double>(c.correct) - sigma * static_cast<double>(c.incorrect)) / static_cast<double>(c.total);
    ++n;
  }
  if (n == 0) throw UndefinedMetricError(fmt::format("{} is undefined: no ground-truth items", name));
  return sum / static_cast<double>(n);
}

}  // namespace

double location_accuracy(const std::vector<EpisodeRow>& rows, double sigma) {
  return aggregate(rows, sigma, false, "location accuracy");
}

double type_accuracy(const std::vector<EpisodeRow>& rows, double sigma) {
  return aggregate(rows, sigma, true, "type accuracy");
}

double location_accuracy_mean(const std::vector<EpisodeRow>& rows, double sigma) {
  return per_episode(rows, sigma, false, "location accuracy");
}

double type_accuracy_mean(const std::vector<EpisodeRow>& rows, double sigma) {
  return per_episode(rows, sigma, true, "type accuracy");
}

std::optional<double> average_path_length(const std::vector<EpisodeRow>& rows) {
  std::size_t sum = 0, n = 0;
  for (const auto& r : rows) {
    if (r.outcome != agents::Outcome::kCompleted) continue;
    sum += r.path_length;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(sum) / static_cast<double>(n);
}

Aggregates compute_aggregates(const std::vector<EpisodeRow>& rows, double sigma, bool per_episode_mean) {
  Aggregates a;
  try {
    a.la = per_episode_mean ? location_accuracy_mean(rows, sigma) : location_accuracy(rows, sigma);
  } catch (const UndefinedMetricError&) {
  }
  try {
    a.ta = per_episode_mean ? type_accuracy_mean(rows, sigma) : type_accuracy(rows, sigma);
  } catch (const UndefinedMetricError&) {
  }
  if (a.la && a.ta) a.average = (*a.la + *a.ta) / 2.0;
  a.apl = average_path_length(rows);
  for (const auto& r : rows) {
    switch (r.outcome) {
      case agents::Outcome::kCompleted: ++a.completed; break;
      case agents::Outcome::kBudgetExhausted: ++a.budget_exhausted; break;
      case agents::Outcome::kAborted: ++a.aborted; break;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Report

namespace {

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> get_opt(const ojson& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

ojson counts_json(const Counts& c) {
  return {{"correct", c.correct}, {"incorrect", c.incorrect}, {"total", c.total}};
}

Counts counts_from(const ojson& j) {
  return {j.at("correct").get<std::size_t>(), j.at("incorrect").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "undefined"; }

}  // namespace

std::string BenchmarkReport::to_json() const {
  ojson j;
  j["config"] = config_json.empty() ? ojson::object() : ojson::parse(config_json);
  j["sigma"] = sigma;
  j["per_episode_mean"] = per_episode_mean;
  ojson rs = ojson::array();
  for (const auto& r : rows) {
    ojson row;
    row["scenario"] = r.scenario_id;
    row["outcome"] = agents::outcome_name(r.outcome);
    row["path_length"] = r.path_length;
    row["predicted"] = {{"locations", r.predicted_locations}, {"types", r.predicted_types}};
    row["truth"] = {{"locations", r.truth_locations}, {"types", r.truth_types}};
    row["locations"] = counts_json(r.locations);
    row["types"] = counts_json(r.types);
    if (!r.note.empty()) row["note"] = r.note;
    rs.push_back(row);
  }
  j["rows"] = rs;
  j["aggregates"] = {{"la", opt(aggregates.la)},
                     {"ta", opt(aggregates.ta)},
                     {"average", opt(aggregates.average)},
                     {"apl", opt(aggregates.apl)},
                     {"completed", aggregates.completed},
                     {"budget_exhausted", aggregates.budget_exhausted},
                     {"aborted", aggregates.aborted}};
  return j.dump(2) + "\n";
}

BenchmarkReport BenchmarkReport::from_json(std::string_view json) {
  BenchmarkReport rep;
  try {
    auto j = ojson::parse(json);
    rep.config_json = j.at("config").dump(2);
    rep.sigma = j.at("sigma").get<double>();
    rep.per_episode_mean = j.at("per_episode_mean").get<bool>();
    for (const auto& r : j.at("rows")) {
      EpisodeRow row;
      row.scenario_id = r.at("scenario").get<std::string>();
      auto outcome = agents::parse_outcome(r.at("outcome").get<std::string>());
      if (!outcome) throw ValidationError(fmt::format("row {}: unknown outcome", row.scenario_id));
      row.outcome = *outcome;
      row.path_length = r.at("path_length").get<std::size_t>();
      row.predicted_locations = r.at("predicted").at("locations").get<std::vector<std::string>>();
      row.predicted_types = r.at("predicted").at("types").get<std::vector<std::string>>();
      row.truth_locations = r.at("truth").at("locations").get<std::vector<std::string>>();
      row.truth_types = r.at("truth").at("types").get<std::vector<std::string>>();
      row.locations = counts_from(r.at("locations"));
      row.types = counts_from(r.at("types"));
      row.note = r.value("note", "");
      if (row.predicted_locations.size() > tools::kMaxRootCauses ||
          row.predicted_types.size() > tools::kMaxRootCauses) {
        throw ValidationError(fmt::format("row {}: more than {} predictions", row.scenario_id, tools::kMaxRootCauses));
      }
      if (row.locations.correct + row.locations.incorrect != row.predicted_locations.size() ||
          row.types.correct + row.types.incorrect != row.predicted_types.size() ||
          row.locations.total != row.truth_locations.size() || row.types.total != row.truth_types.size()) {
        throw ValidationError(fmt::format("row {}: counts do not match the listed items", row.scenario_id));
      }
      rep.rows.push_back(std::move(row));
    }
    const auto& a = j.at("aggregates");
    rep.aggregates.la = get_opt(a, "la");
    rep.aggregates.ta = get_opt(a, "ta");
    rep.aggregates.average = get_opt(a, "average");
    rep.aggregates.apl = get_opt(a, "apl");
    rep.aggregates.completed = a.at("completed").get<std::size_t>();
    rep.aggregates.budget_exhausted = a.at("budget_exhausted").get<std::size_t>();
    rep.aggregates.aborted = a.at("aborted").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed report: {}", e.what()));
  }
  auto recomputed = compute_aggregates(rep.rows, rep.sigma, rep.per_episode_mean);
  if (!(recomputed == rep.aggregates)) {
    throw ValidationError("report aggregates do not match its rows");
  }
  return rep;
}

std::string BenchmarkReport::render_table() const {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.scenario_id.size());
  std::string out = fmt::format("{:<{}}  {:<16}  {:>4}  {:<28}  {}\n", "scenario", width, "outcome", "path",
                                "predicted", "truth");
  for (const auto& r : rows) {
    auto pred = r.predicted_locations.empty()
                    ? std::string("-")
                    : fmt::format("{} {}", fmt::join(r.predicted_locations, ","), fmt::join(r.predicted_types, ","));
    auto truth = fmt::format("{} {}", fmt::join(r.truth_locations, ","), fmt::join(r.truth_types, ","));
    out += fmt::format("{:<{}}  {:<16}  {:>4}  {:<28}  {}\n", r.scenario_id, width, agents::outcome_name(r.outcome),
                       r.path_length, pred, truth);
  }
  out += fmt::format("LA={} TA={} Avg={} APL={} completed={}/{} budget_exhausted={} aborted={}\n",
                     fmt_opt(aggregates.la), fmt_opt(aggregates.ta), fmt_opt(aggregates.average),
                     fmt_opt(aggregates.apl), aggregates.completed, rows.size(), aggregates.budget_exhausted,
                     aggregates.aborted);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus and runner

std::vector<CorpusEntry> parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  std::vector<CorpusEntry> out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    std::istringstream in(line);
    std::vector<std::string> words{std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
    if (words.empty()) continue;
    if (words.size() > 2) {
      throw ValidationError(fmt::format("manifest line {}: expected '<scenario> [<script>]'", line_no));
    }
    CorpusEntry e;
    e.scenario = resolve(base_dir, words[0]);
    if (words.size() == 2) e.script = resolve(base_dir, words[1]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CorpusEntry> load_manifest(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    auto manifest = path / "manifest.txt";
    if (!std::filesystem::exists(manifest)) {
      throw NotFoundError(fmt::format("no manifest.txt in corpus directory {}", path.string()));
    }
    return parse_manifest(read_file(manifest), path);
  }
  if (!std::filesystem::exists(path)) throw NotFoundError(fmt::format("corpus {} does not exist", path.string()));
  return parse_manifest(read_file(path), path.parent_path());
}

BackendFactory default_backend_factory(const llm::BackendConfig& config) {
  return [config](const CorpusEntry& entry) {
    auto c = config;
    if (!entry.script.empty()) c.script_path = entry.script;
    return llm::make_backend(c);
  };
}

BenchmarkReport run_benchmark(const std::vector<CorpusEntry>& corpus, const kb::KnowledgeBase& kb,
                              const EvalConfig& config, const BackendFactory& factory) {
  config.validate();
  std::vector<sandbox::EpisodeScenario> scenarios;
  scenarios.reserve(corpus.size());
  for (const auto& e : corpus) scenarios.push_back(sandbox::load_scenario(e.scenario));

  BenchmarkReport rep;
  rep.config_json = config.to_json();
  rep.sigma = config.sigma;
  rep.per_episode_mean = config.per_episode_mean;
  rep.rows.resize(corpus.size());
  rep.transcripts.resize(corpus.size());

  auto run_one = [&](std::size_t i) {
    const auto& scenario = scenarios[i];
    agents::EpisodeResult result;
    try {
      auto backend = factory(corpus[i]);
      result = agents::run_episode(scenario, kb, *backend, config.detector, config.agent);
    } catch (const Error& e) {
      // Backend construction failed; the episode never started.
      result.outcome = agents::Outcome::kAborted;
      result.state.abort_reason = e.what();
    }
    rep.rows[i] = make_row(scenario, result);
    rep.transcripts[i] = std::move(result.transcript);
  };

  std::size_t workers = std::min(config.workers, std::max<std::size_t>(corpus.size(), 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < corpus.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  rep.aggregates = compute_aggregates(rep.rows, config.sigma, config.per_episode_mean);
  return rep;
}

}  // namespace sopflow::eval
