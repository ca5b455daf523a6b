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

#include "cli.h"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "sopflow/agents.h"
#include "sopflow/errors.h"
#include "sopflow/eval.h"
#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "sopflow/sandbox.h"
#include "sopflow/util.h"

namespace sopflow::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad flag values found after CLI11 parsing.
struct UsageError : Error {
  using Error::Error;
};

struct Options {
  std::string config;
  std::string kb_dir;

  std::string kb_file;
  std::string query;
  std::size_t k = kb::kDefaultTopK;
  double threshold = kb::kDefaultThreshold;
  bool incidents = false;

  std::uint64_t seed = 1;
  std::string types = "all";
  std::size_t count = 9;
  std::string out;
  std::string fixture = "online-boutique";
  std::size_t faults = 1;

  std::string scenario;
  std::string script;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> action_set_size;
  std::vector<std::string> ablate;
  std::string transcript;
  bool verbose = false;

  std::string corpus;
  std::string transcripts_dir;
  std::optional<std::size_t> workers;
  std::optional<double> sigma;
  bool per_episode_mean = false;

  std::string transcript_file;
  bool json = false;
};

eval::EvalConfig load_config(const Options& o) {
  eval::EvalConfig c;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw UsageError(fmt::format("config file '{}' does not exist", o.config));
    c = eval::EvalConfig::load(o.config);
  }
  if (!o.kb_dir.empty()) c.kb_dir = o.kb_dir;
  if (o.max_steps) c.agent.max_steps = *o.max_steps;
  if (o.action_set_size) c.agent.action_set_size = *o.action_set_size;
  if (o.workers) c.workers = *o.workers;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.per_episode_mean) c.per_episode_mean = true;
  if (o.verbose) c.agent.log_wire = true;
  for (const auto& list : o.ablate) {
    for (const auto& flag : split(list, ',')) {
      auto name = trim(flag);
      if (!name.empty()) c.agent.ablations.disable(name);
    }
  }
  if (!o.script.empty()) {
    c.backend.kind = llm::BackendKind::kScripted;
    c.backend.script_path = o.script;
  }
  c.validate();
  return c;
}

kb::KnowledgeBase load_kb(const eval::EvalConfig& c) {
  if (c.kb_dir.empty()) return kb::KnowledgeBase(c.backend.embedding_dim);
  return kb::KnowledgeBase::load(c.kb_dir, c.backend.embedding_dim);
}

std::string fixed(double v, int digits) { return fmt::format("{:.{}f}", v, digits); }

int cmd_kb_list(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  auto store = load_kb(c);
  fmt::print(out, "{} SOPs, {} incidents\n", store.sop_count(), store.incident_count());
  for (const auto& s : store.list_sops()) fmt::print(out, "sop {} level={} {}\n", s.id, s.level, s.name);
  for (const auto& i : store.list_incidents()) fmt::print(out, "incident {} type={} {}\n", i.id, i.fault_type, i.manifestation);
  return kExitOk;
}

int cmd_kb_add(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  if (c.kb_dir.empty()) throw UsageError("kb add needs a knowledge base directory (--kb or config)");
  auto store = load_kb(c);
  auto text = read_file(o.kb_file);
  bool incident = fs::path(o.kb_file).extension() == ".inc" || text.find("manifestation:") != std::string::npos;
  if (incident) {
    auto id = store.add_incident(kb::parse_incident(text));
    fmt::print(out, "added incident {}\n", id);
  } else {
    auto id = store.add_sop(kb::parse_sop(text));
    fmt::print(out, "added SOP {}\n", id);
  }
  store.save(c.kb_dir);
  return kExitOk;
}

int cmd_kb_match(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  auto store = load_kb(c);
  auto embedder = llm::make_backend(c.backend);
  if (o.incidents) {
    auto hits = store.match_observation(o.query, *embedder, o.k, o.threshold);
    for (const auto& h : hits) {
      fmt::print(out, "{} {} type={} {}\n", fixed(h.score, 6), h.incident.id, h.incident.fault_type, h.incident.manifestation);
    }
    if (hits.empty()) fmt::print(out, "no incidents above threshold {}\n", o.threshold);
  } else {
    auto hits = store.match_sop(o.query, *embedder, o.k, o.threshold);
    for (const auto& h : hits) fmt::print(out, "{} {} level={} {}\n", fixed(h.score, 6), h.sop.id, h.sop.level, h.sop.name);
    if (hits.empty()) fmt::print(out, "no SOPs above threshold {}\n", o.threshold);
  }
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  sandbox::ScenarioConfig cfg;
  cfg.fixture = o.fixture;
  cfg.fault_count = o.faults;
  if (!iequals(o.types, "all")) {
    for (const auto& name : split(o.types, ',')) {
      auto t = sandbox::parse_fault_type(trim(name));
      if (!t) throw UsageError(fmt::format("unknown fault type '{}'", trim(name)));
      cfg.allowed_types.push_back(*t);
    }
  }
  if (o.count == 0) throw UsageError("--count must be at least 1");
  auto corpus = sandbox::generate_corpus(o.seed, o.count, cfg);
  fs::create_directories(o.out);
  std::string manifest;
  for (const auto& s : corpus) {
    auto name = s.id + ".json";
    sandbox::save_scenario(s, fs::path(o.out) / name);
    manifest += name + "\n";
    fmt::print(out, "{}\n", (fs::path(o.out) / name).string());
  }
  write_file(fs::path(o.out) / "manifest.txt", manifest);
  return kExitOk;
}

int cmd_diagnose(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = load_config(o);
  auto scenario = sandbox::load_scenario(o.scenario);
  auto store = load_kb(c);
  auto backend = llm::make_backend(c.backend);
  auto result = agents::run_episode(scenario, store, *backend, c.detector, c.agent);
  auto transcript_path = o.transcript.empty() ? fs::path(scenario.id + ".transcript.jsonl") : fs::path(o.transcript);
  result.transcript.save(transcript_path);

  const auto& st = result.state;
  fmt::print(out, "scenario: {}\n", scenario.id);
  fmt::print(out, "alert: {}\n", st.alert);
  fmt::print(out, "outcome: {}\n", agents::outcome_name(result.outcome));
  if (st.diagnosis) {
    fmt::print(out, "locations: {}\n", fmt::join(st.diagnosis->locations, ", "));
    fmt::print(out, "types: {}\n", fmt::join(st.diagnosis->types, ", "));
    fmt::print(out, "explanation: {}\n", st.diagnosis->explanation);
  }
  fmt::print(out, "path: {}\n", st.path.empty() ? std::string("(none)") : fmt::format("{}", fmt::join(st.path, " -> ")));
  fmt::print(out, "path length: {}\n", st.executed_actions);
  fmt::print(out, "transcript: {}\n", transcript_path.string());
  switch (result.outcome) {
    case agents::Outcome::kCompleted: return kExitOk;
    case agents::Outcome::kBudgetExhausted: return kExitBudget;
    case agents::Outcome::kAborted:
      fmt::print(err, "episode aborted: {}\n", st.abort_reason);
      return kExitFailure;
  }
  return kExitFailure;
}

int cmd_benchmark(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = load_config(o);
  if (!o.corpus.empty()) c.corpus = o.corpus;
  if (c.corpus.empty()) throw UsageError("benchmark needs a corpus (--corpus or config)");
  if (!fs::exists(c.corpus)) throw UsageError(fmt::format("corpus '{}' does not exist", c.corpus.string()));
  auto entries = eval::load_manifest(c.corpus);
  auto store = load_kb(c);
  auto report = eval::run_benchmark(entries, store, c, eval::default_backend_factory(c.backend));
  if (!o.out.empty()) write_file(o.out, report.to_json());
  if (!o.transcripts_dir.empty()) {
    fs::create_directories(o.transcripts_dir);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      report.transcripts[i].save(fs::path(o.transcripts_dir) / (report.rows[i].scenario_id + ".transcript.jsonl"));
    }
  }
  const auto& flags = c.agent.ablations;
  std::vector<std::string> off;
  for (const auto& name : agents::Ablations::flag_names()) {
    if (!flags.enabled(name)) off.push_back(name + "=off");
  }
  fmt::print(out, "ablations: {}\n", off.empty() ? std::string("none") : fmt::format("{}", fmt::join(off, " ")));
  out << report.render_table();
  for (const auto& r : report.rows) {
    if (r.outcome == agents::Outcome::kAborted) fmt::print(err, "{} aborted: {}\n", r.scenario_id, r.note);
  }
  return report.aggregates.aborted > 0 ? kExitFailure : kExitOk;
}

int cmd_transcript_show(const Options& o, std::ostream& out) {
  auto t = agents::Transcript::load(o.transcript_file);
  if (o.json) {
    out << t.serialize();
  } else {
    out << t.render_text();
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"sopflow: SOP-guided multi-agent root cause analysis"};
  app.name("sopflow");
  app.require_subcommand(1);
  // Parent options (--config, kb --kb) may also follow the subcommand.
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--config", o.config, "JSON config file");

  auto* kb_cmd = app.add_subcommand("kb", "Inspect or extend the knowledge base");
  kb_cmd->require_subcommand(1);
  kb_cmd->fallthrough();
  kb_cmd->add_option("--kb", o.kb_dir, "Knowledge base directory (overrides config)");
  auto* kb_list = kb_cmd->add_subcommand("list", "List SOPs and incidents");
  auto* kb_add = kb_cmd->add_subcommand("add", "Validate a .sop or .inc file and store it");
  kb_add->add_option("--file", o.kb_file, "SOP or incident file")->required()->check(CLI::ExistingFile);
  auto* kb_match = kb_cmd->add_subcommand("match", "Retrieve SOPs (or incidents) for a query");
  kb_match->add_option("--query", o.query, "Query text")->required();
  kb_match->add_option("--k", o.k, "Number of hits")->check(CLI::PositiveNumber);
  kb_match->add_option("--threshold", o.threshold, "Minimum cosine score");
  kb_match->add_flag("--incidents", o.incidents, "Search historical incidents instead of SOPs");

  auto* sim = app.add_subcommand("simulate", "Generate scenario files");
  sim->add_option("--seed", o.seed, "Corpus seed");
  sim->add_option("--types", o.types, "'all' or a comma-separated list of fault types");
  sim->add_option("--count", o.count, "Number of scenarios");
  sim->add_option("--out", o.out, "Output directory")->required();
  sim->add_option("--fixture", o.fixture, "Topology fixture");
  sim->add_option("--faults", o.faults, "Faults per scenario")->check(CLI::Range(1, 3));

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--kb", o.kb_dir, "Knowledge base directory (overrides config)");
    cmd->add_option("--max-steps", o.max_steps, "Step budget per episode");
    cmd->add_option("--action-set-size", o.action_set_size, "Action set size");
    cmd->add_option("--ablate", o.ablate, "Disable components: " + fmt::format("{}", fmt::join(agents::Ablations::flag_names(), ",")))
        ->delimiter(',');
    cmd->add_flag("--verbose", o.verbose, "Record backend request and response bodies in transcripts");
  };

  auto* diag = app.add_subcommand("diagnose", "Run one diagnosis episode");
  diag->add_option("--scenario", o.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  diag->add_option("--script", o.script, "Scripted backend file")->check(CLI::ExistingFile);
  diag->add_option("--transcript", o.transcript, "Transcript output (default <scenario id>.transcript.jsonl)");
  add_run_flags(diag);

  auto* bench = app.add_subcommand("benchmark", "Run a corpus and report LA, TA and APL");
  bench->add_option("--corpus", o.corpus, "Manifest file or corpus directory");
  bench->add_option("--out", o.out, "Report output (JSON)");
  bench->add_option("--transcripts", o.transcripts_dir, "Directory for per-episode transcripts");
  bench->add_option("--workers", o.workers, "Parallel episodes")->check(CLI::PositiveNumber);
  bench->add_option("--sigma", o.sigma, "Penalty for incorrect predictions")->check(CLI::NonNegativeNumber);
  bench->add_flag("--per-episode-mean", o.per_episode_mean, "Average per-episode scores instead of summing counts");
  add_run_flags(bench);

  auto* tr = app.add_subcommand("transcript", "Inspect transcripts");
  tr->require_subcommand(1);
  auto* tr_show = tr->add_subcommand("show", "Render a transcript");
  tr_show->add_option("file", o.transcript_file, "Transcript file")->required()->check(CLI::ExistingFile);
  tr_show->add_flag("--json", o.json, "Print the raw records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*kb_list) return cmd_kb_list(o, out);
    if (*kb_add) return cmd_kb_add(o, out);
    if (*kb_match) return cmd_kb_match(o, out);
    if (*sim) return cmd_simulate(o, out);
    if (*diag) return cmd_diagnose(o, out, err);
    if (*bench) return cmd_benchmark(o, out, err);
    if (*tr_show) return cmd_transcript_show(o, out);
  } catch (const UsageError& e) {
    fmt::print(err, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sopflow::cli
