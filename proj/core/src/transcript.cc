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

#include "sopflow/transcript.h"

#include <fmt/format.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::agents {

using ojson = nlohmann::ordered_json;

std::string Transcript::serialize() const {
  std::string out;
  for (const auto& line : lines_) {
    out += line;
    out += '\n';
  }
  return out;
}

void Transcript::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Transcript Transcript::parse(std::string_view text) {
  Transcript t;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("transcript line {}: {}", line_no, e.what()));
    }
    if (!j.is_object() || !j.contains("kind") || !j.contains("seq") || !j.contains("step")) {
      throw ValidationError(fmt::format("transcript line {}: record needs seq, step and kind", line_no));
    }
    t.lines_.push_back(j.dump());
  }
  return t;
}

Transcript Transcript::load(const std::filesystem::path& path) { return parse(read_file(path)); }

namespace {

std::string str(const ojson& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "";
  return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
}

std::string indent(std::string_view text, std::string_view pad) {
  std::string out;
  for (const auto& line : split(text, '\n')) out += fmt::format("{}{}\n", pad, line);
  return out;
}

}  // namespace

std::string Transcript::render_text() const {
  std::string out;
  std::size_t shown_step = static_cast<std::size_t>(-1);
  for (const auto& line : lines_) {
    auto j = ojson::parse(line);
    auto kind = j["kind"].get<std::string>();
    auto step = j["step"].get<std::size_t>();
    if (kind != "episode" && kind != "alert" && kind != "outcome" && step != shown_step) {
      out += fmt::format("\n== step {} ==\n", step);
      shown_step = step;
    }
    if (kind == "episode") {
      out += fmt::format("episode {}\n", str(j, "scenario"));
      if (j.contains("ablations")) {
        std::vector<std::string> flags;
        for (auto& [k, v] : j["ablations"].items()) flags.push_back(fmt::format("{}={}", k, v.get<std::string>()));
        out += fmt::format("ablations: {}\n", fmt::join(flags, " "));
      }
    } else if (kind == "alert") {
      out += fmt::format("{}\n", str(j, "text"));
    } else if (kind == "prompt") {
      out += fmt::format("prompt [{}]\n", str(j, "persona"));
    } else if (kind == "reply") {
      out += fmt::format("reply [{}]:\n{}", str(j, "persona"), indent(str(j, "content"), "  "));
    } else if (kind == "note") {
      out += fmt::format("note: {}\n", str(j, "text"));
    } else if (kind == "action_set") {
      out += fmt::format("action set ({}):\n", str(j, "mode"));
      for (const auto& c : j["candidates"]) {
        auto rule = str(c, "rule");
        out += fmt::format("  {}. {} [{}{}]\n", c["index"].get<std::size_t>(), str(c, "call"), str(c, "provenance"),
                           rule.empty() ? "" : " " + rule);
      }
    } else if (kind == "choice") {
      if (j["call"].is_null()) {
        out += "chosen: none\n";
      } else {
        out += fmt::format("chosen: {}. {}{}\n", str(j, "index"), str(j, "call"),
                           j.value("fallback", false) ? " (fallback)" : "");
      }
    } else if (kind == "observation") {
      out += fmt::format("observation [{}{}]:\n{}", str(j, "tool"), j.value("success", false) ? "" : ", failed",
                         indent(str(j, "text"), "  "));
    } else if (kind == "hypotheses") {
      std::vector<std::string> hs;
      for (const auto& h : j["hypotheses"]) hs.push_back(fmt::format("{} ({})", str(h, "type"), str(h, "confidence")));
      out += fmt::format("hypotheses: {}\n", hs.empty() ? "none" : fmt::format("{}", fmt::join(hs, ", ")));
    } else if (kind == "verdict") {
      if (j.value("found", false)) {
        std::vector<std::string> cs;
        for (const auto& c : j["causes"]) cs.push_back(fmt::format("{}:{}", str(c, "location"), str(c, "type")));
        out += fmt::format("verdict: found {} ({})\n", fmt::join(cs, "; "), str(j, "summary"));
      } else {
        out += "verdict: not found\n";
      }
    } else if (kind == "outcome") {
      out += fmt::format("\noutcome: {} after {} actions\n", str(j, "outcome"), str(j, "path_length"));
      if (j.contains("locations")) {
        out += fmt::format("locations: {}\n", fmt::join(j["locations"].get<std::vector<std::string>>(), ", "));
        out += fmt::format("types: {}\n", fmt::join(j["types"].get<std::vector<std::string>>(), ", "));
      }
      if (j.contains("reason")) out += fmt::format("reason: {}\n", str(j, "reason"));
    } else if (kind == "wire") {
      out += fmt::format("wire {}: {} bytes\n", str(j, "direction"), str(j, "body").size());
    } else {
      out += fmt::format("{}: {}\n", kind, line);
    }
  }
  return out;
}

}  // namespace sopflow::agents
