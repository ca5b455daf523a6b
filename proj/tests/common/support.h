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

// Helpers shared by the unit tests, the acceptance binary and benchmarks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sopflow/agents.h"
#include "sopflow/llm.h"

namespace sopflow::testing {

using ojson = nlohmann::ordered_json;

std::filesystem::path data_dir();
std::filesystem::path golden_dir();

std::vector<ojson> records(const agents::Transcript& transcript);
std::vector<ojson> records_of(const std::vector<ojson>& all, std::string_view kind);

// Replays a transcript against the flow-rule function. Each violation is one
// line: a mandated rule candidate missing from its action set, a recorded
// rule candidate the rules did not mandate, an oversized set, a chosen action
// outside its set, an ungated Speak, or a step count above the cap.
struct ReplayResult {
  std::vector<std::string> violations;
  std::size_t steps = 0;
  std::size_t rule_candidates = 0;
};
ReplayResult replay_transcript(const agents::Transcript& transcript, std::size_t max_set_size);

// A random script for one episode: per persona and step a reply drawn from
// pools of valid, malformed and hostile answers. Some scripts end without a
// catch-all so the episode can run out of replies.
std::vector<llm::ScriptEntry> random_script(std::mt19937_64& rng, std::size_t steps);

// A random SopProgram text over the program-callable tools. Arguments
// sometimes name missing pods or metrics so runs fail at runtime, and a few
// programs use unbound variables or forbidden tools; the flags say which.
struct GenProgram {
  std::string text;
  bool scope_ok = true;  // every variable bound before use
  bool tools_ok = true;  // only known, program-callable tools
};
GenProgram random_program(std::mt19937_64& rng, const std::vector<std::string>& pods);

// A fresh, empty directory below the system temp dir.
std::filesystem::path temp_dir(std::string_view prefix);

}  // namespace sopflow::testing
