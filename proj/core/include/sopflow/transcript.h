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

// Episode transcript: one JSON object per line, in the order things happened.
// Every record has "seq", "step" and "kind"; see docs/file-formats.md for the
// per-kind fields.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sopflow::agents {

class Transcript {
 public:
  // `json` is a serialized object; the writer owns seq numbering.
  void append(std::string json) { lines_.push_back(std::move(json)); }
  const std::vector<std::string>& lines() const { return lines_; }
  std::size_t size() const { return lines_.size(); }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static Transcript parse(std::string_view text);
  static Transcript load(const std::filesystem::path& path);

  // Human-readable rendering for `sopflow transcript show`.
  std::string render_text() const;

 private:
  std::vector<std::string> lines_;
};

}  // namespace sopflow::agents
