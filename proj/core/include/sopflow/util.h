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

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sopflow {

// 64-bit FNV-1a. Stable across platforms; used for cache keys and seeds.
std::uint64_t fnv1a64(std::string_view text);

// SplitMix64 step; good enough to expand a seed into a stream of words.
std::uint64_t splitmix64(std::uint64_t& state);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
bool iequals(std::string_view a, std::string_view b);
bool icontains(std::string_view haystack, std::string_view needle);
std::vector<std::string> split(std::string_view text, char sep);
// Lowercase alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);
bool starts_with_ci(std::string_view text, std::string_view prefix);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Seeded Gaussian source. std::normal_distribution is implementation
// defined, so telemetry noise draws through Box-Muller on mt19937_64 words.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sopflow
