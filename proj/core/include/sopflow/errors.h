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

#include <stdexcept>
#include <string>
#include <vector>

namespace sopflow {

// Base of every error raised by the library. Tool failures inside an episode
// are NOT raised; they come back to the agent as observation text.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Transport or endpoint failure. Retryable.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, double retry_after_s = 1.0)
      : Error(what), retry_after_s_(retry_after_s) {}
  double retry_after_s() const { return retry_after_s_; }

 private:
  double retry_after_s_;
};

// The scripted backend had no entry for the prompt. In tests this is the
// signal that the script and the engine disagree.
class ScriptExhaustedError : public Error {
 public:
  using Error::Error;
};

class GenerationParseError : public Error {
 public:
  GenerationParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class ProgramValidationError : public Error {
 public:
  explicit ProgramValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class ProgramRuntimeError : public Error {
 public:
  ProgramRuntimeError(std::size_t statement_index, const std::string& detail);
  std::size_t statement_index() const { return statement_index_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t statement_index_;
  std::string detail_;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class AbortedEpisode : public Error {
 public:
  using Error::Error;
};

}  // namespace sopflow
