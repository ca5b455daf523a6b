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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sopflow/embedding.h"

namespace sopflow::llm {

enum class Role { kSystem, kUser, kAssistant, kTool };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

enum class BackendKind { kRemote, kScripted };

struct BackendConfig {
  BackendKind kind = BackendKind::kScripted;
  // Base URL of a chat-completions style API, e.g. "http://127.0.0.1:8080/v1".
  std::string endpoint;
  std::string model = "gpt-4-turbo";
  std::string embedding_model = "text-embedding-3-small";
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string api_key_env = "SOPFLOW_API_KEY";
  std::size_t embedding_dim = 64;
  // Scripted backend only.
  std::filesystem::path script_path;
  double timeout_s = 60.0;

  // Throws ConfigError when the combination is unusable.
  void validate() const;
};

struct ScriptEntry {
  // "*" matches anything. A key with '*' or '?' is a glob over the whole
  // prompt; any other key matches as a substring.
  std::string match_key;
  std::string response;
  bool consume_once = false;
};

bool script_key_matches(std::string_view key, std::string_view prompt);

// Receives verbatim request and response bodies when verbose logging is on.
using WireLogger = std::function<void(std::string_view direction, std::string_view body)>;

class LlmBackend : public Embedder {
 public:
  // Throws BackendError (retryable) or ScriptExhaustedError.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
  void set_wire_logger(WireLogger logger) { wire_logger_ = std::move(logger); }

 protected:
  void log_wire(std::string_view direction, std::string_view body) const {
    if (wire_logger_) wire_logger_(direction, body);
  }

 private:
  WireLogger wire_logger_;
};

// Feature-hashed bag-of-words embedding: every lowercase alphanumeric token
// adds +1 or -1 to one bucket picked by a seeded 64-bit hash, and the sum is
// unit-normalized. Cosine similarity then tracks shared tokens, up to bucket
// collisions. Texts without tokens hash as a whole.
EmbeddingVector hash_embedding(std::string_view text, std::size_t dim, std::uint64_t seed);

inline constexpr std::uint64_t kDefaultEmbeddingSeed = 0x5eed5eedULL;

class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries = {},
                           std::size_t embedding_dim = 64);

  // JSON: {"entries": [{"match", "response", "once"}], "embeddings": {text: [..]}}
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path,
                                                    std::size_t embedding_dim = 64);
  static std::unique_ptr<ScriptedBackend> from_json(std::string_view json,
                                                    std::size_t embedding_dim = 64);

  std::string complete(const std::vector<ChatMessage>& messages) override;
  EmbeddingVector embed(std::string_view text) override;
  std::string embedder_id() const override;
  std::size_t dimension() const override { return dim_; }

  // Pins the embedding of one exact text. Dimension must match.
  void override_embedding(std::string text, EmbeddingVector vector);
  std::size_t remaining_entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> entries_;
  std::map<std::string, EmbeddingVector, std::less<>> overrides_;
  std::size_t dim_;
};

// Chat-completions style HTTP backend. Embeddings go to `<endpoint>/embeddings`
// and completions to `<endpoint>/chat/completions`.
class RemoteBackend : public LlmBackend {
 public:
  // Reads the credential from the configured environment variable.
  explicit RemoteBackend(BackendConfig config);

  std::string complete(const std::vector<ChatMessage>& messages) override;
  EmbeddingVector embed(std::string_view text) override;
  std::string embedder_id() const override;
  std::size_t dimension() const override { return config_.embedding_dim; }

  // Request body as sent on the wire; exposed for tests.
  std::string chat_request_body(const std::vector<ChatMessage>& messages) const;

 private:
  std::string post(const std::string& route, const std::string& body);

  BackendConfig config_;
  std::string api_key_;
};

std::unique_ptr<LlmBackend> make_backend(const BackendConfig& config);

}  // namespace sopflow::llm
