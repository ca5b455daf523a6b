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

#include "sopflow/llm.h"

#include <cmath>
#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::llm {

using json = nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
    case Role::kTool: return "tool";
  }
  return "user";
}

void BackendConfig::validate() const {
  if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (kind == BackendKind::kRemote) {
    if (endpoint.empty()) throw ConfigError("remote backend requires an endpoint");
    if (api_key_env.empty()) throw ConfigError("remote backend requires a credential variable");
  }
}

namespace {

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace

bool script_key_matches(std::string_view key, std::string_view prompt) {
  if (key.find_first_of("*?") != std::string_view::npos) return glob_match(key, prompt);
  return prompt.find(key) != std::string_view::npos;
}

EmbeddingVector hash_embedding(std::string_view text, std::size_t dim, std::uint64_t seed) {
  std::vector<double> acc(dim, 0.0);
  auto add_feature = [&](std::string_view feature) {
    std::uint64_t state = fnv1a64(feature) ^ seed;
    std::uint64_t word = splitmix64(state);
    acc[(word >> 1) % dim] += (word & 1) ? 1.0 : -1.0;
  };
  auto tokens = tokenize(text);
  if (tokens.empty()) {
    add_feature(text);
  } else {
    for (const auto& token : tokens) add_feature(token);
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    // Only reachable when token vectors cancel exactly.
    acc[0] = 1.0;
    norm = 1.0;
  }
  for (double& v : acc) v /= norm;
  return EmbeddingVector(std::move(acc));
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries, std::size_t embedding_dim)
    : entries_(std::move(entries)), dim_(embedding_dim) {
  if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(std::string_view text,
                                                            std::size_t embedding_dim) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid script: {}", e.what()));
  }
  std::vector<ScriptEntry> entries;
  for (const auto& e : doc.value("entries", json::array())) {
    ScriptEntry entry;
    entry.match_key = e.value("match", "*");
    entry.response = e.value("response", "");
    entry.consume_once = e.value("once", false);
    entries.push_back(std::move(entry));
  }
  auto backend = std::make_unique<ScriptedBackend>(std::move(entries), embedding_dim);
  if (doc.contains("embeddings")) {
    for (const auto& [text_key, values] : doc["embeddings"].items()) {
      backend->override_embedding(text_key, EmbeddingVector(values.get<std::vector<double>>()));
    }
  }
  return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path,
                                                            std::size_t embedding_dim) {
  return from_json(read_file(path), embedding_dim);
}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw ValidationError("complete() needs at least one message");
  std::lock_guard lock(mu_);
  const std::string& prompt = messages.back().content;
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (!script_key_matches(it->match_key, prompt)) continue;
    std::string response = it->response;
    if (it->consume_once) entries_.erase(it);
    return response;
  }
  auto first_line = prompt.substr(0, prompt.find('\n'));
  throw ScriptExhaustedError(fmt::format("no script entry matches prompt '{}'", first_line));
}

EmbeddingVector ScriptedBackend::embed(std::string_view text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  std::lock_guard lock(mu_);
  if (auto it = overrides_.find(text); it != overrides_.end()) return it->second;
  return hash_embedding(text, dim_, kDefaultEmbeddingSeed);
}

std::string ScriptedBackend::embedder_id() const {
  std::lock_guard lock(mu_);
  std::uint64_t fp = 0;
  for (const auto& [text, vec] : overrides_) {
    fp ^= fnv1a64(text);
    for (double v : vec.values()) fp = fp * 31 + fnv1a64(fmt::format("{:.17g}", v));
  }
  return overrides_.empty() ? fmt::format("scripted-hash-{}", dim_)
                            : fmt::format("scripted-hash-{}-{:016x}", dim_, fp);
}

void ScriptedBackend::override_embedding(std::string text, EmbeddingVector vector) {
  if (vector.dim() != dim_) {
    throw DimensionError(fmt::format("override has dim {}, backend dim {}", vector.dim(), dim_));
  }
  std::lock_guard lock(mu_);
  overrides_.insert_or_assign(std::move(text), std::move(vector));
}

std::size_t ScriptedBackend::remaining_entries() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint parse_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme");
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
  return ep;
}

}  // namespace

RemoteBackend::RemoteBackend(BackendConfig config) : config_(std::move(config)) {
  config_.kind = BackendKind::kRemote;
  config_.validate();
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError(fmt::format("credential variable {} is not set", config_.api_key_env));
  }
  api_key_ = key;
}

std::string RemoteBackend::chat_request_body(const std::vector<ChatMessage>& messages) const {
  json body;
  body["model"] = config_.model;
  body["messages"] = json::array();
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  body["temperature"] = config_.temperature;
  body["max_tokens"] = config_.max_tokens;
  return body.dump();
}

std::string RemoteBackend::post(const std::string& route, const std::string& body) {
  auto ep = parse_endpoint(config_.endpoint);
  httplib::Client client(ep.origin);
  auto timeout = std::chrono::milliseconds(static_cast<long>(config_.timeout_s * 1000));
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout));
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
  log_wire("request", body);
  auto res = client.Post(ep.path + route, headers, body, "application/json");
  if (!res) {
    throw BackendError(fmt::format("transport failure: {}", httplib::to_string(res.error())));
  }
  log_wire("response", res->body);
  if (res->status == 429 || res->status >= 500) {
    double retry_after = 1.0;
    if (res->has_header("Retry-After")) {
      try {
        retry_after = std::stod(res->get_header_value("Retry-After"));
      } catch (const std::exception&) {
      }
    }
    throw BackendError(fmt::format("endpoint returned HTTP {}", res->status), retry_after);
  }
  if (res->status != 200) {
    throw BackendError(fmt::format("endpoint returned HTTP {}: {}", res->status, res->body));
  }
  return res->body;
}

std::string RemoteBackend::complete(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw ValidationError("complete() needs at least one message");
  auto raw = post("/chat/completions", chat_request_body(messages));
  try {
    auto doc = json::parse(raw);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(fmt::format("malformed completion response: {}", e.what()));
  }
}

EmbeddingVector RemoteBackend::embed(std::string_view text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  json body{{"model", config_.embedding_model}, {"input", std::string(text)}};
  auto raw = post("/embeddings", body.dump());
  std::vector<double> values;
  try {
    values = json::parse(raw).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw BackendError(fmt::format("malformed embedding response: {}", e.what()));
  }
  if (values.size() != config_.embedding_dim) {
    throw DimensionError(fmt::format("endpoint returned dim {}, configured {}", values.size(),
                                     config_.embedding_dim));
  }
  return EmbeddingVector(std::move(values));
}

std::string RemoteBackend::embedder_id() const {
  return fmt::format("remote:{}:{}", config_.endpoint, config_.embedding_model);
}

std::unique_ptr<LlmBackend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == BackendKind::kRemote) return std::make_unique<RemoteBackend>(config);
  if (config.script_path.empty()) return std::make_unique<ScriptedBackend>(std::vector<ScriptEntry>{}, config.embedding_dim);
  return ScriptedBackend::from_file(config.script_path, config.embedding_dim);
}

}  // namespace sopflow::llm
