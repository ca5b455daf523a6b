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
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "sopflow/embedding.h"

namespace sopflow::kb {

inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr double kDefaultThreshold = 0.3;

// A named, ordered diagnostic procedure. level 0 is the most general.
struct SopDoc {
  std::string id;
  std::string name;
  std::vector<std::string> steps;
  int level = 0;
  std::optional<EmbeddingVector> name_embedding;

  friend bool operator==(const SopDoc&, const SopDoc&) = default;
};

struct HistoricalIncident {
  std::string id;
  std::string manifestation;
  std::string fault_type;
  std::optional<EmbeddingVector> manifestation_embedding;

  friend bool operator==(const HistoricalIncident&, const HistoricalIncident&) = default;
};

enum class HitKind { kSop, kIncident };

struct RetrievalHit {
  std::string item_id;
  double score = 0.0;
  HitKind kind = HitKind::kSop;
};

struct ScoredSop {
  SopDoc sop;
  double score = 0.0;
};

struct ScoredIncident {
  HistoricalIncident incident;
  double score = 0.0;
};

// Throw ValidationError naming the first violated invariant.
void validate(const SopDoc& doc, std::size_t dim);
void validate(const HistoricalIncident& inc, std::size_t dim);

// Text file formats. One field per line, `key: value`; SOP steps follow a
// `steps:` line as `- ` bullets, in order.
std::string format_sop(const SopDoc& doc);
SopDoc parse_sop(std::string_view text);
std::string format_incident(const HistoricalIncident& inc);
HistoricalIncident parse_incident(std::string_view text);

// Ranks (id, score) pairs: score >= threshold, score descending, ties by id,
// first k. Shared by both stores.
std::vector<RetrievalHit> rank_hits(std::vector<RetrievalHit> scored, std::size_t k,
                                    double threshold);

// Embeddings keyed by (content hash, embedder id). Text on disk:
// `<embedder id>\t<hash hex>\t<v0> <v1> ...` per line.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  EmbeddingCache(const EmbeddingCache& other);
  EmbeddingCache& operator=(const EmbeddingCache& other);

  EmbeddingVector get_or_compute(std::string_view text, Embedder& embedder);
  std::size_t size() const;
  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::uint64_t>, EmbeddingVector> entries_;
};

// SOP and historical-incident store with linear-scan cosine retrieval.
// Readers may share; add_* takes an exclusive lock.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::size_t embedding_dim = 64);
  KnowledgeBase(const KnowledgeBase& other);
  KnowledgeBase& operator=(const KnowledgeBase& other);

  // Directory layout: sops/*.sop, incidents/*.inc, embeddings.cache.
  // Files load in filename order. A missing directory is an empty KB.
  static KnowledgeBase load(const std::filesystem::path& dir, std::size_t embedding_dim = 64);
  void save(const std::filesystem::path& dir) const;

  std::string add_sop(SopDoc doc);
  std::string add_incident(HistoricalIncident inc);

  std::vector<SopDoc> list_sops() const;
  std::vector<HistoricalIncident> list_incidents() const;
  std::optional<SopDoc> get_sop(std::string_view id) const;
  std::optional<HistoricalIncident> get_incident(std::string_view id) const;
  std::size_t sop_count() const;
  std::size_t incident_count() const;
  std::size_t embedding_dim() const { return dim_; }

  // Drops every SOP; incidents stay.
  void clear_sops();

  std::vector<ScoredSop> match_sop(std::string_view query, Embedder& embedder,
                                   std::size_t k = kDefaultTopK,
                                   double threshold = kDefaultThreshold) const;
  std::vector<ScoredIncident> match_observation(std::string_view observation, Embedder& embedder,
                                                std::size_t k = kDefaultTopK,
                                                double threshold = kDefaultThreshold) const;

  EmbeddingCache& cache() const { return cache_; }

 private:
  EmbeddingVector embedding_for(const std::optional<EmbeddingVector>& stored,
                                std::string_view text, Embedder& embedder) const;

  std::size_t dim_;
  mutable std::shared_mutex mu_;
  std::vector<SopDoc> sops_;
  std::vector<HistoricalIncident> incidents_;
  mutable EmbeddingCache cache_;
};

}  // namespace sopflow::kb
