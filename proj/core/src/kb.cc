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

#include "sopflow/kb.h"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "sopflow/errors.h"
#include "sopflow/util.h"

namespace sopflow::kb {

namespace fs = std::filesystem;

namespace {

bool single_line(std::string_view s) { return s.find('\n') == std::string_view::npos; }

void check_id(std::string_view id) {
  if (id.empty()) throw ValidationError("id must be non-empty");
  for (char c : id) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) throw ValidationError(fmt::format("id '{}' has invalid character '{}'", id, c));
  }
}

// key: value lines; `steps:` switches to bullet collection.
struct FieldReader {
  std::map<std::string, std::string> fields;
  std::vector<std::string> bullets;
};

FieldReader read_fields(std::string_view text) {
  FieldReader out;
  bool in_steps = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    if (in_steps && stripped.rfind("- ", 0) == 0) {
      out.bullets.push_back(trim(stripped.substr(2)));
      continue;
    }
    auto colon = stripped.find(':');
    if (colon == std::string::npos) {
      throw ValidationError(fmt::format("line {}: expected 'key: value'", lineno));
    }
    auto key = trim(stripped.substr(0, colon));
    auto value = trim(stripped.substr(colon + 1));
    if (key == "steps") {
      in_steps = true;
      if (!value.empty()) throw ValidationError("steps must be listed as '- ' bullets");
      continue;
    }
    in_steps = false;
    if (out.fields.count(key)) throw ValidationError(fmt::format("duplicate field '{}'", key));
    out.fields[key] = value;
  }
  return out;
}

std::string require(const FieldReader& r, const std::string& key) {
  auto it = r.fields.find(key);
  if (it == r.fields.end()) throw ValidationError(fmt::format("missing field '{}'", key));
  return it->second;
}

}  // namespace

void validate(const SopDoc& doc, std::size_t dim) {
  check_id(doc.id);
  if (trim(doc.name).empty()) throw ValidationError(fmt::format("SOP {}: name is empty", doc.id));
  if (!single_line(doc.name)) throw ValidationError("SOP name must be a single line");
  if (doc.steps.empty()) throw ValidationError(fmt::format("SOP {}: steps is empty", doc.id));
  for (const auto& step : doc.steps) {
    if (trim(step).empty() || !single_line(step)) {
      throw ValidationError(fmt::format("SOP {}: every step must be one non-empty line", doc.id));
    }
  }
  if (doc.level < 0) throw ValidationError(fmt::format("SOP {}: level must be >= 0", doc.id));
  if (doc.name_embedding && doc.name_embedding->dim() != dim) {
    throw ValidationError(fmt::format("SOP {}: embedding dim {} != {}", doc.id,
                                      doc.name_embedding->dim(), dim));
  }
}

void validate(const HistoricalIncident& inc, std::size_t dim) {
  check_id(inc.id);
  if (trim(inc.manifestation).empty()) {
    throw ValidationError(fmt::format("incident {}: manifestation is empty", inc.id));
  }
  if (!single_line(inc.manifestation) || !single_line(inc.fault_type)) {
    throw ValidationError("incident fields must be single lines");
  }
  if (inc.manifestation_embedding && inc.manifestation_embedding->dim() != dim) {
    throw ValidationError(fmt::format("incident {}: embedding dim {} != {}", inc.id,
                                      inc.manifestation_embedding->dim(), dim));
  }
}

std::string format_sop(const SopDoc& doc) {
  std::string out = fmt::format("id: {}\nname: {}\nlevel: {}\nsteps:\n", doc.id, doc.name, doc.level);
  for (const auto& step : doc.steps) out += fmt::format("- {}\n", step);
  return out;
}

SopDoc parse_sop(std::string_view text) {
  auto r = read_fields(text);
  SopDoc doc;
  doc.id = require(r, "id");
  doc.name = require(r, "name");
  auto level = r.fields.count("level") ? r.fields.at("level") : "0";
  auto [ptr, ec] = std::from_chars(level.data(), level.data() + level.size(), doc.level);
  if (ec != std::errc() || ptr != level.data() + level.size()) {
    throw ValidationError(fmt::format("level '{}' is not an integer", level));
  }
  doc.steps = std::move(r.bullets);
  return doc;
}

std::string format_incident(const HistoricalIncident& inc) {
  return fmt::format("id: {}\nfault_type: {}\nmanifestation: {}\n", inc.id, inc.fault_type,
                     inc.manifestation);
}

HistoricalIncident parse_incident(std::string_view text) {
  auto r = read_fields(text);
  if (!r.bullets.empty()) throw ValidationError("incident files take no step list");
  HistoricalIncident inc;
  inc.id = require(r, "id");
  inc.manifestation = require(r, "manifestation");
  inc.fault_type = r.fields.count("fault_type") ? r.fields.at("fault_type") : "";
  return inc;
}

std::vector<RetrievalHit> rank_hits(std::vector<RetrievalHit> scored, std::size_t k,
                                    double threshold) {
  std::erase_if(scored, [&](const RetrievalHit& h) { return h.score < threshold; });
  std::sort(scored.begin(), scored.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(const EmbeddingCache& other) {
  std::lock_guard lock(other.mu_);
  entries_ = other.entries_;
}

EmbeddingCache& EmbeddingCache::operator=(const EmbeddingCache& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  entries_ = other.entries_;
  return *this;
}

EmbeddingVector EmbeddingCache::get_or_compute(std::string_view text, Embedder& embedder) {
  auto key = std::make_pair(embedder.embedder_id(), fnv1a64(text));
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  auto vec = embedder.embed(text);
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(key, vec);
  return vec;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void EmbeddingCache::load(const fs::path& path) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string line;
  std::lock_guard lock(mu_);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split(line, '\t');
    if (parts.size() != 3) throw ValidationError("malformed embedding cache line");
    std::uint64_t hash = std::stoull(parts[1], nullptr, 16);
    std::vector<double> values;
    std::istringstream vs(parts[2]);
    double v;
    while (vs >> v) values.push_back(v);
    entries_.insert_or_assign(std::make_pair(parts[0], hash), EmbeddingVector(std::move(values)));
  }
}

void EmbeddingCache::save(const fs::path& path) const {
  std::string out;
  std::lock_guard lock(mu_);
  for (const auto& [key, vec] : entries_) {
    out += fmt::format("{}\t{:016x}\t", key.first, key.second);
    auto values = vec.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) out += ' ';
      out += fmt::format("{:.17g}", values[i]);
    }
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------

KnowledgeBase::KnowledgeBase(std::size_t embedding_dim) : dim_(embedding_dim) {
  if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
}

KnowledgeBase::KnowledgeBase(const KnowledgeBase& other) : dim_(other.dim_) {
  std::shared_lock lock(other.mu_);
  sops_ = other.sops_;
  incidents_ = other.incidents_;
  cache_ = other.cache_;
}

KnowledgeBase& KnowledgeBase::operator=(const KnowledgeBase& other) {
  if (this == &other) return *this;
  KnowledgeBase copy(other);
  std::unique_lock lock(mu_);
  dim_ = copy.dim_;
  sops_ = std::move(copy.sops_);
  incidents_ = std::move(copy.incidents_);
  cache_ = copy.cache_;
  return *this;
}

KnowledgeBase KnowledgeBase::load(const fs::path& dir, std::size_t embedding_dim) {
  KnowledgeBase kb(embedding_dim);
  auto sorted_files = [](const fs::path& sub, std::string_view ext) {
    std::vector<fs::path> files;
    if (fs::is_directory(sub)) {
      for (const auto& entry : fs::directory_iterator(sub)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  for (const auto& file : sorted_files(dir / "sops", ".sop")) {
    try {
      kb.add_sop(parse_sop(read_file(file)));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}: {}", file.string(), e.what()));
    }
  }
  for (const auto& file : sorted_files(dir / "incidents", ".inc")) {
    try {
      kb.add_incident(parse_incident(read_file(file)));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}: {}", file.string(), e.what()));
    }
  }
  kb.cache_.load(dir / "embeddings.cache");
  return kb;
}

void KnowledgeBase::save(const fs::path& dir) const {
  std::shared_lock lock(mu_);
  for (const auto& sop : sops_) write_file(dir / "sops" / (sop.id + ".sop"), format_sop(sop));
  for (const auto& inc : incidents_) {
    write_file(dir / "incidents" / (inc.id + ".inc"), format_incident(inc));
  }
  cache_.save(dir / "embeddings.cache");
}

std::string KnowledgeBase::add_sop(SopDoc doc) {
  validate(doc, dim_);
  std::unique_lock lock(mu_);
  auto dup = std::find_if(sops_.begin(), sops_.end(), [&](const SopDoc& s) { return s.id == doc.id; });
  if (dup != sops_.end()) throw ValidationError(fmt::format("duplicate SOP id '{}'", doc.id));
  sops_.push_back(std::move(doc));
  return sops_.back().id;
}

std::string KnowledgeBase::add_incident(HistoricalIncident inc) {
  validate(inc, dim_);
  std::unique_lock lock(mu_);
  auto dup = std::find_if(incidents_.begin(), incidents_.end(),
                          [&](const HistoricalIncident& i) { return i.id == inc.id; });
  if (dup != incidents_.end()) throw ValidationError(fmt::format("duplicate incident id '{}'", inc.id));
  incidents_.push_back(std::move(inc));
  return incidents_.back().id;
}

std::vector<SopDoc> KnowledgeBase::list_sops() const {
  std::shared_lock lock(mu_);
  return sops_;
}

std::vector<HistoricalIncident> KnowledgeBase::list_incidents() const {
  std::shared_lock lock(mu_);
  return incidents_;
}

std::optional<SopDoc> KnowledgeBase::get_sop(std::string_view id) const {
  std::shared_lock lock(mu_);
  for (const auto& s : sops_) {
    if (s.id == id) return s;
  }
  return std::nullopt;
}

std::optional<HistoricalIncident> KnowledgeBase::get_incident(std::string_view id) const {
  std::shared_lock lock(mu_);
  for (const auto& i : incidents_) {
    if (i.id == id) return i;
  }
  return std::nullopt;
}

std::size_t KnowledgeBase::sop_count() const {
  std::shared_lock lock(mu_);
  return sops_.size();
}

std::size_t KnowledgeBase::incident_count() const {
  std::shared_lock lock(mu_);
  return incidents_.size();
}

void KnowledgeBase::clear_sops() {
  std::unique_lock lock(mu_);
  sops_.clear();
}

EmbeddingVector KnowledgeBase::embedding_for(const std::optional<EmbeddingVector>& stored,
                                             std::string_view text, Embedder& embedder) const {
  if (stored) return *stored;
  auto vec = cache_.get_or_compute(text, embedder);
  if (vec.dim() != dim_) {
    throw DimensionError(fmt::format("embedder produced dim {}, knowledge base expects {}",
                                     vec.dim(), dim_));
  }
  return vec;
}

std::vector<ScoredSop> KnowledgeBase::match_sop(std::string_view query, Embedder& embedder,
                                                std::size_t k, double threshold) const {
  if (k == 0) throw ValidationError("k must be positive");
  std::shared_lock lock(mu_);
  if (sops_.empty()) return {};
  auto q = embedding_for(std::nullopt, query, embedder);
  std::vector<RetrievalHit> scored;
  scored.reserve(sops_.size());
  for (const auto& sop : sops_) {
    auto e = embedding_for(sop.name_embedding, sop.name, embedder);
    scored.push_back({sop.id, cosine_similarity(q, e), HitKind::kSop});
  }
  std::vector<ScoredSop> out;
  for (const auto& hit : rank_hits(std::move(scored), k, threshold)) {
    auto it = std::find_if(sops_.begin(), sops_.end(), [&](const SopDoc& s) { return s.id == hit.item_id; });
    out.push_back({*it, hit.score});
  }
  return out;
}

std::vector<ScoredIncident> KnowledgeBase::match_observation(std::string_view observation,
                                                             Embedder& embedder, std::size_t k,
                                                             double threshold) const {
  if (k == 0) throw ValidationError("k must be positive");
  std::shared_lock lock(mu_);
  if (incidents_.empty()) return {};
  auto q = embedding_for(std::nullopt, observation, embedder);
  std::vector<RetrievalHit> scored;
  scored.reserve(incidents_.size());
  for (const auto& inc : incidents_) {
    auto e = embedding_for(inc.manifestation_embedding, inc.manifestation, embedder);
    scored.push_back({inc.id, cosine_similarity(q, e), HitKind::kIncident});
  }
  std::vector<ScoredIncident> out;
  for (const auto& hit : rank_hits(std::move(scored), k, threshold)) {
    auto it = std::find_if(incidents_.begin(), incidents_.end(),
                           [&](const HistoricalIncident& i) { return i.id == hit.item_id; });
    out.push_back({*it, hit.score});
  }
  return out;
}

}  // namespace sopflow::kb
