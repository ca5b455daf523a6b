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


#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "sopflow/errors.h"
#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "support.h"

namespace sopflow::kb {
namespace {

SopDoc sop(std::string id, std::string name, int level = 0) { return {std::move(id), std::move(name), {"look"}, level, {}}; }

TEST(KnowledgeBase, SelfMatchScoresOne) {
  llm::ScriptedBackend b;
  KnowledgeBase kb(64);
  kb.add_sop(sop("a", "cpu usage above threshold"));
  kb.add_sop(sop("b", "pod stopped reporting"));
  auto hits = kb.match_sop("cpu usage above threshold", b, 1, 0.5);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].sop.id, "a");
  EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
}

TEST(KnowledgeBase, EmptyStoresReturnNothing) {
  llm::ScriptedBackend b;
  KnowledgeBase kb(64);
  EXPECT_TRUE(kb.match_sop("anything", b).empty());
  EXPECT_TRUE(kb.match_observation("anything", b).empty());
}

TEST(KnowledgeBase, ScriptedEmbeddingsHandRanked) {
  // Query (1,0,0). Cosines: a 1, b 0.7071, c 0, d 0.7071, e -1. Threshold
  // 0.2 keeps a, b, d; b and d tie and break by id.
  llm::ScriptedBackend b({}, 3);
  b.override_embedding("q", EmbeddingVector({1, 0, 0}));
  b.override_embedding("na", EmbeddingVector({1, 0, 0}));
  b.override_embedding("nb", EmbeddingVector({1, 1, 0}));
  b.override_embedding("nc", EmbeddingVector({0, 1, 0}));
  b.override_embedding("nd", EmbeddingVector({1, 0, 1}));
  b.override_embedding("ne", EmbeddingVector({-1, 0, 0}));
  KnowledgeBase kb(3);
  for (const char* id : {"e", "d", "c", "b", "a"}) kb.add_sop(sop(id, std::string("n") + id));
  auto hits = kb.match_sop("q", b, 3, 0.2);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].sop.id, "a");
  EXPECT_EQ(hits[1].sop.id, "b");
  EXPECT_EQ(hits[2].sop.id, "d");
  EXPECT_NEAR(hits[1].score, std::sqrt(0.5), 1e-12);
  EXPECT_EQ(kb.match_sop("q", b, 5, -1.0).back().sop.id, "e");
}

TEST(KnowledgeBase, IncidentsMatchLinearScanOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  llm::ScriptedBackend b({}, 4);
  KnowledgeBase kb(4);
  std::vector<std::pair<std::string, EmbeddingVector>> items;
  for (int i = 0; i < 10; ++i) {
    EmbeddingVector e({g(rng), g(rng), g(rng), g(rng)});
    std::string id = "inc-" + std::to_string(i);
    kb.add_incident({id, "m" + std::to_string(i), "CpuStress", e});
    items.emplace_back(id, e);
  }
  EmbeddingVector q({g(rng), g(rng), g(rng), g(rng)});
  b.override_embedding("query", q);
  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& [id, e] : items) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      dot += q.values()[i] * e.values()[i];
      na += q.values()[i] * q.values()[i];
      nb += e.values()[i] * e.values()[i];
    }
    oracle.emplace_back(dot / std::sqrt(na * nb), id);
  }
  std::sort(oracle.begin(), oracle.end(), [](auto& x, auto& y) { return x.first > y.first; });
  auto hits = kb.match_observation("query", b, 4, -1.0);
  ASSERT_EQ(hits.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(hits[i].incident.id, oracle[i].second);
    EXPECT_NEAR(hits[i].score, oracle[i].first, 1e-12);
  }
}

TEST(KnowledgeBase, ObservationSelfMatch) {
  llm::ScriptedBackend b;
  KnowledgeBase kb(64);
  kb.add_incident({"i1", "error spans at redis", "NetworkLoss", {}});
  kb.add_incident({"i2", "memory usage above threshold", "MemoryStress", {}});
  auto hits = kb.match_observation("memory usage above threshold", b);
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].incident.id, "i2");
  EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
}

TEST(KnowledgeBase, AddGetListRoundTrip) {
  KnowledgeBase kb(64);
  SopDoc d{"sop-x", "Name", {"one", "two"}, 1, {}};
  kb.add_sop(d);
  EXPECT_EQ(kb.get_sop("sop-x"), d);
  EXPECT_FALSE(kb.get_sop("nope"));
  kb.add_sop(sop("s2", "two"));
  kb.add_sop(sop("s1", "one"));
  auto all = kb.list_sops();
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[1].id, "s2");
  EXPECT_EQ(all[2].id, "s1");
  EXPECT_THROW(kb.add_sop(sop("s1", "dup")), ValidationError);
}

TEST(KnowledgeBase, Validation) {
  KnowledgeBase kb(64);
  EXPECT_THROW(kb.add_sop({"x", "name", {}, 0, {}}), ValidationError);
  EXPECT_THROW(kb.add_sop({"", "name", {"s"}, 0, {}}), ValidationError);
  EXPECT_THROW(kb.add_sop({"bad id", "name", {"s"}, 0, {}}), ValidationError);
  EXPECT_THROW(kb.add_sop({"x", "two\nlines", {"s"}, 0, {}}), ValidationError);
  EXPECT_THROW(kb.add_sop({"x", "name", {"s"}, -1, {}}), ValidationError);
  EXPECT_THROW(kb.add_sop({"x", "name", {"s"}, 0, EmbeddingVector({1.0})}), ValidationError);
  EXPECT_THROW(kb.add_incident({"i", "  ", "CpuStress", {}}), ValidationError);
  EXPECT_THROW(KnowledgeBase(0), ConfigError);
  llm::ScriptedBackend b;
  EXPECT_THROW(kb.match_sop("q", b, 0), ValidationError);
}

TEST(KnowledgeBase, EmbedderDimensionMismatch) {
  llm::ScriptedBackend b({}, 8);
  KnowledgeBase kb(64);
  kb.add_sop(sop("a", "name"));
  EXPECT_THROW(kb.match_sop("q", b), DimensionError);
}

TEST(KbFiles, SopFormatRoundTrip) {
  SopDoc d{"sop-a", "Some name", {"first step", "second: with colon"}, 2, {}};
  EXPECT_EQ(parse_sop(format_sop(d)), d);
  EXPECT_THROW(parse_sop("name: x\n"), ValidationError);
  EXPECT_THROW(parse_sop("id: a\nname: x\nlevel: two\n"), ValidationError);
  EXPECT_THROW(parse_sop("id: a\nid: b\n"), ValidationError);
  EXPECT_THROW(parse_sop("just words\n"), ValidationError);
}

TEST(KbFiles, IncidentFormatRoundTrip) {
  HistoricalIncident i{"inc-1", "cpu high", "CpuStress", {}};
  EXPECT_EQ(parse_incident(format_incident(i)), i);
  EXPECT_THROW(parse_incident("id: a\nmanifestation: x\nsteps:\n- no\n"), ValidationError);
}

TEST(KbFiles, DirectorySaveLoadWithCache) {
  auto dir = sopflow::testing::temp_dir("kb");
  llm::ScriptedBackend b;
  KnowledgeBase kb(64);
  kb.add_sop(sop("s1", "cpu usage high"));
  kb.add_incident({"i1", "error spans", "NetworkLoss", {}});
  kb.match_sop("cpu", b);
  EXPECT_EQ(kb.cache().size(), 2u);
  kb.save(dir);
  auto back = KnowledgeBase::load(dir, 64);
  EXPECT_EQ(back.list_sops(), kb.list_sops());
  EXPECT_EQ(back.list_incidents(), kb.list_incidents());
  EXPECT_EQ(back.cache().size(), 2u);
  EXPECT_EQ(KnowledgeBase::load(dir / "missing", 64).sop_count(), 0u);
  std::filesystem::remove_all(dir);
}

TEST(KbFiles, DefaultKbLoads) {
  auto kb = KnowledgeBase::load(sopflow::testing::data_dir() / "kb", 64);
  EXPECT_EQ(kb.sop_count(), 10u);
  EXPECT_EQ(kb.incident_count(), 18u);
  kb.clear_sops();
  EXPECT_EQ(kb.sop_count(), 0u);
  EXPECT_EQ(kb.incident_count(), 18u);
}

TEST(RankHits, ThresholdTiesAndCut) {
  auto out = rank_hits({{"b", 0.5}, {"a", 0.5}, {"c", 0.9}, {"d", 0.1}}, 3, 0.2);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].item_id, "c");
  EXPECT_EQ(out[1].item_id, "a");
  EXPECT_EQ(out[2].item_id, "b");
  EXPECT_EQ(rank_hits({{"a", 0.3}}, 3, 0.3).size(), 1u);  // threshold is inclusive
}

TEST(KnowledgeBase, ConcurrentReadersWithWriter) {
  llm::ScriptedBackend b;
  KnowledgeBase kb(64);
  for (int i = 0; i < 20; ++i) kb.add_sop(sop("s" + std::to_string(i), "cpu memory " + std::to_string(i)));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) EXPECT_LE(kb.match_sop("cpu memory", b, 3, 0.0).size(), 3u);
    });
  }
  threads.emplace_back([&] {
    for (int i = 0; i < 20; ++i) kb.add_incident({"i" + std::to_string(i), "manifest", "CpuStress", {}});
  });
  for (auto& th : threads) th.join();
  EXPECT_EQ(kb.incident_count(), 20u);
}

}  // namespace
}  // namespace sopflow::kb
