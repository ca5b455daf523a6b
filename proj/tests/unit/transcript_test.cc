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


#include <gtest/gtest.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/transcript.h"
#include "support.h"

namespace sopflow::agents {
namespace {

namespace st = sopflow::testing;

TEST(Transcript, GoldenRoundTripIsByteIdentical) {
  auto path = st::golden_dir() / "transcripts" / "scn-000-CpuStress.transcript.jsonl";
  auto t = Transcript::load(path);
  ASSERT_GT(t.size(), 5u);
  EXPECT_EQ(Transcript::parse(t.serialize()).serialize(), t.serialize());
  auto recs = st::records(t);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].at("seq"), i);
    if (i > 0) EXPECT_GE(recs[i].at("step"), recs[i - 1].at("step"));
  }
  EXPECT_EQ(recs.front().at("kind"), "episode");
  EXPECT_EQ(recs.back().at("kind"), "outcome");
}

TEST(Transcript, BlankLinesSkippedBadLinesRejected) {
  auto t = Transcript::parse("\n{\"seq\":0,\"step\":0,\"kind\":\"note\",\"text\":\"hi\"}\n\n");
  EXPECT_EQ(t.size(), 1u);
  EXPECT_THROW(Transcript::parse("{not json"), ValidationError);
  EXPECT_THROW(Transcript::parse("{\"seq\":0,\"kind\":\"note\"}"), ValidationError);
  EXPECT_THROW(Transcript::parse("[1,2]"), ValidationError);
}

TEST(Transcript, RenderText) {
  auto t = Transcript::load(st::golden_dir() / "transcripts" / "scn-000-CpuStress.transcript.jsonl");
  auto text = t.render_text();
  for (const char* s : {"episode scn-000-CpuStress", "== step 1 ==", "[main_thought]", "outcome: completed"}) {
    EXPECT_NE(text.find(s), std::string::npos) << s;
  }
}

TEST(Transcript, ReplayCatchesMiscountedSteps) {
  auto t = Transcript::load(st::golden_dir() / "transcripts" / "scn-000-CpuStress.transcript.jsonl");
  EXPECT_TRUE(st::replay_transcript(t, 5).violations.empty());
  auto lines = t.lines();
  auto last = nlohmann::ordered_json::parse(lines.back());
  last["step"] = last["step"].get<int>() - 1;
  last["steps"] = last["steps"].get<int>() - 1;
  lines.back() = last.dump();
  Transcript bad;
  for (auto& l : lines) bad.append(l);
  EXPECT_EQ(st::replay_transcript(bad, 5).violations.size(), 2u);
}

TEST(Transcript, SaveAndLoad) {
  Transcript t;
  t.append(R"({"seq":0,"step":0,"kind":"note","text":"a\nb"})");
  auto path = st::temp_dir("transcript") / "t.jsonl";
  t.save(path);
  EXPECT_EQ(Transcript::load(path).lines(), t.lines());
}

}  // namespace
}  // namespace sopflow::agents
