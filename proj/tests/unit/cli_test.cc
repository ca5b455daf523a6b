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


#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.h"
#include "sopflow/eval.h"
#include "sopflow/util.h"
#include "support.h"

namespace sopflow::cli {
namespace {

namespace fs = std::filesystem;
namespace st = sopflow::testing;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sopflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kConfig = (st::data_dir() / "sopflow.json").string();
std::string scenario(std::string_view id) { return (st::golden_dir() / "scenarios" / (std::string(id) + ".json")).string(); }
std::string script(std::string_view id) { return (st::golden_dir() / "scripts" / (std::string(id) + ".json")).string(); }

TEST(Cli, KbListEmptyStore) {
  auto dir = st::temp_dir("cli-kb");
  auto r = cli({"kb", "list", "--kb", (dir / "kb").string()});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("0 SOPs, 0 incidents"), std::string::npos) << r.out;
}

TEST(Cli, KbAddValidatesAndStores) {
  auto dir = st::temp_dir("cli-kb");
  std::ofstream(dir / "bad.sop") << "id: x\n";
  EXPECT_EQ(cli({"kb", "add", "--kb", (dir / "kb").string(), "--file", (dir / "bad.sop").string()}).code, kExitFailure);
  auto good = st::data_dir() / "kb" / "sops" / "sop-cpu-stress.sop";
  EXPECT_EQ(cli({"kb", "add", "--kb", (dir / "kb").string(), "--file", good.string()}).code, kExitOk);
  EXPECT_NE(cli({"kb", "list", "--kb", (dir / "kb").string()}).out.find("1 SOPs, 0 incidents"), std::string::npos);
}

TEST(Cli, KbMatchSelfNameScoresOne) {
  auto r = cli({"kb", "match", "--kb", (st::data_dir() / "kb").string(), "--query", "CPU usage above threshold on pod"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out.rfind("1.000000 sop-cpu-stress", 0), 0u) << r.out;
}

TEST(Cli, SimulateOnePerType) {
  auto dir = st::temp_dir("cli-sim");
  ASSERT_EQ(cli({"simulate", "--seed", "3", "--count", "9", "--out", dir.string()}).code, kExitOk);
  std::set<std::string> types;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    ++files;
    auto doc = nlohmann::json::parse(slurp(e.path()));
    types.insert(doc["faults"][0]["type"].get<std::string>());
  }
  EXPECT_EQ(files, 9u);
  EXPECT_EQ(types.size(), 9u);
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
}

TEST(Cli, SimulateIsDeterministic) {
  auto a = st::temp_dir("cli-sim-a"), b = st::temp_dir("cli-sim-b");
  ASSERT_EQ(cli({"simulate", "--seed", "5", "--count", "4", "--out", a.string()}).code, kExitOk);
  ASSERT_EQ(cli({"simulate", "--seed", "5", "--count", "4", "--out", b.string()}).code, kExitOk);
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() == ".json") EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
  }
}

TEST(Cli, SimulateRestrictedTypes) {
  auto dir = st::temp_dir("cli-sim");
  ASSERT_EQ(cli({"simulate", "--types", "CpuStress", "--count", "2", "--out", dir.string()}).code, kExitOk);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    ++n;
    EXPECT_EQ(nlohmann::json::parse(slurp(e.path()))["faults"][0]["type"], "CpuStress");
  }
  EXPECT_EQ(n, 2u);
  EXPECT_EQ(cli({"simulate", "--types", "Meteor", "--out", dir.string()}).code, kExitUsage);
}

TEST(Cli, DiagnoseOutcomes) {
  auto dir = st::temp_dir("cli-diag");
  auto t = (dir / "t.jsonl").string();
  auto ok = cli({"diagnose", "--config", kConfig, "--scenario", scenario("scn-000-CpuStress"), "--script",
                 script("scn-000-CpuStress"), "--transcript", t});
  EXPECT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_NE(ok.out.find("locations: adservice-0"), std::string::npos);
  EXPECT_EQ(slurp(t), slurp(st::golden_dir() / "transcripts" / "scn-000-CpuStress.transcript.jsonl"));

  auto budget = cli({"diagnose", "--config", kConfig, "--scenario", scenario("scn-000-CpuStress"), "--script",
                     script("scn-000-CpuStress"), "--max-steps", "1", "--transcript", t});
  EXPECT_EQ(budget.code, kExitBudget);

  std::ofstream(dir / "empty.json") << R"({"entries": []})";
  auto aborted = cli({"diagnose", "--config", kConfig, "--scenario", scenario("scn-000-CpuStress"), "--script",
                      (dir / "empty.json").string(), "--transcript", t});
  EXPECT_EQ(aborted.code, kExitFailure);
  EXPECT_NE(aborted.out.find("aborted"), std::string::npos);
}

TEST(Cli, BenchmarkGolden) {
  auto dir = st::temp_dir("cli-bench");
  auto r = cli({"benchmark", "--config", kConfig, "--out", (dir / "report.json").string(), "--transcripts",
                (dir / "tr").string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("LA=1.000 TA=1.000"), std::string::npos) << r.out;
  EXPECT_NO_THROW(eval::BenchmarkReport::from_json(slurp(dir / "report.json")));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "tr"), fs::directory_iterator{}), 9);
}

TEST(Cli, BenchmarkAblation) {
  auto r = cli({"benchmark", "--config", kConfig, "--corpus", (st::golden_dir() / "manifest-sop_flow.txt").string(),
                "--ablate", "sop_flow"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("sop_flow=off"), std::string::npos);
  EXPECT_EQ(cli({"benchmark", "--config", kConfig, "--ablate", "memory"}).code, kExitUsage);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({"benchmark", "--corpus", "/no/such/corpus"}).code, kExitUsage);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, TranscriptShow) {
  auto path = (st::golden_dir() / "transcripts" / "scn-000-CpuStress.transcript.jsonl").string();
  auto r = cli({"transcript", "show", path});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("== step 1 =="), std::string::npos);
  auto raw = cli({"transcript", "show", "--json", path});
  EXPECT_EQ(raw.out, slurp(path));
}

}  // namespace
}  // namespace sopflow::cli
