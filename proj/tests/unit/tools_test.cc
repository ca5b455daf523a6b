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


#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sopflow/errors.h"
#include "sopflow/kb.h"
#include "sopflow/llm.h"
#include "sopflow/sandbox.h"
#include "sopflow/tools.h"

namespace sopflow::tools {
namespace {

using sandbox::FaultSpec;
using sandbox::FaultType;
using sandbox::TargetKind;

class ToolsTest : public ::testing::Test {
 protected:
  sandbox::EpisodeScenario scenario(std::vector<FaultSpec> faults) {
    auto s = sandbox::generate_scenario(11, {});
    s.faults = std::move(faults);
    s.ground_truth = sandbox::derive_ground_truth(s.faults);
    return s;
  }
  void use(const sandbox::EpisodeScenario& s) {
    source = std::make_unique<sandbox::DataSource>(s);
    ctx.source = source.get();
    ctx.detector = &detector;
    ctx.session = &session;
    ctx.kb = &kb;
    ctx.embedder = &backend;
  }
  ToolResult call(const std::string& text) {
    auto c = parse_tool_call(text);
    EXPECT_TRUE(c) << text;
    return registry.invoke(*c, ctx);
  }
  std::string pod(std::size_t i) const { return source->topology().pods[i].id; }

  ToolRegistry registry = ToolRegistry::standard();
  sandbox::DetectorConfig detector = sandbox::DetectorConfig::defaults();
  std::unique_ptr<sandbox::DataSource> source;
  SopSession session;
  kb::KnowledgeBase kb{64};
  llm::ScriptedBackend backend;
  ToolContext ctx;
};

TEST(ToolCallSyntax, ParseAndRender) {
  auto c = parse_tool_call(R"(kubectl_logs(pod="adservice-0", start=100))");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->tool, "kubectl_logs");
  EXPECT_EQ(c->args.at("start"), "100");
  EXPECT_EQ(c->render(), R"(kubectl_logs(pod="adservice-0", start="100"))");
  EXPECT_EQ(parse_tool_call(c->render()), c);
  EXPECT_TRUE(parse_tool_call("collect_trace()"));
  EXPECT_FALSE(parse_tool_call("not a call"));
  EXPECT_FALSE(parse_tool_call("x(a=\"unterminated)"));
  auto q = parse_tool_call(R"(match_sop(query="a \"quoted\" word, with comma"))");
  ASSERT_TRUE(q);
  EXPECT_EQ(q->args.at("query"), "a \"quoted\" word, with comma");
  EXPECT_EQ(parse_tool_call(q->render()), q);
}

TEST(Registry, SeventeenToolsAndSchemaChecks) {
  auto reg = ToolRegistry::standard();
  EXPECT_EQ(reg.specs().size(), 17u);
  auto listed = reg.names();
  std::set<std::string> names(listed.begin(), listed.end());
  for (const char* t : {"whether_is_abnormal_metric", "collect_trace", "kubectl_logs", "match_sop", "generate_sop",
                        "generate_sop_code", "run_sop", "match_observation", "pod_analyze", "node_analyze",
                        "service_analyze", "deployment_analyze", "statefulset_analyze", "run_kubectl_command",
                        "get_all_namespace", "get_relevant_metric", "Speak"}) {
    EXPECT_TRUE(names.count(t)) << t;
  }
  EXPECT_FALSE(reg.check({"collect_trace", {}}));
  EXPECT_TRUE(reg.check({"frobnicate", {}}));
  EXPECT_TRUE(reg.check({"kubectl_logs", {}}));
  EXPECT_TRUE(reg.check({"collect_trace", {{"colour", "red"}}}));
  auto doc = nlohmann::json::parse(reg.catalog_json());
  EXPECT_EQ(doc.size(), 17u);
  EXPECT_NE(reg.catalog_text().find("whether_is_abnormal_metric"), std::string::npos);
}

TEST_F(ToolsTest, AbnormalMetricVerdicts) {
  use(scenario({}));
  auto normal = call("whether_is_abnormal_metric(target=\"" + pod(0) + "\", metric=\"cpu_usage\")");
  EXPECT_TRUE(normal.success);
  EXPECT_EQ(normal.anomalous, false);
  EXPECT_NE(normal.observation.find("metric cpu_usage on " + pod(0) + " is normal"), std::string::npos);
  EXPECT_TRUE(normal.flagged.empty());

  auto bad = call("whether_is_abnormal_metric(target=\"" + pod(0) + "\", metric=\"bogus\")");
  EXPECT_FALSE(bad.success);
  EXPECT_NE(bad.observation.find("ToolError"), std::string::npos);
  EXPECT_NE(bad.observation.find("unknown metric"), std::string::npos);

  use(scenario({{FaultType::kCpuStress, {TargetKind::kPod, "adservice-0", ""}, 200, 400, 0.9}}));
  auto hot = call(R"(whether_is_abnormal_metric(target="adservice-0", metric="cpu_usage"))");
  EXPECT_EQ(hot.anomalous, true);
  EXPECT_NE(hot.observation.find("above threshold"), std::string::npos);
  EXPECT_EQ(hot.flagged, std::vector<std::string>{"adservice-0"});
  EXPECT_GT(hot.value.value_or(0), 0.8);
}

TEST_F(ToolsTest, CollectTrace) {
  use(scenario({}));
  EXPECT_NE(call("collect_trace()").observation.find("no abnormal spans"), std::string::npos);

  use(scenario({{FaultType::kPodFailure, {TargetKind::kPod, "adservice-0", ""}, 200, 400, 1.0}}));
  auto r = call("collect_trace()");
  EXPECT_NE(r.observation.find("adservice"), std::string::npos);
  EXPECT_NE(r.observation.find("Service unavailable"), std::string::npos);
  EXPECT_TRUE(std::count(r.flagged.begin(), r.flagged.end(), "adservice-0"));
}

TEST_F(ToolsTest, CollectTraceTwoFaultedEdges) {
  auto base = sandbox::generate_scenario(11, {});
  const auto& e1 = base.topology.call_edges.front();
  const auto& e2 = base.topology.call_edges.back();
  ASSERT_NE(e1.id(), e2.id());
  use(scenario({{FaultType::kNetworkLoss, {TargetKind::kEdge, e1.caller, e1.callee}, 200, 400, 1.0},
                {FaultType::kNetworkPartition, {TargetKind::kEdge, e2.caller, e2.callee}, 200, 400, 1.0}}));
  auto r = call("collect_trace()");
  EXPECT_NE(r.observation.find("request timeout"), std::string::npos) << r.observation;
  EXPECT_NE(r.observation.find("connection refused"), std::string::npos) << r.observation;
}

TEST_F(ToolsTest, KubectlLogs) {
  use(scenario({}));
  EXPECT_NE(call("kubectl_logs(pod=\"" + pod(1) + "\")").observation.find("no abnormal logs"), std::string::npos);
  auto missing = call("kubectl_logs(pod=\"ghost-0\")");
  EXPECT_FALSE(missing.success);
  EXPECT_NE(missing.observation.find("ToolError"), std::string::npos);

  use(scenario({{FaultType::kMemoryStress, {TargetKind::kPod, "frontend-0", ""}, 200, 400, 0.97}}));
  auto r = call("kubectl_logs(pod=\"frontend-0\")");
  EXPECT_NE(r.observation.find("OOM"), std::string::npos);
  EXPECT_EQ(r.flagged, std::vector<std::string>{"frontend-0"});
}

TEST_F(ToolsTest, ResourceAnalysis) {
  use(scenario({}));
  auto pods = call("pod_analyze()");
  EXPECT_TRUE(pods.flagged.empty());
  // One line per pod plus a summary line.
  EXPECT_EQ(std::count(pods.observation.begin(), pods.observation.end(), '\n'),
            static_cast<long>(source->topology().pods.size()));
  EXPECT_EQ(pods.observation.find("Failed"), std::string::npos);
  auto nodes = call("node_analyze()");
  EXPECT_EQ(std::count(nodes.observation.begin(), nodes.observation.end(), '\n'),
            static_cast<long>(source->topology().nodes.size()));

  use(scenario({{FaultType::kPodFailure, {TargetKind::kPod, "adservice-0", ""}, 200, 400, 1.0}}));
  auto failed = call("pod_analyze()");
  EXPECT_EQ(failed.flagged, std::vector<std::string>{"adservice-0"});
  const auto ns = source->topology().app_namespace;
  EXPECT_EQ(call("run_kubectl_command(command=\"kubectl get pods -n " + ns + "\")").observation, failed.observation);
  if (ns != "default") {
    EXPECT_NE(call("run_kubectl_command(command=\"kubectl get pods -n default\")").observation.find("No resources"),
              std::string::npos);
  }
}

TEST_F(ToolsTest, KubectlCommandIsReadOnly) {
  use(scenario({}));
  auto r = call("run_kubectl_command(command=\"delete pod x\")");
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.observation.find("unsupported command"), std::string::npos);
  EXPECT_TRUE(call("run_kubectl_command(command=\"describe pod " + pod(0) + "\")").success);
  EXPECT_TRUE(call("get_all_namespace()").success);
}

TEST_F(ToolsTest, RelevantMetric) {
  use(scenario({}));
  auto r = call("get_relevant_metric(query=\"cpu\")");
  auto first = r.observation.substr(0, r.observation.find('\n'));
  EXPECT_NE(first.find("cpu"), std::string::npos) << r.observation;
}

TEST_F(ToolsTest, GenerateSopThenMatchIt) {
  use(scenario({}));
  const std::string info = "throughput collapse between two nodes";
  ctx.ask = [&](std::string_view persona, const std::string& prompt) -> std::string {
    EXPECT_EQ(persona, "generate_sop");
    EXPECT_NE(prompt.find(info), std::string::npos);
    return "name: " + info + "\nsteps:\n1. Check node throughput.\n2. Check node status.\n";
  };
  auto r = call("generate_sop(fault_info=\"" + info + "\")");
  ASSERT_TRUE(r.success) << r.observation;
  const auto& doc = std::get<kb::SopDoc>(r.payload);
  EXPECT_EQ(doc.name, info);
  EXPECT_EQ(doc.steps.size(), 2u);
  EXPECT_EQ(session.current_sop->id, doc.id);
  auto m = call("match_sop(query=\"" + info + "\")");
  const auto& hits = std::get<std::vector<kb::ScoredSop>>(m.payload);
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].sop.id, doc.id);

  EXPECT_THROW(parse_generated_sop("prose with no step list"), GenerationParseError);
  ctx.ask = [](std::string_view, const std::string&) -> std::string { return "I cannot help."; };
  EXPECT_FALSE(call("generate_sop(fault_info=\"x\")").success);
}

TEST_F(ToolsTest, GenerateCodeAndRun) {
  use(scenario({{FaultType::kCpuStress, {TargetKind::kPod, "adservice-0", ""}, 200, 400, 0.9}}));
  kb.add_sop({"sop-cpu", "cpu", {"check cpu"}, 0, {}});
  std::string reply = "```\nlet m = whether_is_abnormal_metric(target=\"adservice-0\", metric=\"cpu_usage\")\n"
                      "if anomalous(m): finding(\"cpu on adservice-0 is abnormal\")\n```";
  ctx.ask = [&](std::string_view persona, const std::string&) -> std::string {
    EXPECT_EQ(persona, "code_agent");
    return reply;
  };
  auto g = call("generate_sop_code(sop=\"sop-cpu\")");
  ASSERT_TRUE(g.success) << g.observation;
  EXPECT_EQ(std::get<SopProgram>(g.payload).statements.size(), 2u);
  auto run = call("run_sop()");
  ASSERT_TRUE(run.success) << run.observation;
  const auto& report = std::get<RunReport>(run.payload);
  EXPECT_EQ(report.findings, std::vector<std::string>{"cpu on adservice-0 is abnormal"});

  reply = "frobnicate()";
  auto bad = call("generate_sop_code(sop=\"sop-cpu\")");
  EXPECT_FALSE(bad.success);
  EXPECT_NE(bad.observation.find("frobnicate"), std::string::npos);
  try {
    generate_sop_code(*kb.get_sop("sop-cpu"), registry, ctx);
    FAIL() << "expected ProgramValidationError";
  } catch (const ProgramValidationError& e) {
    EXPECT_NE(e.violations().at(0).find("frobnicate"), std::string::npos);
  }
  reply = "finding(x)";
  EXPECT_THROW(generate_sop_code(*kb.get_sop("sop-cpu"), registry, ctx), ProgramValidationError);
}

TEST_F(ToolsTest, RunSopWithoutProgram) {
  use(scenario({}));
  auto r = call("run_sop()");
  EXPECT_FALSE(r.success);
  EXPECT_NE(r.observation.find("generate_sop_code"), std::string::npos);
}

TEST_F(ToolsTest, MatchObservationDefaultsToLastRun) {
  use(scenario({}));
  kb.add_incident({"i1", "cpu high with throttling", "CpuStress", {}});
  session.last_run_observation = "cpu high with throttling";
  auto r = call("match_observation()");
  ASSERT_TRUE(r.success);
  const auto& hits = std::get<std::vector<kb::ScoredIncident>>(r.payload);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_NEAR(hits[0].score, 1.0, 1e-9);
}

TEST(Speak, CausesAndCap) {
  auto one = speak({{"adservice-0", "CpuStress", 1.0}}, "cpu");
  EXPECT_EQ(one.causes.size(), 1u);
  EXPECT_TRUE(one.warnings.empty());
  auto four = speak({{"a", "CpuStress", 0.2}, {"b", "CpuStress", 0.9}, {"c", "CpuStress", 0.5}, {"d", "CpuStress", 0.9}}, "");
  ASSERT_EQ(four.causes.size(), 3u);
  EXPECT_EQ(four.causes[0].location, "b");
  EXPECT_EQ(four.causes[1].location, "d");
  EXPECT_EQ(four.causes[2].location, "c");
  EXPECT_EQ(four.warnings.size(), 1u);
  EXPECT_THROW(speak({}, "none"), ValidationError);
}

TEST(Speak, CauseText) {
  auto causes = parse_causes("adservice-0:cpu stress; ;node-1<->node-3:NetworkBandwidth:0.7");
  ASSERT_EQ(causes.size(), 2u);
  EXPECT_EQ(causes[0].type, "CpuStress");
  EXPECT_EQ(causes[1].location, "node-1<->node-3");
  EXPECT_DOUBLE_EQ(causes[1].confidence, 0.7);
  EXPECT_EQ(format_causes(causes), "adservice-0:CpuStress;node-1<->node-3:NetworkBandwidth");
}

TEST_F(ToolsTest, SpeakToolIsTerminal) {
  use(scenario({}));
  auto r = call("Speak(causes=\"adservice-0:CpuStress\", explanation=\"cpu\")");
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.terminal);
  auto empty = call("Speak(causes=\"\")");
  EXPECT_FALSE(empty.success);
  EXPECT_FALSE(empty.terminal);
}

}  // namespace
}  // namespace sopflow::tools
