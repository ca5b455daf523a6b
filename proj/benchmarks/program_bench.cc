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


#include <benchmark/benchmark.h>

#include "sopflow/sandbox.h"
#include "sopflow/sop_program.h"
#include "sopflow/tools.h"

namespace {

using namespace sopflow;

const char* const kProgram = R"(let m = whether_is_abnormal_metric(target="adservice-0", metric="cpu_usage")
let traces = collect_trace()
let logs = kubectl_logs(pod="adservice-0")
if anomalous(m): finding("cpu_usage on adservice-0 is abnormal")
if contains(logs, "throttling"): finding("adservice-0 logs show throttling")
pod_analyze()
)";

void BM_ParseProgram(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(tools::parse_program(kProgram));
}
BENCHMARK(BM_ParseProgram);

void BM_RunProgram(benchmark::State& state) {
  auto scenario = sandbox::load_scenario(SOPFLOW_DATA_DIR "/golden/scenarios/scn-000-CpuStress.json");
  sandbox::DataSource source(scenario);
  auto detector = sandbox::DetectorConfig::defaults();
  auto registry = tools::ToolRegistry::standard();
  auto program = tools::parse_program(kProgram);
  tools::SopSession session;
  tools::ToolContext ctx;
  ctx.source = &source;
  ctx.detector = &detector;
  ctx.session = &session;
  for (auto _ : state) benchmark::DoNotOptimize(tools::run_program(program, registry, ctx));
}
BENCHMARK(BM_RunProgram)->Unit(benchmark::kMicrosecond);

}  // namespace
