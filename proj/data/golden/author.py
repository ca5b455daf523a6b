#!/usr/bin/env python3
# Copyright 2026 The sopflow Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#  http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the scripted-backend replies for the golden corpus.

Each scenario has a plan: one entry per episode step naming the reply of
every persona asked in that step. The expected path length of an episode is
the number of planned steps, since every step executes exactly one action.

Outputs (relative to this directory):
  scripts/<scenario>.json            full system
  scripts/<flag>/<scenario>.json     one ablation flag turned off
  manifest.txt, manifest-<flag>.txt  corpus manifests
  expected.json                      authored outcomes

Golden transcripts are produced afterwards by `sopflow benchmark
--transcripts` and checked in; see README.md.
"""

import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

# Scenario facts: id, target, fault type, metric and the alert line the
# detector renders for it.
SCENARIOS = [
    dict(id="scn-000-CpuStress", target="adservice-0", type="CpuStress", metric="cpu_usage"),
    dict(id="scn-001-MemoryStress", target="frontend-0", type="MemoryStress", metric="memory_usage"),
    dict(id="scn-002-PodFailure", target="adservice-0", type="PodFailure", metric="cpu_usage"),
    dict(id="scn-003-NetworkDelay", target="redis-cart-0", type="NetworkDelay", metric="latency_p99_ms"),
    dict(id="scn-004-NetworkLoss", target="redis-cart-0", type="NetworkLoss", metric="error_rate"),
    dict(id="scn-005-NetworkPartition", target="redis-cart-0", type="NetworkPartition", metric="error_rate"),
    dict(id="scn-006-NetworkDuplicate", target="shippingservice-0", type="NetworkDuplicate", metric="error_rate"),
    dict(id="scn-007-NetworkCorrupt", target="adservice-0", type="NetworkCorrupt", metric="error_rate"),
    dict(id="scn-008-NetworkBandwidth", target="node-1<->node-3", type="NetworkBandwidth",
         metric="node_network_throughput_mbps"),
]

LOG_HINT = {
    "CpuStress": "throttling",
    "MemoryStress": "OOM",
    "PodFailure": "refused",
    "NetworkLoss": "timeout",
    "NetworkPartition": "refused",
    "NetworkDuplicate": "duplicate",
    "NetworkCorrupt": "checksum",
}

SUMMARY = {
    "CpuStress": "{t} is CPU bound: cpu_usage is above threshold and its logs show throttling.",
    "MemoryStress": "{t} is under memory pressure: memory_usage is above threshold.",
    "PodFailure": "{t} failed and stopped reporting; its callers see refused connections.",
    "NetworkDelay": "Requests to {t} are delayed on the network; latency rose while cpu stayed normal.",
    "NetworkLoss": "Packets to {t} are being lost; its requests time out.",
    "NetworkPartition": "{t} is partitioned from its peers; every request is refused.",
    "NetworkDuplicate": "{t} receives duplicated packets; its logs show duplicate acks.",
    "NetworkCorrupt": "Packets to {t} are corrupted; its logs show checksum mismatches.",
    "NetworkBandwidth": "Bandwidth between {a} and {b} is capped; throughput on both nodes fell below baseline.",
}


def fence(body):
    return "```\n" + body.strip() + "\n```"


def program(s):
    """A program that confirms the fault on the scenario's target."""
    t, ty = s["target"], s["type"]
    if ty == "NetworkBandwidth":
        a, b = t.split("<->")
        return fence(f"""
let na = whether_is_abnormal_metric(target="{a}", metric="node_network_throughput_mbps")
let nb = whether_is_abnormal_metric(target="{b}", metric="node_network_throughput_mbps")
let nodes = node_analyze()
if anomalous(na): finding("node_network_throughput_mbps on {a} is below baseline")
if anomalous(nb): finding("node_network_throughput_mbps on {b} is below baseline")
""")
    lines = [f'let m = whether_is_abnormal_metric(target="{t}", metric="{s["metric"]}")']
    lines.append("let traces = collect_trace()")
    if ty in LOG_HINT:
        pod = t
        lines.append(f'let logs = kubectl_logs(pod="{pod}")')
    lines.append(f'if anomalous(m): finding("{s["metric"]} on {t} is abnormal")')
    lines.append(f'if anomalous(traces): finding("error spans at {t}")')
    if ty == "PodFailure":
        lines.append("let pods = pod_analyze()")
        lines.append(f'if anomalous(pods): finding("pod {t} is not ready")')
    elif ty in LOG_HINT:
        hint = LOG_HINT[ty]
        lines.append(f'if contains(logs, "{hint}"): finding("{hint} messages in the logs of {t}")')
    return fence("\n".join(lines))


def broken_program(s):
    # References a tool that does not exist; validation rejects it.
    return fence(f"""
let m = whether_is_abnormal_metric(target="{s["target"]}", metric="{s["metric"]}")
let p = packet_capture(pod="{s["target"]}")
if anomalous(m): finding("{s["metric"]} on {s["target"]} is abnormal")
""")


def judge_found(s):
    t = s["target"]
    if s["type"] == "NetworkBandwidth":
        a, b = t.split("<->")
        summary = SUMMARY[s["type"]].format(a=a, b=b)
    else:
        summary = SUMMARY[s["type"]].format(t=t)
    return f"FOUND: location={t} type={s['type']}\nSUMMARY: {summary}", summary


def ob_reply(s):
    return f"type: {s['type']} (high)"


def speak_call(s):
    _, summary = judge_found(s)
    return f'Speak(causes="{s["target"]}:{s["type"]}", explanation="{summary}")'


def generated_sop(s):
    return ("name: Node network throughput below baseline\n"
            "steps:\n"
            "1. Check node_network_throughput_mbps on every node; if it fell below baseline, suspect a bandwidth cap.\n"
            "2. Run node_analyze; if all nodes are Ready, the fault is on the network between them.\n"
            "3. Report the pair of nodes whose throughput fell together.\n")


# ---------------------------------------------------------------------------
# Plans. A step is a dict persona -> reply. Missing personas fall back to the
# defaults at the end of each script.

def rule_path(s, judge=True, speak_by_agent=False):
    """match_sop -> [generate_sop] -> generate_sop_code -> run_sop ->
    match_observation -> Speak, every step chosen from the rule candidates."""
    steps = [dict(main_thought="Start from the alert and look for a matching SOP.")]
    if s["type"] == "NetworkBandwidth":
        steps.append(dict(main_thought="No SOP matched; write one for this throughput drop.",
                          generate_sop=generated_sop(s)))
    steps.append(dict(main_thought="Turn the SOP into a program.", code_agent=program(s)))
    steps.append(dict(main_thought="Run the program."))
    final = dict(main_thought="Compare the findings with past incidents.", ob_agent=ob_reply(s))
    if judge:
        final["judge_agent"] = judge_found(s)[0]
    steps.append(final)
    last = dict(main_thought="The evidence is conclusive; report the root cause.")
    if speak_by_agent:
        last["action_agent"] = "- " + speak_call(s) + " | findings and history agree"
    steps.append(last)
    return steps


def full_plan(s):
    ty = s["type"]
    if ty == "PodFailure":
        plan = rule_path(s)
        plan[1] = dict(main_thought="Check pod status before writing the program.",
                       action_agent="- pod_analyze() | see whether the pod is running")
        plan[1]["main_select"] = "2"
        plan.insert(2, dict(main_thought="The pod is not ready; use the pod failure SOP.",
                            action_agent='- generate_sop_code(sop="sop-pod-failure") | matches the evidence',
                            code_agent=program(s)))
        return plan
    if ty == "NetworkDelay":
        plan = rule_path(s)
        plan.insert(4, dict(main_thought="Confirm the slow spans before reporting.",
                            action_agent="- collect_trace() | look at slow spans",
                            main_select="2"))
        return plan
    if ty == "NetworkPartition":
        plan = rule_path(s)
        plan[1]["code_agent"] = broken_program(s)
        plan.insert(2, dict(main_thought="The program was rejected; generate it again.", code_agent=program(s)))
        return plan
    if ty == "NetworkCorrupt":
        plan = rule_path(s)
        plan[3] = dict(main_thought="Compare the findings with past incidents.",
                       ob_agent="type: NetworkCorrupt (medium)\ntype: NetworkLoss (low)",
                       judge_agent="NOT FOUND")
        plan[4:] = [
            dict(main_thought="The error rate SOP is too coarse; look for a more specific SOP.",
                 action_agent='- match_sop(query="Corrupted packets with bad payloads") | ObAgent suggests corruption'),
            dict(main_thought="Turn the specific SOP into a program.", code_agent=program(s)),
            dict(main_thought="Run the program."),
            dict(main_thought="Compare the new findings with past incidents.", ob_agent=ob_reply(s),
                 judge_agent=judge_found(s)[0]),
            dict(main_thought="The evidence is conclusive; report the root cause."),
        ]
        return plan
    return rule_path(s)


def evidence_first_path(s, direct=False):
    """collect_trace -> match_observation -> Speak, proposed by the agent."""
    alert_obs = f"{s['metric']} on {s['target']} is abnormal"
    calls = ["collect_trace()",
             f'match_observation(observation="{alert_obs}")',
             speak_call(s)]
    plan = []
    thoughts = ["Gather evidence from traces.", "Compare the symptom with past incidents.",
                "The evidence is conclusive; report the root cause."]
    for i, call in enumerate(calls):
        step = dict(main_thought=thoughts[i])
        if direct:
            step["main_act"] = call
        else:
            step["action_agent"] = f"- {call} | next step"
        if i == 1:
            step["ob_agent"] = ob_reply(s)
            step["judge_agent"] = judge_found(s)[0]
        plan.append(step)
    return plan


def sop_flow_off_path(s):
    plan = evidence_first_path(s)
    plan[0] = dict(main_thought="Start from the alert and look for a matching SOP.")
    return plan


ABLATION_PLANS = {
    "sop_knowledge": lambda s: evidence_first_path(s),
    "sop_flow": sop_flow_off_path,
    "action_set": lambda s: evidence_first_path(s, direct=True),
    "action_agent": lambda s: rule_path(s),
    "ob_agent": lambda s: rule_path(s),
    "judge_agent": lambda s: rule_path(s, judge=False, speak_by_agent=True),
}


def script(plan):
    entries = []
    for i, step in enumerate(plan, start=1):
        for persona, reply in step.items():
            entries.append({"match": f"[ROLE {persona}] [STEP {i}]", "response": reply, "once": False})
    entries += [
        {"match": "[ROLE action_agent]", "response": "NONE", "once": False},
        {"match": "[ROLE main_select]", "response": "1", "once": False},
    ]
    return {"entries": entries}


def dump(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def main():
    expected = {"scenarios": {}, "ablations": {}}
    manifest = []
    for s in SCENARIOS:
        plan = full_plan(s)
        dump(os.path.join(HERE, "scripts", s["id"] + ".json"), script(plan))
        manifest.append(f"scenarios/{s['id']}.json scripts/{s['id']}.json")
        expected["scenarios"][s["id"]] = {"location": s["target"], "type": s["type"], "path_length": len(plan)}
    lengths = [v["path_length"] for v in expected["scenarios"].values()]
    expected["apl"] = sum(lengths) / len(lengths)
    with open(os.path.join(HERE, "manifest.txt"), "w") as f:
        f.write("# scenario script\n" + "\n".join(manifest) + "\n")

    for flag, make in ABLATION_PLANS.items():
        lines = []
        per = {}
        for s in SCENARIOS:
            plan = make(s)
            dump(os.path.join(HERE, "scripts", flag, s["id"] + ".json"), script(plan))
            lines.append(f"scenarios/{s['id']}.json scripts/{flag}/{s['id']}.json")
            per[s["id"]] = len(plan)
        with open(os.path.join(HERE, f"manifest-{flag}.txt"), "w") as f:
            f.write(f"# {flag}=off\n" + "\n".join(lines) + "\n")
        expected["ablations"][flag] = {"path_lengths": per}
    dump(os.path.join(HERE, "expected.json"), expected)


if __name__ == "__main__":
    main()
