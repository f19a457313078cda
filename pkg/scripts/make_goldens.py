#!/usr/bin/env python3
"""Regenerate the reviewed golden snapshots under tests/golden/.

Run only when an intentional format change is made; inspect the diff before
committing, since these files pin user-visible contracts (prompt layout,
tool-declaration wire form, call-log summary).
"""
import json
import sys
from pathlib import Path

from dschecker import (
    AgentConfig,
    Gateway,
    GenerationParams,
    PromptVariant,
    ReplayEngine,
    ReplayProvider,
    SnippetRunner,
    call_summary,
    load_dataset,
    load_index,
    load_tool_declarations,
    render,
    run_agent,
)

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "tests" / "golden"
SMOKE = ROOT / "fixtures" / "smoke"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(SMOKE / "manifest.jsonl")
    record = next(r for r in dataset if r.id == "imputer-misuse")
    runner = SnippetRunner(ReplayEngine(SMOKE / "transcripts" / "execution.json"))
    params = GenerationParams(model_name="replay-model")

    infos = runner.collect_data_info(record)
    bundle = render(PromptVariant.FULL, record, data_infos=infos)
    (GOLDEN / "prompt_full_misuse.txt").write_text(
        "### system\n" + bundle.system_text + "\n### user\n" + bundle.user_text,
        encoding="utf-8",
    )

    gateway = Gateway(ReplayProvider(SMOKE / "transcripts" / "gateway_agent.json"))
    index = load_index(ROOT / "fixtures" / "docs")
    verdict, log = run_agent(
        record, index, gateway, AgentConfig(max_iterations=8), runner=runner, params=params
    )
    assert verdict.correct.value == "NO"
    (GOLDEN / "call_summary.txt").write_text(call_summary(log) + "\n", encoding="utf-8")

    tools = [
        {"name": t.name, "description": t.description, "parameters": t.parameters}
        for t in load_tool_declarations()
    ]
    (GOLDEN / "tool_declarations.json").write_text(
        json.dumps(tools, indent=2) + "\n", encoding="utf-8"
    )
    print("wrote", ", ".join(p.name for p in sorted(GOLDEN.iterdir())))


if __name__ == "__main__":
    sys.exit(main())
