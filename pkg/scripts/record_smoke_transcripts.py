#!/usr/bin/env python3
"""Regenerate the smoke-dataset transcripts (execution + gateway).

Run from the repository root with pandas and scikit-learn installed:

    python3 scripts/record_smoke_transcripts.py

The script drives the real evaluation pipeline once — live interpreter runs,
scripted model turns — while recording every interaction. The resulting
transcript files make the test suite and `dschecker eval` fully offline.
"""
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from dschecker.agent import AgentConfig
from dschecker.docs import load_index
from dschecker.evaluation import EvalConfig, evaluate
from dschecker.execution import LiveEngine, RecordingEngine, SnippetRunner
from dschecker.gateway import (
    ChatMessage,
    Gateway,
    ModelTurn,
    RecordingProvider,
    Role,
    ScriptedProvider,
    ToolCall,
)
from dschecker.model import GenerationParams, PromptVariant
from dschecker.model import load_dataset
from dschecker.prompts import render

SMOKE = ROOT / "fixtures" / "smoke"
TRANSCRIPTS = SMOKE / "transcripts"
SHIM = ROOT / "shim" / "probe_shim.py"

PATCH = (
    "@@ -6,1 +6,1 @@\n"
    '-imp = SimpleImputer(strategy="mean")\n'
    '+imp = SimpleImputer(strategy="constant", fill_value=1)'
)
EXPLANATION = (
    "With strategy='mean' SimpleImputer drops column B (it has no observed "
    "values), so fit_transform returns a single-column array and "
    "imp_array[:, 1] is out of bounds. strategy='constant' keeps empty columns."
)
FINAL_NO = (
    "Looking at the runtime data, column B holds no observed values.\n\n"
    + json.dumps({"correct": "no", "patch": PATCH, "explanation": EXPLANATION})
)
FINAL_YES = '{"correct": "yes"}'
DOC_CALL = {"api_name": "sklearn.impute.SimpleImputer"}


def main() -> None:
    TRANSCRIPTS.mkdir(exist_ok=True)
    for old in TRANSCRIPTS.glob("*.json"):
        old.unlink()
    dataset = load_dataset(SMOKE / "manifest.jsonl")
    params = GenerationParams("replay-model")
    engine = RecordingEngine(
        LiveEngine(sys.executable, shim_path=SHIM), TRANSCRIPTS / "execution.json"
    )
    runner = SnippetRunner(engine)

    full_provider = RecordingProvider(
        ScriptedProvider(
            [ModelTurn(final_text=FINAL_NO), ModelTurn(final_text=FINAL_YES)]
        ),
        TRANSCRIPTS / "gateway_full.json",
    )
    agent_provider = RecordingProvider(
        ScriptedProvider(
            [
                ModelTurn(
                    tool_calls=(
                        ToolCall(id="call_1", name="get_api_documentation", arguments=DOC_CALL),
                    )
                ),
                ModelTurn(final_text=FINAL_NO),
                ModelTurn(
                    tool_calls=(
                        ToolCall(id="call_2", name="get_api_documentation", arguments=DOC_CALL),
                    )
                ),
                ModelTurn(final_text=FINAL_YES),
            ]
        ),
        TRANSCRIPTS / "gateway_agent.json",
    )
    configs = [
        EvalConfig(
            name="full",
            gateway=Gateway(full_provider),
            params=params,
            mode="prompt",
            variant=PromptVariant.FULL,
            runner=runner,
        ),
        EvalConfig(
            name="agent",
            gateway=Gateway(agent_provider),
            params=params,
            mode="agent",
            runner=runner,
            index=load_index(ROOT / "fixtures" / "docs"),
            agent=AgentConfig(),
        ),
    ]
    report = evaluate(dataset, configs, adjudications={"imputer-misuse": True}, seed=7)
    for block in report["configurations"]:
        metrics = block["metrics"]
        assert all(metrics[k] == 1.0 for k in ("precision", "recall", "f1", "fix_rate")), (
            block["name"],
            metrics,
        )
        for outcome in block["records"]:
            assert "error" not in outcome, outcome

    # One base-variant conversation whose patch cannot apply, for the
    # patch-failure exit-code path.
    bad = {
        "correct": "no",
        "patch": '@@ -6,1 +6,1 @@\n-imp = Imputer(strategy="wrong")\n+imp = Imputer()',
        "explanation": "The imputer drops the empty column.",
    }
    bad_provider = RecordingProvider(
        ScriptedProvider([ModelTurn(final_text=json.dumps(bad))]),
        TRANSCRIPTS / "gateway_badpatch.json",
    )
    bundle = render(PromptVariant.BASE, dataset[0])
    Gateway(bad_provider).complete(
        [
            ChatMessage(role=Role.SYSTEM, content=bundle.system_text),
            ChatMessage(role=Role.USER, content=bundle.user_text),
        ],
        (),
        params,
    )
    print("transcripts written to", TRANSCRIPTS)


if __name__ == "__main__":
    main()
