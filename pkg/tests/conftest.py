"""Shared fixtures: smoke dataset, replay engines, synthetic record factory."""
import json
from pathlib import Path

import pytest

from dschecker import (
    Expectation,
    GroundTruth,
    ReplayEngine,
    SnippetRecord,
    SnippetRunner,
    load_dataset,
    load_index,
)

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
SMOKE = FIXTURES / "smoke"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def smoke_dataset():
    return load_dataset(SMOKE / "manifest.jsonl")


@pytest.fixture(scope="session")
def misuse_record(smoke_dataset):
    return next(r for r in smoke_dataset if r.id == "imputer-misuse")


@pytest.fixture(scope="session")
def correct_record(smoke_dataset):
    return next(r for r in smoke_dataset if r.id == "imputer-correct")


@pytest.fixture()
def replay_runner():
    return SnippetRunner(ReplayEngine(SMOKE / "transcripts" / "execution.json"))


@pytest.fixture(scope="session")
def docs_index():
    return load_index(FIXTURES / "docs")


@pytest.fixture()
def make_record(tmp_path):
    """Build a minimal on-disk SnippetRecord for synthetic cases."""
    counter = {"n": 0}

    def build(source, *, library="pandas", record_id=None, **overrides):
        counter["n"] += 1
        rid = record_id or f"synthetic-{counter['n']}"
        snippet = tmp_path / f"{rid}.py"
        snippet.write_text(source, encoding="utf-8")
        fields = {
            "id": rid,
            "library": library,
            "snippet_path": snippet,
            "data_files": (),
            "target_api": "",
            "directives": (),
            "probe_targets": (),
            "data_dependent": False,
            "ground_truth": GroundTruth.CORRECT,
            "misuse_description": "",
            "expectation": Expectation(),
        }
        fields.update(overrides)
        return SnippetRecord(**fields)

    return build


def load_golden(name):
    return (GOLDEN / name).read_text(encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
