"""Detector evaluation: metrics, bootstrap resampling, and significance.

evaluate() drives one or more detector configurations over a dataset and
emits a report dict that serializes byte-identically under a fixed seed and
replay transcripts. Headline metrics follow the usual confusion-count
definitions with one stated convention: an undefined ratio (zero flagged,
zero misuses drawn) counts as 0 so bootstrap vectors are total.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agent import AgentConfig, CallRecord, run_agent
from .docs import DocIndex
from .errors import DSCheckerError, ErrorCode, EvalError
from .execution import FixClass, FixOutcome, SnippetRunner, classify_fix
from .gateway import ChatMessage, Gateway, Role
from .model import (
    CorrectAnswer,
    Dataset,
    GenerationParams,
    GroundTruth,
    PromptVariant,
    SnippetRecord,
)
from .patching import MalformedVerdict, apply_patch, parse_verdict
from .prompts import FewShotExemplar, PromptTemplate, load_template, render
from .stats import SplitMix64, dunn_test, shapiro_wilk  # noqa: F401  (re-exported ops)

DEFAULT_SAMPLE_SIZE = 20
DEFAULT_RESAMPLES = 50


class EvalMode(str, Enum):
    STRICT = "STRICT"  # true positives require a validated explanation
    RAW = "RAW"  # every true flag counts


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    flagged: int
    total_misuses: int
    total_records: int

    def __post_init__(self) -> None:
        if min(self.tp, self.flagged, self.total_misuses, self.total_records) < 0:
            raise ValueError("counts must be non-negative")
        if self.tp > self.flagged or self.tp > self.total_misuses:
            raise ValueError("tp cannot exceed flagged or total_misuses")
        if self.total_misuses > self.total_records:
            raise ValueError("total_misuses cannot exceed total_records")


def detection_metrics(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, F1); P=0 when nothing was flagged."""
    if counts.total_misuses == 0:
        raise EvalError(ErrorCode.EMPTY_DATASET, "dataset contains no misuses")
    precision = counts.tp / counts.flagged if counts.flagged else 0.0
    recall = counts.tp / counts.total_misuses
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def fix_rate(correct_patches: int, total_misuses: int) -> float:
    if total_misuses == 0:
        raise EvalError(ErrorCode.EMPTY_DATASET, "dataset contains no misuses")
    return correct_patches / total_misuses


def load_adjudications(path: Path | str) -> dict[str, bool]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(isinstance(v, bool) for v in raw.values()):
        raise EvalError(ErrorCode.USAGE, "adjudications must map record id -> boolean")
    return raw


@dataclass
class RecordOutcome:
    """Everything the report keeps about one (config, record) evaluation."""

    record_id: str
    ground_truth: GroundTruth
    verdict: Optional[CorrectAnswer] = None
    malformed_reason: Optional[str] = None
    flagged: bool = False
    explanation_valid: Optional[bool] = None
    fix: Optional[FixOutcome] = None
    tool_calls: Optional[list[CallRecord]] = None
    error: Optional[str] = None

    @property
    def true_flag(self) -> bool:
        return self.flagged and self.ground_truth is GroundTruth.MISUSE

    @property
    def fixed(self) -> bool:
        return self.fix is not None and self.fix.classification is FixClass.FIXED


def adjudicated_counts(
    outcomes: Sequence[RecordOutcome],
    dataset: Dataset,
    adjudications: Optional[dict[str, bool]],
    mode: EvalMode,
) -> ConfusionCounts:
    """Confusion counts, optionally gated by explanation adjudication."""
    total_misuses = sum(1 for r in dataset if r.ground_truth is GroundTruth.MISUSE)
    flagged = sum(1 for o in outcomes if o.flagged)
    if mode is EvalMode.STRICT:
        known = adjudications or {}
        missing = [o.record_id for o in outcomes if o.true_flag and o.record_id not in known]
        if missing:
            raise EvalError(
                ErrorCode.MISSING_ADJUDICATION,
                "STRICT mode lacks adjudications for: " + ", ".join(sorted(missing)),
            )
        tp = sum(1 for o in outcomes if o.true_flag and known[o.record_id])
    else:
        tp = sum(1 for o in outcomes if o.true_flag)
    return ConfusionCounts(
        tp=tp, flagged=flagged, total_misuses=total_misuses, total_records=len(dataset)
    )


# ---------------------------------------------------------------------------
# Bootstrap


@dataclass(frozen=True)
class Contribution:
    """Per-record confusion contribution, the resampling unit."""

    is_misuse: bool
    flagged: bool
    true_positive: bool
    fixed: bool


def f1_statistic(sample: Sequence[Contribution]) -> float:
    tp = sum(1 for c in sample if c.true_positive)
    flagged = sum(1 for c in sample if c.flagged)
    misuses = sum(1 for c in sample if c.is_misuse)
    precision = tp / flagged if flagged else 0.0
    recall = tp / misuses if misuses else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def fix_rate_statistic(sample: Sequence[Contribution]) -> float:
    misuses = sum(1 for c in sample if c.is_misuse)
    return sum(1 for c in sample if c.fixed) / misuses if misuses else 0.0


def bootstrap(
    per_record: Sequence[Contribution],
    sample_size: int,
    resamples: int,
    seed: int,
    statistic: Callable[[Sequence[Contribution]], float],
    with_replacement: bool = True,
) -> list[float]:
    """Seeded resampling; the generator (splitmix64) is part of the contract,
    so any faithful reimplementation draws the same index sequences."""
    if not per_record:
        raise EvalError(ErrorCode.EMPTY_DATASET, "nothing to resample")
    if sample_size < 1:
        raise EvalError(ErrorCode.SAMPLE_SIZE, "sample_size must be >= 1")
    if not with_replacement and sample_size > len(per_record):
        raise EvalError(
            ErrorCode.SAMPLE_SIZE,
            f"cannot draw {sample_size} of {len(per_record)} without replacement",
        )
    rng = SplitMix64(seed)
    n = len(per_record)
    values: list[float] = []
    for _ in range(resamples):
        if with_replacement:
            drawn = [per_record[rng.below(n)] for _ in range(sample_size)]
        else:
            pool = list(range(n))
            for i in range(sample_size):
                j = i + rng.below(n - i)
                pool[i], pool[j] = pool[j], pool[i]
            drawn = [per_record[i] for i in pool[:sample_size]]
        values.append(statistic(drawn))
    return values


# ---------------------------------------------------------------------------
# Per-record evaluation


@dataclass
class EvalConfig:
    """One fully wired detector configuration."""

    name: str
    gateway: Gateway
    params: GenerationParams
    mode: str = "prompt"  # "prompt" | "agent"
    variant: PromptVariant = PromptVariant.FULL
    runner: Optional[SnippetRunner] = None
    index: Optional[DocIndex] = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    exemplars: tuple[FewShotExemplar, ...] = ()
    template: Optional[PromptTemplate] = None
    patch_fuzz: int = 3
    timeout_ms: int = 30_000
    descriptor: dict = field(default_factory=dict)

    def digest(self) -> str:
        blob = json.dumps(
            self.descriptor
            or {
                "name": self.name,
                "mode": self.mode,
                "variant": self.variant.value,
                "model": self.params.model_name,
                "temperature": self.params.temperature,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_DATA_VARIANTS = (PromptVariant.DATA, PromptVariant.FULL, PromptVariant.FEWSHOT)


def _obtain_verdict(record: SnippetRecord, config: EvalConfig, outcome: RecordOutcome):
    """Run the prompt or agent flow; returns a Verdict or None (recorded)."""
    if config.mode == "agent":
        if config.index is None:
            raise EvalError(ErrorCode.USAGE, f"config '{config.name}': agent mode needs an index")
        verdict, log = run_agent(
            record,
            config.index,
            config.gateway,
            config.agent,
            runner=config.runner,
            params=config.params,
            template=config.template,
        )
        outcome.tool_calls = log
        return verdict
    data_infos = ()
    if config.variant in _DATA_VARIANTS and record.probe_targets:
        if config.runner is None:
            raise EvalError(
                ErrorCode.USAGE, f"config '{config.name}': variant needs an execution engine"
            )
        data_infos = config.runner.collect_data_info(record, timeout_ms=config.timeout_ms)
    bundle = render(
        config.variant,
        record,
        data_infos=data_infos,
        exemplars=config.exemplars,
        template=config.template,
    )
    conversation = [
        ChatMessage(role=Role.SYSTEM, content=bundle.system_text),
        ChatMessage(role=Role.USER, content=bundle.user_text),
    ]
    turn = config.gateway.complete(conversation, (), config.params)
    if turn.final_text is None:
        outcome.malformed_reason = "TOOL_CALLS_IN_PROMPT_MODE"
        return None
    return parse_verdict(turn.final_text)


def _validate_fix(record: SnippetRecord, patch: str, config: EvalConfig) -> FixOutcome:
    runner = config.runner
    if runner is None:
        return FixOutcome(FixClass.NOT_ATTEMPTED, "no execution engine configured")
    snippet = record.read_snippet()
    original = runner.run_snippet(snippet, record.data_files, config.timeout_ms)
    try:
        patched_text = apply_patch(snippet, patch, fuzz=config.patch_fuzz)
    except DSCheckerError:
        return classify_fix(original, False, None, record.expectation)
    patched = runner.run_snippet(patched_text, record.data_files, config.timeout_ms)

    def checker(script_value: str, outcome_) -> bool:
        return runner.run_checker(Path(script_value), outcome_.stdout, config.timeout_ms)

    return classify_fix(original, True, patched, record.expectation, run_checker=checker)


def evaluate_record(record: SnippetRecord, config: EvalConfig) -> RecordOutcome:
    outcome = RecordOutcome(record_id=record.id, ground_truth=record.ground_truth)
    try:
        verdict = _obtain_verdict(record, config, outcome)
    except MalformedVerdict as exc:
        outcome.malformed_reason = exc.reason
        verdict = None
    except DSCheckerError as exc:
        outcome.error = str(exc)
        verdict = None
    if verdict is not None:
        outcome.verdict = verdict.correct
        outcome.flagged = verdict.correct is CorrectAnswer.NO
    if record.ground_truth is GroundTruth.MISUSE:
        if outcome.flagged and verdict is not None and verdict.patch:
            try:
                outcome.fix = _validate_fix(record, verdict.patch, config)
            except DSCheckerError as exc:
                outcome.fix = FixOutcome(FixClass.NOT_ATTEMPTED, f"validation failed: {exc}")
        else:
            outcome.fix = FixOutcome(FixClass.NOT_ATTEMPTED, "no patch to validate")
    return outcome


# ---------------------------------------------------------------------------
# Report assembly


def _outcome_to_dict(outcome: RecordOutcome, mode: EvalMode) -> dict:
    out: dict = {
        "id": outcome.record_id,
        "ground_truth": outcome.ground_truth.value,
        "verdict": outcome.verdict.value.lower() if outcome.verdict else None,
        "flagged": outcome.flagged,
    }
    if outcome.malformed_reason:
        out["malformed_reason"] = outcome.malformed_reason
    if mode is EvalMode.STRICT and outcome.true_flag:
        out["explanation_valid"] = outcome.explanation_valid
    if outcome.fix is not None:
        out["fix"] = {
            "classification": outcome.fix.classification.value,
            "evidence": outcome.fix.evidence,
        }
    if outcome.tool_calls is not None:
        out["tool_calls"] = [
            {
                "tool": c.tool,
                "arguments": c.arguments,
                "result_digest": c.result_digest,
                "relevant": c.relevant,
            }
            for c in outcome.tool_calls
        ]
    if outcome.error:
        out["error"] = outcome.error
    return out


def _contribution(outcome: RecordOutcome, mode: EvalMode, adj: dict[str, bool]) -> Contribution:
    if mode is EvalMode.STRICT:
        tp = outcome.true_flag and adj.get(outcome.record_id, False)
    else:
        tp = outcome.true_flag
    return Contribution(
        is_misuse=outcome.ground_truth is GroundTruth.MISUSE,
        flagged=outcome.flagged,
        true_positive=tp,
        fixed=outcome.fixed,
    )


def _normality(vector: Sequence[float]) -> dict:
    if len(set(vector)) <= 1:
        return {"degenerate": True}
    w, p = shapiro_wilk(vector)
    return {"W": w, "p": p}


def evaluate(
    dataset: Dataset,
    configs: Sequence[EvalConfig],
    adjudications: Optional[dict[str, bool]] = None,
    seed: int = 7,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    resamples: int = DEFAULT_RESAMPLES,
    with_replacement: bool = True,
    jobs: int = 1,
) -> dict:
    """Evaluate every configuration over the dataset and build the report.

    Record-level failures become outcome entries, never crashes. STRICT mode
    engages exactly when adjudications are supplied. The bootstrap is re-drawn
    from the same seed per (config, metric), so identical index sequences are
    used across configurations — a paired design.
    """
    if not dataset:
        raise EvalError(ErrorCode.EMPTY_DATASET, "dataset is empty")
    if adjudications is not None:
        unknown = set(adjudications) - {r.id for r in dataset}
        if unknown:
            raise EvalError(
                ErrorCode.USAGE, "adjudications for unknown ids: " + ", ".join(sorted(unknown))
            )
    mode = EvalMode.STRICT if adjudications is not None else EvalMode.RAW
    adj = adjudications or {}

    config_blocks = []
    per_config_vectors: dict[str, dict[str, list[float]]] = {}
    for config in configs:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(lambda r: evaluate_record(r, config), dataset))
        else:
            outcomes = [evaluate_record(r, config) for r in dataset]
        for outcome in outcomes:
            if mode is EvalMode.STRICT and outcome.true_flag:
                outcome.explanation_valid = adj.get(outcome.record_id)
        counts = adjudicated_counts(outcomes, dataset, adjudications, mode)
        precision, recall, f1 = detection_metrics(counts)
        fixed_count = sum(1 for o in outcomes if o.fixed)
        rate = fix_rate(fixed_count, counts.total_misuses)
        contributions = [_contribution(o, mode, adj) for o in outcomes]
        vectors = {
            "f1": bootstrap(
                contributions, sample_size, resamples, seed, f1_statistic, with_replacement
            ),
            "fix_rate": bootstrap(
                contributions, sample_size, resamples, seed, fix_rate_statistic, with_replacement
            ),
        }
        per_config_vectors[config.name] = vectors
        config_blocks.append(
            {
                "name": config.name,
                "digest": config.digest(),
                "mode": config.mode,
                "variant": config.variant.value if config.mode == "prompt" else None,
                "counts": {
                    "tp": counts.tp,
                    "flagged": counts.flagged,
                    "total_misuses": counts.total_misuses,
                    "total_records": counts.total_records,
                },
                "metrics": {
                    "precision": precision,
                    "recall": recall,
                    "f1": f1,
                    "fix_rate": rate,
                },
                "records": [_outcome_to_dict(o, mode) for o in outcomes],
            }
        )

    statistics: dict = {
        "seed": seed,
        "bootstrap": {
            "sample_size": sample_size,
            "resamples": resamples,
            "with_replacement": with_replacement,
            "per_config": {
                name: {
                    "f1": vecs["f1"],
                    "fix_rate": vecs["fix_rate"],
                    "normality": {
                        "f1": _normality(vecs["f1"]),
                        "fix_rate": _normality(vecs["fix_rate"]),
                    },
                }
                for name, vecs in per_config_vectors.items()
            },
        },
    }
    if len(configs) >= 2:
        names = [c.name for c in configs]
        comparisons: dict = {}
        for metric in ("f1", "fix_rate"):
            groups = [per_config_vectors[name][metric] for name in names]
            rows = dunn_test(groups)
            comparisons[metric] = [
                {
                    "a": names[row.group_a],
                    "b": names[row.group_b],
                    "z": row.z,
                    "p_raw": row.p_raw,
                    "p_adjusted": row.p_adjusted,
                    "significant": row.significant,
                }
                for row in rows
            ]
        statistics["comparisons"] = comparisons

    total_misuses = sum(1 for r in dataset if r.ground_truth is GroundTruth.MISUSE)
    return {
        "version": 1,
        "mode": mode.value,
        "dataset": {"records": len(dataset), "misuses": total_misuses},
        "configurations": config_blocks,
        "statistics": statistics,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def report_to_table(report: dict) -> str:
    """Plain-text metric × configuration table."""
    names = [c["name"] for c in report["configurations"]]
    metrics = ("precision", "recall", "f1", "fix_rate")
    left = max(len(m) for m in metrics) + 2
    widths = [max(len(n), 7) + 2 for n in names]
    header = "metric".ljust(left) + "".join(n.rjust(w) for n, w in zip(names, widths))
    lines = [header]
    for metric in metrics:
        row = metric.ljust(left)
        for config, width in zip(report["configurations"], widths):
            row += f"{config['metrics'][metric] * 100:.2f}%".rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"
