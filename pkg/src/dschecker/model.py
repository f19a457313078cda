"""Shared domain types and the dataset manifest.

Dataset manifests are JSON Lines: one record object per line, UTF-8, with
paths interpreted relative to the manifest's own directory so benchmark sets
stay relocatable. Records are frozen after load and safe to share across
threads.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from .errors import DatasetError, ErrorCode

# Manifest key order, kept stable so serialized datasets diff cleanly.
_RECORD_KEYS = (
    "id",
    "library",
    "snippet_path",
    "data_files",
    "target_api",
    "directives",
    "probe_targets",
    "data_dependent",
    "ground_truth",
    "misuse_description",
    "expectation",
)


class GroundTruth(str, Enum):
    MISUSE = "MISUSE"
    CORRECT = "CORRECT"


class DataKind(str, Enum):
    FRAME = "FRAME"
    NDARRAY = "NDARRAY"
    SEQUENCE = "SEQUENCE"
    OTHER = "OTHER"


class OutputCheckMode(str, Enum):
    STDOUT_CONTAINS = "STDOUT_CONTAINS"
    STDOUT_NOT_CONTAINS = "STDOUT_NOT_CONTAINS"
    CHECKER_SCRIPT = "CHECKER_SCRIPT"


class CorrectAnswer(str, Enum):
    YES = "YES"
    NO = "NO"


class PromptVariant(str, Enum):
    """The five prompt shapes: bare, +runtime data, +directives, both, and
    both preceded by solved exemplars."""

    BASE = "BASE"
    DATA = "DATA"
    DIR = "DIR"
    FULL = "FULL"
    FEWSHOT = "FEWSHOT"


@dataclass(frozen=True)
class ProbeTarget:
    variable_name: str
    line_number: int


@dataclass(frozen=True)
class Directive:
    """One documentation constraint attached to an API, optionally scoped to
    a single parameter."""

    api: str
    text: str
    parameter: Optional[str] = None
    source_url: Optional[str] = None


@dataclass(frozen=True)
class ErrorSignature:
    exception_class: str
    message_substring: Optional[str] = None


@dataclass(frozen=True)
class OutputCheck:
    mode: OutputCheckMode
    value: str


@dataclass(frozen=True)
class Expectation:
    """What a correct fix must achieve: make an error signature disappear,
    satisfy an output check, or both."""

    error_signature: Optional[ErrorSignature] = None
    output_check: Optional[OutputCheck] = None


@dataclass(frozen=True)
class FrameColumn:
    name: str
    dtype: str
    non_null: int


@dataclass(frozen=True)
class FrameDetail:
    columns: tuple[FrameColumn, ...]
    row_count: int
    sample_rows: tuple[str, ...]


@dataclass(frozen=True)
class ArrayDetail:
    shape: tuple[int, ...]
    dtype: str


@dataclass(frozen=True)
class SequenceDetail:
    length: int


@dataclass(frozen=True)
class DataInfo:
    """Runtime facts about one probed variable."""

    target: ProbeTarget
    kind: DataKind
    type_name: str
    detail: FrameDetail | ArrayDetail | SequenceDetail | None

    def __post_init__(self) -> None:
        expected = {
            DataKind.FRAME: FrameDetail,
            DataKind.NDARRAY: ArrayDetail,
            DataKind.SEQUENCE: SequenceDetail,
            DataKind.OTHER: type(None),
        }[self.kind]
        if not isinstance(self.detail, expected):
            raise ValueError(f"kind {self.kind.value} requires {expected.__name__} detail")
        if isinstance(self.detail, FrameDetail) and len(self.detail.sample_rows) > 3:
            raise ValueError("frame detail carries more than 3 sample rows")
        if isinstance(self.detail, ArrayDetail) and any(s < 0 for s in self.detail.shape):
            raise ValueError("array shape entries must be non-negative")


@dataclass(frozen=True)
class Verdict:
    """The model's structured answer, with the untouched reply kept in raw."""

    correct: CorrectAnswer
    patch: Optional[str]
    explanation: Optional[str]
    raw: str

    def __post_init__(self) -> None:
        if self.correct is CorrectAnswer.NO and not (self.patch and self.explanation):
            raise ValueError("a NO verdict requires both patch and explanation")
        if self.correct is CorrectAnswer.YES and self.patch is not None:
            raise ValueError("a YES verdict must not carry a patch")


@dataclass(frozen=True)
class GenerationParams:
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0.0, 2.0]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class SnippetRecord:
    id: str
    library: str
    snippet_path: Path
    data_files: tuple[Path, ...]
    target_api: str
    directives: tuple[Directive, ...]
    probe_targets: tuple[ProbeTarget, ...]
    data_dependent: bool
    ground_truth: GroundTruth
    misuse_description: str
    expectation: Expectation

    def read_snippet(self) -> str:
        return self.snippet_path.read_text(encoding="utf-8")


Dataset = tuple[SnippetRecord, ...]

_WORD = r"(?<![A-Za-z0-9_]){}(?![A-Za-z0-9_])"


def _syntax(msg: str) -> DatasetError:
    return DatasetError(ErrorCode.MANIFEST_SYNTAX, msg)


def _violation(record_id: str, field_name: str, msg: str) -> DatasetError:
    return DatasetError(
        ErrorCode.INVARIANT_VIOLATION, f"record '{record_id}', field '{field_name}': {msg}"
    )


def _require(obj: dict, key: str, types, where: str):
    if key not in obj:
        raise _syntax(f"{where}: missing key '{key}'")
    value = obj[key]
    if not isinstance(value, types):
        raise _syntax(f"{where}: key '{key}' has unexpected type {type(value).__name__}")
    return value


def _parse_directive(obj: Any, where: str) -> Directive:
    if not isinstance(obj, dict):
        raise _syntax(f"{where}: directive entries must be objects")
    api = _require(obj, "api", str, where)
    text = _require(obj, "text", str, where)
    parameter = obj.get("parameter")
    source_url = obj.get("source_url")
    for key, val in (("parameter", parameter), ("source_url", source_url)):
        if val is not None and not isinstance(val, str):
            raise _syntax(f"{where}: directive key '{key}' must be a string")
    return Directive(api=api, text=text, parameter=parameter, source_url=source_url)


def _parse_probe_target(obj: Any, where: str) -> ProbeTarget:
    if not isinstance(obj, dict):
        raise _syntax(f"{where}: probe_targets entries must be objects")
    name = _require(obj, "variable_name", str, where)
    line = _require(obj, "line_number", int, where)
    return ProbeTarget(variable_name=name, line_number=line)


def _parse_expectation(obj: Any, where: str, base_dir: Path) -> Expectation:
    if not isinstance(obj, dict):
        raise _syntax(f"{where}: expectation must be an object")
    signature = None
    if obj.get("error_signature") is not None:
        sig = obj["error_signature"]
        if not isinstance(sig, dict):
            raise _syntax(f"{where}: error_signature must be an object")
        cls = _require(sig, "exception_class", str, where)
        sub = sig.get("message_substring")
        if sub is not None and not isinstance(sub, str):
            raise _syntax(f"{where}: message_substring must be a string")
        signature = ErrorSignature(exception_class=cls, message_substring=sub)
    check = None
    if obj.get("output_check") is not None:
        chk = obj["output_check"]
        if not isinstance(chk, dict):
            raise _syntax(f"{where}: output_check must be an object")
        mode_raw = _require(chk, "mode", str, where)
        try:
            mode = OutputCheckMode(mode_raw)
        except ValueError:
            raise _syntax(f"{where}: unknown output_check mode '{mode_raw}'") from None
        value = _require(chk, "value", str, where)
        if mode is OutputCheckMode.CHECKER_SCRIPT:
            # Checker scripts live alongside the manifest; store them resolved
            # so downstream runners need no base directory.
            value = str((base_dir / value).resolve())
        check = OutputCheck(mode=mode, value=value)
    return Expectation(error_signature=signature, output_check=check)


def _validate_record(record: SnippetRecord, snippet_text: str) -> None:
    rid = record.id
    if record.ground_truth is GroundTruth.CORRECT:
        if record.misuse_description:
            raise _violation(rid, "misuse_description", "must be empty when ground_truth=CORRECT")
        if record.expectation.error_signature is not None:
            raise _violation(rid, "expectation", "error_signature not allowed when CORRECT")
    else:
        if record.expectation.error_signature is None and record.expectation.output_check is None:
            raise _violation(
                rid, "expectation", "MISUSE needs an error_signature or an output_check"
            )
    line_count = len(snippet_text.splitlines())
    for target in record.probe_targets:
        if not 1 <= target.line_number <= line_count:
            raise _violation(
                rid,
                "probe_targets",
                f"line {target.line_number} outside snippet ({line_count} lines)",
            )
        if not re.search(_WORD.format(re.escape(target.variable_name)), snippet_text):
            raise _violation(
                rid, "probe_targets", f"variable '{target.variable_name}' not found in snippet"
            )
    for directive in record.directives:
        if not directive.text:
            raise _violation(rid, "directives", "directive text must be non-empty")


def _parse_record(obj: dict, base_dir: Path, where: str) -> SnippetRecord:
    rid = _require(obj, "id", str, where)
    where = f"{where} (id '{rid}')"
    snippet_rel = _require(obj, "snippet_path", str, where)
    snippet_path = (base_dir / snippet_rel).resolve()
    if not snippet_path.is_file():
        raise DatasetError(ErrorCode.MISSING_FILE, f"{where}: snippet '{snippet_rel}' not found")
    data_files = []
    for entry in _require(obj, "data_files", list, where):
        if not isinstance(entry, str):
            raise _syntax(f"{where}: data_files entries must be strings")
        data_path = (base_dir / entry).resolve()
        if not data_path.is_file():
            raise DatasetError(ErrorCode.MISSING_FILE, f"{where}: data file '{entry}' not found")
        data_files.append(data_path)
    gt_raw = _require(obj, "ground_truth", str, where)
    try:
        ground_truth = GroundTruth(gt_raw)
    except ValueError:
        raise _syntax(f"{where}: unknown ground_truth '{gt_raw}'") from None
    record = SnippetRecord(
        id=rid,
        library=_require(obj, "library", str, where),
        snippet_path=snippet_path,
        data_files=tuple(data_files),
        target_api=_require(obj, "target_api", str, where),
        directives=tuple(
            _parse_directive(d, where) for d in _require(obj, "directives", list, where)
        ),
        probe_targets=tuple(
            _parse_probe_target(t, where) for t in _require(obj, "probe_targets", list, where)
        ),
        data_dependent=_require(obj, "data_dependent", bool, where),
        ground_truth=ground_truth,
        misuse_description=_require(obj, "misuse_description", str, where),
        expectation=_parse_expectation(
            _require(obj, "expectation", dict, where), where, base_dir
        ),
    )
    _validate_record(record, record.read_snippet())
    return record


def load_dataset(manifest_path: Path | str) -> Dataset:
    """Load and validate a JSONL manifest; all-or-nothing.

    Raises on the first offending record so a bad manifest never yields a
    partially valid dataset.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(ErrorCode.MISSING_FILE, f"manifest not found: {manifest_path}")
    base_dir = manifest_path.resolve().parent
    records: list[SnippetRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(
        manifest_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        where = f"{manifest_path.name}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _syntax(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise _syntax(f"{where}: record must be a JSON object")
        record = _parse_record(obj, base_dir, where)
        if record.id in seen:
            raise DatasetError(ErrorCode.DUPLICATE_ID, f"{where}: duplicate id '{record.id}'")
        seen.add(record.id)
        records.append(record)
    return tuple(records)


def _directive_to_dict(d: Directive) -> dict:
    out: dict[str, Any] = {"api": d.api, "text": d.text}
    if d.parameter is not None:
        out["parameter"] = d.parameter
    if d.source_url is not None:
        out["source_url"] = d.source_url
    return out


def _expectation_to_dict(e: Expectation, base_dir: Path) -> dict:
    out: dict[str, Any] = {}
    if e.error_signature is not None:
        sig: dict[str, Any] = {"exception_class": e.error_signature.exception_class}
        if e.error_signature.message_substring is not None:
            sig["message_substring"] = e.error_signature.message_substring
        out["error_signature"] = sig
    if e.output_check is not None:
        value = e.output_check.value
        if e.output_check.mode is OutputCheckMode.CHECKER_SCRIPT:
            value = os.path.relpath(value, base_dir)
        out["output_check"] = {
            "mode": e.output_check.mode.value,
            "value": value,
        }
    return out


def record_to_dict(record: SnippetRecord, base_dir: Path) -> dict:
    """Manifest-shaped dict with paths relative to base_dir."""
    return {
        "id": record.id,
        "library": record.library,
        "snippet_path": os.path.relpath(record.snippet_path, base_dir),
        "data_files": [os.path.relpath(p, base_dir) for p in record.data_files],
        "target_api": record.target_api,
        "directives": [_directive_to_dict(d) for d in record.directives],
        "probe_targets": [
            {"variable_name": t.variable_name, "line_number": t.line_number}
            for t in record.probe_targets
        ],
        "data_dependent": record.data_dependent,
        "ground_truth": record.ground_truth.value,
        "misuse_description": record.misuse_description,
        "expectation": _expectation_to_dict(record.expectation, base_dir),
    }


def serialize_dataset(dataset: Dataset, base_dir: Path | str) -> str:
    """Render a dataset back to manifest text (inverse of load_dataset)."""
    base_dir = Path(base_dir).resolve()
    lines = [
        json.dumps(record_to_dict(r, base_dir), ensure_ascii=False) for r in dataset
    ]
    return "\n".join(lines) + ("\n" if lines else "")
