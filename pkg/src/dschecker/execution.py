"""Sandboxed snippet execution, probe collection, and fix classification.

Every run happens in a fresh temporary workspace (snippet + data files copied
in, interpreter invoked with the workspace as cwd). Engines make the I/O
surface swappable: LiveEngine talks to a real interpreter, ReplayEngine
serves a recorded transcript so the full pipeline runs without one, and
RecordingEngine produces those transcripts.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import ErrorCode, ExecutionError
from .model import (
    ArrayDetail,
    DataInfo,
    DataKind,
    Expectation,
    FrameColumn,
    FrameDetail,
    OutputCheckMode,
    ProbeTarget,
    SequenceDetail,
    SnippetRecord,
)

DEFAULT_TIMEOUT_MS = 30_000


class RunStatus(str, Enum):
    OK = "OK"
    ERROR = "ERROR"
    TIMEOUT = "TIMEOUT"


class FixClass(str, Enum):
    FIXED = "FIXED"
    STILL_BROKEN = "STILL_BROKEN"
    NEW_ERROR = "NEW_ERROR"
    PATCH_APPLY_FAILED = "PATCH_APPLY_FAILED"
    TIMEOUT = "TIMEOUT"
    NOT_ATTEMPTED = "NOT_ATTEMPTED"


@dataclass(frozen=True)
class ExecutionOutcome:
    status: RunStatus
    stdout: str
    stderr: str
    error_type: Optional[str]
    duration_ms: int

    def __post_init__(self) -> None:
        if self.status is RunStatus.ERROR and not self.error_type:
            raise ValueError("ERROR outcome requires error_type")
        if self.status is RunStatus.OK and self.error_type:
            raise ValueError("OK outcome must not carry error_type")


@dataclass(frozen=True)
class FixOutcome:
    classification: FixClass
    evidence: str


@dataclass(frozen=True)
class ProbeRunResult:
    """Raw result of one shim invocation, before DataInfo conversion."""

    exit_code: int
    records: tuple[dict, ...]
    stdout: str  # program output with @@PROBE lines removed
    stderr: str
    duration_ms: int


_CLASS_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)(?::\s?.*)?$")
_CLASSY = re.compile(r"(?:^[A-Z])|error|exception", re.IGNORECASE)


def parse_error_type(stderr: str) -> Optional[str]:
    """Exception class from the last traceback line, if one is recognizable.

    Heuristic on purpose: the final `Class: message` (or bare `Class`) line
    wins when its last dotted component looks exception-like.
    """
    for line in reversed(stderr.splitlines()):
        line = line.strip()
        if not line:
            continue
        match = _CLASS_LINE.match(line)
        if match:
            head = match.group(1)
            if _CLASSY.search(head.split(".")[-1]):
                return head
        return None
    return None


def _outcome_from_run(
    exit_code: int, stdout: str, stderr: str, duration_ms: int
) -> ExecutionOutcome:
    if exit_code == 0:
        return ExecutionOutcome(RunStatus.OK, stdout, stderr, None, duration_ms)
    error_type = parse_error_type(stderr) or "NonZeroExit"
    return ExecutionOutcome(RunStatus.ERROR, stdout, stderr, error_type, duration_ms)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _data_manifest(data_files: Sequence[Path]) -> list[dict]:
    entries = [
        {"name": p.name, "sha256": _sha256(Path(p).read_bytes())} for p in data_files
    ]
    return sorted(entries, key=lambda e: e["name"])


def _key(payload: dict) -> str:
    return _sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"))


def run_key(snippet_text: str, data_files: Sequence[Path]) -> str:
    return _key({"kind": "run", "snippet": snippet_text, "data": _data_manifest(data_files)})


def probe_key(
    snippet_text: str, data_files: Sequence[Path], probes: Sequence[ProbeTarget]
) -> str:
    return _key(
        {
            "kind": "probe",
            "snippet": snippet_text,
            "data": _data_manifest(data_files),
            "probes": [[p.variable_name, p.line_number] for p in probes],
        }
    )


def checker_key(script_text: str, stdin_text: str) -> str:
    return _key({"kind": "checker", "script": script_text, "stdin": stdin_text})


class _Workspace:
    """Context manager creating an isolated run directory."""

    def __init__(
        self,
        snippet_text: str,
        data_files: Sequence[Path],
        root: Optional[Path],
        keep: bool,
    ):
        self.snippet_text = snippet_text
        self.data_files = data_files
        self.root = root
        self.keep = keep
        self.path: Optional[Path] = None

    def __enter__(self) -> Path:
        self.path = Path(tempfile.mkdtemp(prefix="dschecker-", dir=self.root))
        try:
            (self.path / "snippet.py").write_text(self.snippet_text, encoding="utf-8")
            seen = set()
            for src in self.data_files:
                src = Path(src)
                if src.name in seen:
                    raise ExecutionError(
                        ErrorCode.WORKSPACE_IO, f"duplicate data file name '{src.name}'"
                    )
                seen.add(src.name)
                shutil.copy(src, self.path / src.name)
        except OSError as exc:
            shutil.rmtree(self.path, ignore_errors=True)
            raise ExecutionError(ErrorCode.WORKSPACE_IO, f"workspace setup failed: {exc}")
        except Exception:
            shutil.rmtree(self.path, ignore_errors=True)
            raise
        return self.path

    def __exit__(self, *exc) -> None:
        if self.path is not None and not self.keep:
            shutil.rmtree(self.path, ignore_errors=True)


class LiveEngine:
    """Runs snippets with a real interpreter, bounded by a worker semaphore."""

    def __init__(
        self,
        interpreter: str,
        shim_path: Optional[Path | str] = None,
        max_workers: Optional[int] = None,
        keep_workspaces: bool = False,
        workspace_root: Optional[Path | str] = None,
    ):
        self.interpreter = interpreter
        # Subprocesses run inside the workspace, so the shim path must be
        # anchored to the invocation directory now.
        self.shim_path = Path(shim_path).resolve() if shim_path else None
        self.keep_workspaces = keep_workspaces
        self.workspace_root = Path(workspace_root) if workspace_root else None
        workers = max_workers or os.cpu_count() or 4
        self._slots = threading.BoundedSemaphore(workers)

    def _popen(self, argv: list[str], cwd: Path, timeout_ms: int, stdin_text: str = ""):
        started = time.monotonic()
        try:
            proc = subprocess.run(
                argv,
                cwd=cwd,
                input=stdin_text,
                capture_output=True,
                text=True,
                timeout=timeout_ms / 1000.0,
            )
        except subprocess.TimeoutExpired as exc:
            elapsed = int((time.monotonic() - started) * 1000)
            stdout = exc.stdout.decode("utf-8", "replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            stderr = exc.stderr.decode("utf-8", "replace") if isinstance(exc.stderr, bytes) else (exc.stderr or "")
            return None, stdout, stderr, max(elapsed, timeout_ms)
        except FileNotFoundError:
            raise ExecutionError(
                ErrorCode.INTERPRETER_NOT_FOUND, f"interpreter '{argv[0]}' not found"
            ) from None
        elapsed = int((time.monotonic() - started) * 1000)
        return proc.returncode, proc.stdout, proc.stderr, elapsed

    def run(self, snippet_text: str, data_files: Sequence[Path], timeout_ms: int) -> ExecutionOutcome:
        with self._slots, _Workspace(
            snippet_text, data_files, self.workspace_root, self.keep_workspaces
        ) as ws:
            code, out, err, ms = self._popen(
                [self.interpreter, "snippet.py"], ws, timeout_ms
            )
        if code is None:
            return ExecutionOutcome(RunStatus.TIMEOUT, out, err, None, ms)
        return _outcome_from_run(code, out, err, ms)

    def probe(
        self,
        snippet_text: str,
        data_files: Sequence[Path],
        probes: Sequence[ProbeTarget],
        timeout_ms: int,
    ) -> ProbeRunResult:
        if self.shim_path is None or not self.shim_path.is_file():
            raise ExecutionError(
                ErrorCode.SHIM_NOT_FOUND, f"probe shim not found at '{self.shim_path}'"
            )
        request = {
            "snippet_path": "snippet.py",
            "probes": [
                {"variable_name": p.variable_name, "line_number": p.line_number} for p in probes
            ],
            "workspace": ".",
        }
        with self._slots, _Workspace(
            snippet_text, data_files, self.workspace_root, self.keep_workspaces
        ) as ws:
            (ws / "probes.json").write_text(json.dumps(request), encoding="utf-8")
            code, out, err, ms = self._popen(
                [self.interpreter, str(self.shim_path), "snippet.py", "probes.json"],
                ws,
                timeout_ms,
            )
        if code is None:
            raise ExecutionError(ErrorCode.TIMEOUT, f"probe run exceeded {timeout_ms} ms")
        records = []
        clean: list[str] = []
        for line in out.splitlines():
            if line.startswith("@@PROBE "):
                try:
                    record = json.loads(line[len("@@PROBE "):])
                except json.JSONDecodeError:
                    raise ExecutionError(
                        ErrorCode.SHIM_PROTOCOL, f"unparseable probe record: {line[:120]}"
                    ) from None
                if not isinstance(record, dict) or record.get("v") != 1:
                    raise ExecutionError(
                        ErrorCode.SHIM_PROTOCOL, f"unsupported probe record: {line[:120]}"
                    )
                records.append(record)
            else:
                clean.append(line)
        return ProbeRunResult(
            exit_code=code,
            records=tuple(records),
            stdout="\n".join(clean) + ("\n" if clean else ""),
            stderr=err,
            duration_ms=ms,
        )

    def checker(self, script_text: str, stdin_text: str, timeout_ms: int) -> bool:
        with self._slots, _Workspace(script_text, (), self.workspace_root, False) as ws:
            code, _, _, _ = self._popen(
                [self.interpreter, "snippet.py"], ws, timeout_ms, stdin_text=stdin_text
            )
        if code is None:
            raise ExecutionError(ErrorCode.TIMEOUT, f"checker exceeded {timeout_ms} ms")
        return code == 0


class ReplayEngine:
    """Serves recorded execution results; no interpreter required."""

    def __init__(self, transcript_path: Path | str):
        data = json.loads(Path(transcript_path).read_text(encoding="utf-8"))
        if data.get("version") != 1:
            raise ExecutionError(
                ErrorCode.REPLAY_MISMATCH, f"unsupported transcript version: {transcript_path}"
            )
        self._entries: dict[str, dict] = data["entries"]

    def _lookup(self, key: str, what: str) -> dict:
        entry = self._entries.get(key)
        if entry is None:
            raise ExecutionError(
                ErrorCode.REPLAY_MISMATCH, f"no recorded {what} for key {key[:12]}…"
            )
        return entry

    def run(self, snippet_text, data_files, timeout_ms) -> ExecutionOutcome:
        e = self._lookup(run_key(snippet_text, data_files), "run")
        return ExecutionOutcome(
            status=RunStatus(e["status"]),
            stdout=e["stdout"],
            stderr=e["stderr"],
            error_type=e.get("error_type"),
            duration_ms=e["duration_ms"],
        )

    def probe(self, snippet_text, data_files, probes, timeout_ms) -> ProbeRunResult:
        e = self._lookup(probe_key(snippet_text, data_files, probes), "probe")
        return ProbeRunResult(
            exit_code=e["exit_code"],
            records=tuple(e["records"]),
            stdout=e["stdout"],
            stderr=e["stderr"],
            duration_ms=e["duration_ms"],
        )

    def checker(self, script_text, stdin_text, timeout_ms) -> bool:
        return bool(self._lookup(checker_key(script_text, stdin_text), "checker")["passed"])


class RecordingEngine:
    """Wraps LiveEngine and persists every interaction keyed by inputs."""

    def __init__(self, live: LiveEngine, transcript_path: Path | str):
        self._live = live
        self._path = Path(transcript_path)
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self._path.exists():
            self._entries = json.loads(self._path.read_text(encoding="utf-8")).get("entries", {})

    def _store(self, key: str, payload: dict) -> None:
        with self._lock:
            self._entries[key] = payload
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.write_text(
                json.dumps({"version": 1, "entries": self._entries}, indent=2, sort_keys=True)
                + "\n",
                encoding="utf-8",
            )

    def run(self, snippet_text, data_files, timeout_ms) -> ExecutionOutcome:
        outcome = self._live.run(snippet_text, data_files, timeout_ms)
        payload = {
            "status": outcome.status.value,
            "stdout": outcome.stdout,
            "stderr": outcome.stderr,
            "duration_ms": outcome.duration_ms,
        }
        if outcome.error_type is not None:
            payload["error_type"] = outcome.error_type
        self._store(run_key(snippet_text, data_files), payload)
        return outcome

    def probe(self, snippet_text, data_files, probes, timeout_ms) -> ProbeRunResult:
        result = self._live.probe(snippet_text, data_files, probes, timeout_ms)
        self._store(
            probe_key(snippet_text, data_files, probes),
            {
                "exit_code": result.exit_code,
                "records": list(result.records),
                "stdout": result.stdout,
                "stderr": result.stderr,
                "duration_ms": result.duration_ms,
            },
        )
        return result

    def checker(self, script_text, stdin_text, timeout_ms) -> bool:
        passed = self._live.checker(script_text, stdin_text, timeout_ms)
        self._store(checker_key(script_text, stdin_text), {"passed": passed})
        return passed


def data_info_from_record(record: dict) -> DataInfo:
    """Convert one shim wire record into a DataInfo (SHIM_PROTOCOL on junk)."""
    try:
        target = ProbeTarget(variable_name=record["variable"], line_number=record["line"])
        kind = DataKind(record["kind"])
        type_name = record["type_name"]
        detail_raw = record.get("detail") or {}
        detail: FrameDetail | ArrayDetail | SequenceDetail | None
        if kind is DataKind.FRAME:
            detail = FrameDetail(
                columns=tuple(
                    FrameColumn(name=c["name"], dtype=c["dtype"], non_null=c["non_null"])
                    for c in detail_raw["columns"]
                ),
                row_count=detail_raw["row_count"],
                sample_rows=tuple(detail_raw["sample_rows"]),
            )
        elif kind is DataKind.NDARRAY:
            detail = ArrayDetail(
                shape=tuple(detail_raw["shape"]), dtype=detail_raw["dtype"]
            )
        elif kind is DataKind.SEQUENCE:
            detail = SequenceDetail(length=detail_raw["length"])
        else:
            detail = None
        return DataInfo(target=target, kind=kind, type_name=type_name, detail=detail)
    except (KeyError, TypeError, ValueError) as exc:
        raise ExecutionError(
            ErrorCode.SHIM_PROTOCOL, f"probe record malformed: {exc!r}"
        ) from None


class SnippetRunner:
    """High-level execution facade bound to one engine."""

    def __init__(self, engine, default_timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self.engine = engine
        self.default_timeout_ms = default_timeout_ms

    def run_snippet(
        self,
        snippet_text: str,
        data_files: Sequence[Path] = (),
        timeout_ms: Optional[int] = None,
    ) -> ExecutionOutcome:
        if timeout_ms is None:
            timeout_ms = self.default_timeout_ms
        if timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        return self.engine.run(snippet_text, tuple(data_files), timeout_ms)

    def collect_data_info(
        self,
        record: SnippetRecord,
        targets: Optional[Sequence[ProbeTarget]] = None,
        timeout_ms: Optional[int] = None,
    ) -> list[DataInfo]:
        targets = tuple(targets if targets is not None else record.probe_targets)
        if not targets:
            raise ValueError("collect_data_info requires at least one probe target")
        timeout_ms = timeout_ms or self.default_timeout_ms
        result = self.engine.probe(
            record.read_snippet(), record.data_files, targets, timeout_ms
        )
        if result.exit_code == 2:
            tail = result.stderr.strip().splitlines()
            raise ExecutionError(
                ErrorCode.SHIM_INSTRUMENTATION_FAILED,
                tail[-1] if tail else "shim exited 2 without a message",
            )
        return [data_info_from_record(r) for r in result.records]

    def run_checker(
        self, script_path: Path, stdout_text: str, timeout_ms: Optional[int] = None
    ) -> bool:
        script_text = Path(script_path).read_text(encoding="utf-8")
        return self.engine.checker(
            script_text, stdout_text, timeout_ms or self.default_timeout_ms
        )


def _signature_matches(expectation: Expectation, outcome: ExecutionOutcome) -> bool:
    signature = expectation.error_signature
    assert signature is not None
    observed = outcome.error_type or ""
    type_ok = observed == signature.exception_class or observed.endswith(
        "." + signature.exception_class
    )
    if not type_ok:
        return False
    if signature.message_substring is not None:
        return signature.message_substring in outcome.stderr
    return True


def _output_check_passes(
    expectation: Expectation,
    outcome: ExecutionOutcome,
    run_checker: Optional[Callable[[str, ExecutionOutcome], bool]],
) -> bool:
    check = expectation.output_check
    assert check is not None
    if check.mode is OutputCheckMode.STDOUT_CONTAINS:
        return check.value in outcome.stdout
    if check.mode is OutputCheckMode.STDOUT_NOT_CONTAINS:
        return check.value not in outcome.stdout
    if run_checker is None:
        raise ValueError("CHECKER_SCRIPT expectation needs a checker runner")
    return run_checker(check.value, outcome)


def classify_fix(
    original: ExecutionOutcome,
    apply_ok: bool,
    patched: Optional[ExecutionOutcome],
    expectation: Expectation,
    run_checker: Optional[Callable[[str, ExecutionOutcome], bool]] = None,
) -> FixOutcome:
    """Deterministic total classification of a patch attempt.

    With an error signature: the patched run must finish OK (and satisfy any
    output check) to count as FIXED; the same signature again is
    STILL_BROKEN; a different failure is NEW_ERROR. With only an output
    check, the check alone decides.
    """
    if not apply_ok:
        return FixOutcome(FixClass.PATCH_APPLY_FAILED, "patch did not apply")
    assert patched is not None, "apply_ok implies a patched outcome"
    if patched.status is RunStatus.TIMEOUT:
        return FixOutcome(
            FixClass.TIMEOUT, f"patched run timed out after {patched.duration_ms} ms"
        )
    if expectation.error_signature is not None:
        wanted = expectation.error_signature.exception_class
        if patched.status is RunStatus.OK:
            if expectation.output_check is not None and not _output_check_passes(
                expectation, patched, run_checker
            ):
                return FixOutcome(
                    FixClass.STILL_BROKEN, f"{wanted} resolved but the output check fails"
                )
            return FixOutcome(FixClass.FIXED, f"patched run OK; {wanted} resolved")
        if _signature_matches(expectation, patched):
            return FixOutcome(FixClass.STILL_BROKEN, f"patched run still raises {wanted}")
        return FixOutcome(
            FixClass.NEW_ERROR, f"patched run raises {patched.error_type} instead of {wanted}"
        )
    if expectation.output_check is not None:
        if _output_check_passes(expectation, patched, run_checker):
            return FixOutcome(FixClass.FIXED, "output check passes on the patched run")
        return FixOutcome(FixClass.STILL_BROKEN, "output check fails on the patched run")
    if patched.status is RunStatus.OK:
        return FixOutcome(FixClass.FIXED, "patched run OK (no expectation details)")
    return FixOutcome(
        FixClass.NEW_ERROR, f"patched run raises {patched.error_type} (no expectation details)"
    )
