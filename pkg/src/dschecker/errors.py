"""Error codes, exceptions, and the process exit-code map.

Every failure the library raises on purpose carries a code from ErrorCode.
The CLI translates codes to process exit status via EXIT_CODES; the map is
total: any code not listed falls back to EXIT_INTERNAL.
"""
from __future__ import annotations

from enum import Enum
from typing import Optional


class ErrorCode(str, Enum):
    # dataset / manifest
    MANIFEST_SYNTAX = "MANIFEST_SYNTAX"
    MISSING_FILE = "MISSING_FILE"
    DUPLICATE_ID = "DUPLICATE_ID"
    INVARIANT_VIOLATION = "INVARIANT_VIOLATION"
    # prompt assembly
    EMPTY_SNIPPET = "EMPTY_SNIPPET"
    FEWSHOT_WITHOUT_EXEMPLARS = "FEWSHOT_WITHOUT_EXEMPLARS"
    # snippet execution / probing
    INTERPRETER_NOT_FOUND = "INTERPRETER_NOT_FOUND"
    SHIM_NOT_FOUND = "SHIM_NOT_FOUND"
    WORKSPACE_IO = "WORKSPACE_IO"
    SHIM_INSTRUMENTATION_FAILED = "SHIM_INSTRUMENTATION_FAILED"
    SHIM_PROTOCOL = "SHIM_PROTOCOL"
    TIMEOUT = "TIMEOUT"
    # documentation index
    INDEX_SYNTAX = "INDEX_SYNTAX"
    MISSING_DOC_FILE = "MISSING_DOC_FILE"
    DUPLICATE_ENTRY = "DUPLICATE_ENTRY"
    NOT_FOUND = "NOT_FOUND"
    AMBIGUOUS = "AMBIGUOUS"
    # model gateway
    PROVIDER_HTTP = "PROVIDER_HTTP"
    RATE_LIMITED = "RATE_LIMITED"
    REPLAY_MISMATCH = "REPLAY_MISMATCH"
    MALFORMED_TOOL_CALL = "MALFORMED_TOOL_CALL"
    # verdicts and patches
    MALFORMED_VERDICT = "MALFORMED_VERDICT"
    DIFF_SYNTAX = "DIFF_SYNTAX"
    HUNK_MISMATCH = "HUNK_MISMATCH"
    # agent sessions
    AGENT_EXHAUSTED = "AGENT_EXHAUSTED"
    # evaluation / statistics
    EMPTY_DATASET = "EMPTY_DATASET"
    MISSING_ADJUDICATION = "MISSING_ADJUDICATION"
    DEGENERATE_SAMPLE = "DEGENERATE_SAMPLE"
    SAMPLE_SIZE = "SAMPLE_SIZE"
    GROUP_TOO_SMALL = "GROUP_TOO_SMALL"
    # command line
    USAGE = "USAGE"


class DSCheckerError(Exception):
    """Base class for all deliberate failures; carries an ErrorCode."""

    def __init__(self, code: ErrorCode, message: str, *, detail: Optional[str] = None):
        self.code = code
        self.detail = detail
        super().__init__(message)

    def __str__(self) -> str:  # "CODE: message"
        base = f"{self.code.value}: {super().__str__()}"
        return f"{base} ({self.detail})" if self.detail else base


class DatasetError(DSCheckerError):
    pass


class PromptError(DSCheckerError):
    pass


class ExecutionError(DSCheckerError):
    pass


class DocIndexError(DSCheckerError):
    pass


class GatewayError(DSCheckerError):
    pass


class VerdictError(DSCheckerError):
    pass


class PatchError(DSCheckerError):
    pass


class AgentError(DSCheckerError):
    pass


class EvalError(DSCheckerError):
    pass


# Process exit codes. 0 and 10 are outcomes, not errors: a `check` that parses
# a YES verdict exits 0, a NO verdict exits 10. Everything in the 2x block is
# an error, grouped by family so scripts can branch on coarse cause.
EXIT_OK = 0
EXIT_MISUSE = 10
EXIT_USAGE = 20
EXIT_PROVIDER = 21
EXIT_PROMPT = 22
EXIT_PATCH = 23
EXIT_TIMEOUT = 24
EXIT_EXECUTION = 25
EXIT_VERDICT = 26
EXIT_STATS = 27
EXIT_INTERNAL = 29

EXIT_CODES: dict[ErrorCode, int] = {
    ErrorCode.MANIFEST_SYNTAX: EXIT_USAGE,
    ErrorCode.MISSING_FILE: EXIT_USAGE,
    ErrorCode.DUPLICATE_ID: EXIT_USAGE,
    ErrorCode.INVARIANT_VIOLATION: EXIT_USAGE,
    ErrorCode.INDEX_SYNTAX: EXIT_USAGE,
    ErrorCode.MISSING_DOC_FILE: EXIT_USAGE,
    ErrorCode.DUPLICATE_ENTRY: EXIT_USAGE,
    ErrorCode.NOT_FOUND: EXIT_USAGE,
    ErrorCode.AMBIGUOUS: EXIT_USAGE,
    ErrorCode.EMPTY_DATASET: EXIT_USAGE,
    ErrorCode.USAGE: EXIT_USAGE,
    ErrorCode.PROVIDER_HTTP: EXIT_PROVIDER,
    ErrorCode.RATE_LIMITED: EXIT_PROVIDER,
    ErrorCode.REPLAY_MISMATCH: EXIT_PROVIDER,
    ErrorCode.MALFORMED_TOOL_CALL: EXIT_PROVIDER,
    ErrorCode.EMPTY_SNIPPET: EXIT_PROMPT,
    ErrorCode.FEWSHOT_WITHOUT_EXEMPLARS: EXIT_PROMPT,
    ErrorCode.DIFF_SYNTAX: EXIT_PATCH,
    ErrorCode.HUNK_MISMATCH: EXIT_PATCH,
    ErrorCode.TIMEOUT: EXIT_TIMEOUT,
    ErrorCode.INTERPRETER_NOT_FOUND: EXIT_EXECUTION,
    ErrorCode.SHIM_NOT_FOUND: EXIT_EXECUTION,
    ErrorCode.WORKSPACE_IO: EXIT_EXECUTION,
    ErrorCode.SHIM_INSTRUMENTATION_FAILED: EXIT_EXECUTION,
    ErrorCode.SHIM_PROTOCOL: EXIT_EXECUTION,
    ErrorCode.MALFORMED_VERDICT: EXIT_VERDICT,
    ErrorCode.AGENT_EXHAUSTED: EXIT_VERDICT,
    ErrorCode.MISSING_ADJUDICATION: EXIT_STATS,
    ErrorCode.DEGENERATE_SAMPLE: EXIT_STATS,
    ErrorCode.SAMPLE_SIZE: EXIT_STATS,
    ErrorCode.GROUP_TOO_SMALL: EXIT_STATS,
}


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the process exit status the CLI should use."""
    if isinstance(error, DSCheckerError):
        return EXIT_CODES.get(error.code, EXIT_INTERNAL)
    return EXIT_INTERNAL
