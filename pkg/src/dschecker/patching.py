"""Model-answer parsing and unified-diff application.

parse_verdict turns whatever the model said into a Verdict or a
MALFORMED_VERDICT with a reason code usable for a reprompt. apply_patch and
reverse_patch implement the small unified-diff dialect models actually emit:
optional file headers, `@@` hunks, and nothing else.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ErrorCode, PatchError, VerdictError
from .model import CorrectAnswer, Verdict

# Reason codes carried by MALFORMED_VERDICT for targeted reprompting.
REASON_NO_JSON_OBJECT = "NO_JSON_OBJECT"
REASON_INVALID_CORRECT = "INVALID_CORRECT"
REASON_MISSING_PATCH = "MISSING_PATCH"
REASON_MISSING_EXPLANATION = "MISSING_EXPLANATION"


class MalformedVerdict(VerdictError):
    def __init__(self, reason: str, message: str):
        super().__init__(ErrorCode.MALFORMED_VERDICT, message, detail=reason)
        self.reason = reason


def _first_json_object(text: str) -> tuple[dict, str] | None:
    """Decode the first balanced top-level JSON object found in text.

    Scanning with raw_decode skips fences, prose, and stray braces inside
    prose; only a position where a full object parses is accepted. Returns
    the object plus the exact substring it was parsed from.
    """
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, end = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj, text[match.start() : end]
    return None


def extract_verdict_json(raw: str) -> str:
    """The verdict object exactly as the model wrote it, fences and prose
    stripped — what `check --out` saves."""
    found = _first_json_object(raw)
    if found is None:
        raise MalformedVerdict(REASON_NO_JSON_OBJECT, "no JSON object found in model reply")
    return found[1]


def parse_verdict(raw: str) -> Verdict:
    """Total parse: every input yields a Verdict or MALFORMED_VERDICT."""
    found = _first_json_object(raw)
    if found is None:
        raise MalformedVerdict(REASON_NO_JSON_OBJECT, "no JSON object found in model reply")
    obj = found[0]
    correct = obj.get("correct")
    if not isinstance(correct, str) or correct.strip().lower() not in ("yes", "no"):
        raise MalformedVerdict(
            REASON_INVALID_CORRECT, f"key 'correct' must be yes/no, got {correct!r}"
        )
    if correct.strip().lower() == "yes":
        # Extra keys (including a stray patch) are ignored on a YES.
        return Verdict(correct=CorrectAnswer.YES, patch=None, explanation=None, raw=raw)
    patch = obj.get("patch")
    if not isinstance(patch, str) or not patch.strip():
        raise MalformedVerdict(REASON_MISSING_PATCH, "a 'no' verdict requires a non-empty patch")
    explanation = obj.get("explanation")
    if not isinstance(explanation, str) or not explanation.strip():
        raise MalformedVerdict(
            REASON_MISSING_EXPLANATION, "a 'no' verdict requires a non-empty explanation"
        )
    return Verdict(correct=CorrectAnswer.NO, patch=patch, explanation=explanation, raw=raw)


_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


@dataclass
class _Hunk:
    old_start: int
    body: list[str]  # tagged lines: ' ', '-', '+'
    no_newline_old: bool = False
    no_newline_new: bool = False

    @property
    def old_lines(self) -> list[str]:
        return [ln[1:] for ln in self.body if ln[0] in " -"]

    @property
    def new_lines(self) -> list[str]:
        return [ln[1:] for ln in self.body if ln[0] in " +"]


def _parse_hunks(diff: str) -> list[_Hunk]:
    if not diff.strip():
        raise PatchError(ErrorCode.DIFF_SYNTAX, "empty diff")
    hunks: list[_Hunk] = []
    current: _Hunk | None = None
    for line in diff.rstrip("\n").splitlines():
        match = _HUNK_RE.match(line)
        if match:
            current = _Hunk(old_start=int(match.group(1)), body=[])
            hunks.append(current)
            continue
        if line.startswith("```"):
            current = None  # markdown fence closes the current hunk body
            continue
        if current is None:
            continue  # headers and prose outside hunks are tolerated
        if line.startswith("\\"):
            # "\ No newline at end of file" qualifies the previous body line.
            if current.body:
                tag = current.body[-1][0]
                if tag in " -":
                    current.no_newline_old = True
                if tag in " +":
                    current.no_newline_new = True
            continue
        if line == "":
            line = " "  # empty context line with the leading space trimmed
        if line[0] not in " -+":
            raise PatchError(ErrorCode.DIFF_SYNTAX, f"unrecognized hunk line: {line!r}")
        current.body.append(line)
    if not hunks:
        raise PatchError(ErrorCode.DIFF_SYNTAX, "diff contains no hunks")
    for i, hunk in enumerate(hunks, start=1):
        if not hunk.body:
            raise PatchError(ErrorCode.DIFF_SYNTAX, f"hunk {i} has an empty body")
    return hunks


def _split_keep_final(text: str) -> tuple[list[str], bool]:
    if text == "":
        return [], False
    ends_nl = text.endswith("\n")
    lines = text.split("\n")
    if ends_nl:
        lines.pop()
    return lines, ends_nl


def apply_patch(original: str, diff: str, fuzz: int = 3) -> str:
    """Apply a unified diff; all-or-nothing.

    Each hunk must match exactly at its stated position or at an offset of at
    most `fuzz` lines (tried outward: 0, +1, -1, …). Matching is
    whitespace-significant. CRLF input is normalized for matching and
    restored on output.
    """
    crlf = "\r\n" in original
    work = original.replace("\r\n", "\n") if crlf else original
    lines, ends_nl = _split_keep_final(work)
    hunks = _parse_hunks(diff.replace("\r\n", "\n"))

    offset = 0
    out_ends_nl = ends_nl
    for index, hunk in enumerate(hunks, start=1):
        old = hunk.old_lines
        if old:
            want = hunk.old_start - 1 + offset
        else:
            want = hunk.old_start + offset  # pure insertion goes after old_start
        pos = _locate(lines, old, want, fuzz)
        if pos is None:
            raise PatchError(
                ErrorCode.HUNK_MISMATCH,
                f"hunk {index} does not match within ±{fuzz} lines of line "
                f"{max(want, 0) + 1}",
            )
        lines[pos : pos + len(old)] = hunk.new_lines
        offset += len(hunk.new_lines) - len(old)
        if pos + len(hunk.new_lines) == len(lines):
            # The hunk rewrote (or deleted) the tail; its marker now decides.
            out_ends_nl = not hunk.no_newline_new if hunk.new_lines else True
    if not lines:
        return ""
    result = "\n".join(lines) + ("\n" if out_ends_nl else "")
    return result.replace("\n", "\r\n") if crlf else result


def _locate(lines: list[str], old: list[str], want: int, fuzz: int) -> int | None:
    if not old:
        return min(max(want, 0), len(lines))
    deltas = [0]
    for d in range(1, fuzz + 1):
        deltas.extend((d, -d))
    for delta in deltas:
        pos = want + delta
        if pos < 0 or pos + len(old) > len(lines):
            continue
        if lines[pos : pos + len(old)] == old:
            return pos
    return None


def reverse_patch(diff: str) -> str:
    """Swap the roles of old and new: additions become removals, header
    counts and file labels trade places. Involution: reversing twice is the
    identity, byte for byte."""
    _parse_hunks(diff)  # syntax gate; raises DIFF_SYNTAX on garbage
    out: list[str] = []
    lines = diff.splitlines(keepends=True)
    i = 0
    while i < len(lines):
        line = lines[i]
        stripped = line.rstrip("\n")
        if stripped.startswith("--- ") and i + 1 < len(lines):
            nxt = lines[i + 1].rstrip("\n")
            if nxt.startswith("+++ "):
                eol1 = line[len(stripped):]
                eol2 = lines[i + 1][len(nxt):]
                out.append("--- " + nxt[4:] + eol1)
                out.append("+++ " + stripped[4:] + eol2)
                i += 2
                continue
        match = _HUNK_RE.match(stripped)
        if match:
            a, ac, b, bc = match.groups()
            left = f"-{b},{bc}" if bc is not None else f"-{b}"
            right = f"+{a},{ac}" if ac is not None else f"+{a}"
            rest = stripped[match.end():]
            out.append(f"@@ {left} {right} @@{rest}" + line[len(stripped):])
        elif stripped.startswith("+"):
            out.append("-" + line[1:])
        elif stripped.startswith("-") and not stripped.startswith("--- "):
            out.append("+" + line[1:])
        else:
            out.append(line)
        i += 1
    return "".join(out)
