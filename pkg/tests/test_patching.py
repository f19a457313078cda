"""Verdict JSON parsing and unified-diff application."""
import difflib
import json
import random

import pytest

from dschecker import (
    CorrectAnswer,
    ErrorCode,
    MalformedVerdict,
    PatchError,
    apply_patch,
    extract_verdict_json,
    parse_verdict,
    reverse_patch,
)

from conftest import SMOKE

IMPUTER_PATCH = (
    "@@ -6,1 +6,1 @@\n"
    '-imp = SimpleImputer(strategy="mean")\n'
    '+imp = SimpleImputer(strategy="constant", fill_value=1)'
)


# --- verdict parsing ---------------------------------------------------------


def test_parse_yes_verdict():
    verdict = parse_verdict('{"correct": "yes"}')
    assert verdict.correct is CorrectAnswer.YES
    assert verdict.patch is None
    assert verdict.explanation is None
    assert verdict.raw == '{"correct": "yes"}'


def test_parse_no_verdict_with_patch():
    raw = json.dumps(
        {"correct": "no", "patch": IMPUTER_PATCH, "explanation": "column dropped"}
    )
    verdict = parse_verdict(raw)
    assert verdict.correct is CorrectAnswer.NO
    assert verdict.patch == IMPUTER_PATCH
    assert verdict.explanation == "column dropped"


def test_parse_verdict_keeps_raw_reply_untouched():
    raw = 'Let me think.\n\n```json\n{"correct": "yes"}\n```\nDone.'
    verdict = parse_verdict(raw)
    assert verdict.correct is CorrectAnswer.YES
    assert verdict.raw == raw


def test_parse_verdict_skips_prose_braces():
    raw = 'The set {1, 2} is fine. {"correct": "yes"}'
    assert parse_verdict(raw).correct is CorrectAnswer.YES


def test_parse_verdict_case_insensitive_correct():
    assert parse_verdict('{"correct": "YES"}').correct is CorrectAnswer.YES
    raw = json.dumps({"correct": "No", "patch": "@@ -1 +1 @@\n-a\n+b", "explanation": "x"})
    assert parse_verdict(raw).correct is CorrectAnswer.NO


def test_parse_verdict_ignores_stray_patch_on_yes():
    verdict = parse_verdict('{"correct": "yes", "patch": "@@ -1 +1 @@"}')
    assert verdict.patch is None


@pytest.mark.parametrize(
    "raw,reason",
    [
        ("no braces at all", "NO_JSON_OBJECT"),
        ('{"correct": "maybe"}', "INVALID_CORRECT"),
        ('{"verdict": "yes"}', "INVALID_CORRECT"),
        ('{"correct": "no", "explanation": "x"}', "MISSING_PATCH"),
        ('{"correct": "no", "patch": "  "}', "MISSING_PATCH"),
        ('{"correct": "no", "patch": "@@ -1 +1 @@\\n-a\\n+b"}', "MISSING_EXPLANATION"),
    ],
)
def test_parse_verdict_reason_codes(raw, reason):
    with pytest.raises(MalformedVerdict) as err:
        parse_verdict(raw)
    assert err.value.reason == reason
    assert err.value.code is ErrorCode.MALFORMED_VERDICT


def test_extract_verdict_json_returns_exact_substring():
    raw = 'prose before {"correct": "yes",  "note": [1, 2]} prose after'
    assert extract_verdict_json(raw) == '{"correct": "yes",  "note": [1, 2]}'
    with pytest.raises(MalformedVerdict):
        extract_verdict_json("nothing here")


# --- patch application -------------------------------------------------------


def test_imputer_patch_produces_fixed_snippet():
    misuse = (SMOKE / "snippets" / "imputer_misuse.py").read_text(encoding="utf-8")
    fixed = (SMOKE / "snippets" / "imputer_fixed.py").read_text(encoding="utf-8")
    assert apply_patch(misuse, IMPUTER_PATCH) == fixed


def test_patch_applies_despite_markdown_fences():
    fenced = "```diff\n" + IMPUTER_PATCH + "\n```\n"
    misuse = (SMOKE / "snippets" / "imputer_misuse.py").read_text(encoding="utf-8")
    fixed = (SMOKE / "snippets" / "imputer_fixed.py").read_text(encoding="utf-8")
    assert apply_patch(misuse, fenced) == fixed


def test_patch_with_file_headers_and_context():
    original = "a\nb\nc\n"
    diff = "--- a/f.py\n+++ b/f.py\n@@ -1,3 +1,3 @@\n a\n-b\n+B\n c\n"
    assert apply_patch(original, diff) == "a\nB\nc\n"


def test_patch_within_fuzz_window_applies():
    # The hunk claims line 1 but the content sits at line 3: offset 2 <= fuzz.
    original = "x\ny\na\nb\n"
    diff = "@@ -1,2 +1,2 @@\n a\n-b\n+B"
    assert apply_patch(original, diff, fuzz=3) == "x\ny\na\nB\n"
    with pytest.raises(PatchError) as err:
        apply_patch(original, diff, fuzz=1)
    assert err.value.code is ErrorCode.HUNK_MISMATCH


def test_patch_mismatch_is_all_or_nothing():
    original = "a\nb\n"
    diff = "@@ -1,1 +1,1 @@\n-a\n+A\n@@ -9,1 +9,1 @@\n-zzz\n+qqq"
    with pytest.raises(PatchError) as err:
        apply_patch(original, diff)
    assert err.value.code is ErrorCode.HUNK_MISMATCH
    assert "hunk 2" in str(err.value)


@pytest.mark.parametrize(
    "diff",
    ["", "not a diff at all", "@@ -1,1 +1,1 @@\n", "@@ -1 +1 @@\n*bogus tag"],
)
def test_diff_syntax_errors(diff):
    with pytest.raises(PatchError) as err:
        apply_patch("a\n", diff)
    assert err.value.code is ErrorCode.DIFF_SYNTAX


def test_pure_insertion_and_deletion():
    original = "a\nc\n"
    insertion = "@@ -1,0 +2,1 @@\n+b"
    assert apply_patch(original, insertion) == "a\nb\nc\n"
    deletion = "@@ -2,1 +1,0 @@\n-c"
    assert apply_patch(original, deletion) == "a\n"


def test_missing_trailing_newline_marker():
    original = "a\nb"
    diff = "@@ -2,1 +2,1 @@\n-b\n+B\n\\ No newline at end of file"
    patched = apply_patch(original, diff)
    assert patched == "a\nB"


def test_crlf_round_trip():
    original = "a\r\nb\r\n"
    diff = "@@ -1,1 +1,1 @@\n-a\n+A"
    assert apply_patch(original, diff) == "A\r\nb\r\n"


def random_text(rng, min_lines=3, max_lines=14):
    alphabet = ["alpha", "beta", "gamma", "delta", "x = 1", "print(x)", "", "  indented"]
    count = rng.randrange(min_lines, max_lines)
    return "\n".join(rng.choice(alphabet) + str(rng.randrange(100)) for _ in range(count)) + "\n"


def mutate(rng, text):
    lines = text.splitlines()
    edited = list(lines)
    for _ in range(rng.randrange(1, 4)):
        op = rng.choice(("replace", "insert", "delete"))
        if op == "replace" and edited:
            edited[rng.randrange(len(edited))] = f"changed{rng.randrange(1000)}"
        elif op == "insert":
            edited.insert(rng.randrange(len(edited) + 1), f"added{rng.randrange(1000)}")
        elif op == "delete" and len(edited) > 1:
            edited.pop(rng.randrange(len(edited)))
    return "\n".join(edited) + "\n"


def test_round_trip_property_100_cases():
    # For generated (original, modified) pairs: applying the forward diff
    # reproduces modified, and applying its reverse restores original.
    rng = random.Random(90125)
    for case in range(100):
        original = random_text(rng)
        modified = mutate(rng, original)
        diff = "".join(
            difflib.unified_diff(
                original.splitlines(keepends=True),
                modified.splitlines(keepends=True),
                fromfile="a",
                tofile="b",
            )
        )
        if not diff:
            continue  # mutation landed on an identical text; nothing to check
        assert apply_patch(original, diff) == modified, f"case {case} forward"
        assert apply_patch(modified, reverse_patch(diff)) == original, f"case {case} reverse"


def test_reverse_patch_is_an_involution():
    rng = random.Random(1177)
    for _ in range(25):
        original = random_text(rng)
        modified = mutate(rng, original)
        diff = "".join(
            difflib.unified_diff(
                original.splitlines(keepends=True),
                modified.splitlines(keepends=True),
                fromfile="a/snippet.py",
                tofile="b/snippet.py",
            )
        )
        if diff:
            assert reverse_patch(reverse_patch(diff)) == diff
