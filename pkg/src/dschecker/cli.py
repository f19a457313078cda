"""Command-line entry point: check / fix / agent / probe / eval.

Exit codes: 0 = no misuse, 10 = misuse flagged, 20-29 = errors (one code per
error family; see errors.EXIT_CODES). Replay runs (--replay / exec_replay)
perform no network or interpreter work at all.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .agent import AgentConfig, call_summary, run_agent
from .docs import load_index, lookup_api
from .errors import (
    EXIT_MISUSE,
    EXIT_OK,
    EXIT_TIMEOUT,
    EXIT_USAGE,
    DatasetError,
    DSCheckerError,
    ErrorCode,
    VerdictError,
    exit_code_for,
)
from .evaluation import (
    DEFAULT_RESAMPLES,
    DEFAULT_SAMPLE_SIZE,
    EvalConfig,
    evaluate,
    load_adjudications,
    report_to_json,
    report_to_table,
)
from .execution import (
    DEFAULT_TIMEOUT_MS,
    FixClass,
    LiveEngine,
    RecordingEngine,
    ReplayEngine,
    SnippetRunner,
    classify_fix,
)
from .gateway import (
    ChatMessage,
    Gateway,
    HttpProvider,
    RecordingProvider,
    ReplayProvider,
    Role,
)
from .model import (
    CorrectAnswer,
    Expectation,
    GenerationParams,
    GroundTruth,
    ProbeTarget,
    PromptVariant,
    SnippetRecord,
    load_dataset,
)
from .patching import apply_patch, extract_verdict_json, parse_verdict
from .prompts import load_exemplars, render, render_data_section

_VARIANTS = {
    "base": PromptVariant.BASE,
    "data": PromptVariant.DATA,
    "dir": PromptVariant.DIR,
    "full": PromptVariant.FULL,
    "fewshot": PromptVariant.FEWSHOT,
}
_DATA_VARIANTS = (PromptVariant.DATA, PromptVariant.FULL, PromptVariant.FEWSHOT)


class _Parser(argparse.ArgumentParser):
    """argparse's default error exit is 2; keep every error in the 2x band."""

    def error(self, message):  # noqa: D102  (argparse override)
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _usage(message: str) -> DSCheckerError:
    return DSCheckerError(ErrorCode.USAGE, message)


# ---------------------------------------------------------------------------
# Shared wiring


def _env(name: str) -> Optional[str]:
    value = os.environ.get(name)
    return value if value else None


def _params(args) -> GenerationParams:
    model = getattr(args, "model", None) or _env("DSCHECKER_MODEL") or "unspecified"
    return GenerationParams(
        model_name=model,
        temperature=getattr(args, "temperature", 0.0),
        max_output_tokens=getattr(args, "max_output_tokens", 1024),
    )


def _gateway(args) -> Gateway:
    replay = getattr(args, "replay", None)
    provider_name = getattr(args, "provider", None)
    if replay:
        return Gateway(ReplayProvider(replay))
    if provider_name == "replay":
        raise _usage("--provider replay needs --replay PATH")
    base = getattr(args, "api_base", None) or _env("DSCHECKER_API_BASE")
    key = _env("DSCHECKER_API_KEY")
    if not base:
        raise _usage(
            "no model provider: pass --replay PATH, or set DSCHECKER_API_BASE "
            "(and DSCHECKER_API_KEY) for live HTTP"
        )
    provider = HttpProvider(base, key or "")
    record = getattr(args, "record", None)
    if record:
        provider = RecordingProvider(provider, record)
    return Gateway(provider)


def _interpreter(args) -> str:
    return (
        getattr(args, "interpreter", None)
        or _env("DSCHECKER_INTERPRETER")
        or sys.executable
    )


def _runner(args) -> SnippetRunner:
    exec_replay = getattr(args, "exec_replay", None)
    if exec_replay:
        engine = ReplayEngine(exec_replay)
    else:
        shim = getattr(args, "shim", None) or _env("DSCHECKER_SHIM")
        engine = LiveEngine(_interpreter(args), shim_path=shim)
        exec_record = getattr(args, "exec_record", None)
        if exec_record:
            engine = RecordingEngine(engine, exec_record)
    return SnippetRunner(engine, default_timeout_ms=args.timeout)


def _parse_probe_flag(spec: str) -> ProbeTarget:
    name, sep, line = spec.rpartition("@")
    if not sep or not name:
        raise _usage(f"--probe needs VAR@LINE, got '{spec}'")
    try:
        return ProbeTarget(variable_name=name, line_number=int(line))
    except ValueError:
        raise _usage(f"--probe line must be an integer, got '{line}'") from None


def _adhoc_record(args, probes: Sequence[ProbeTarget]) -> SnippetRecord:
    snippet_path = Path(args.snippet).resolve()
    if not snippet_path.is_file():
        raise DatasetError(ErrorCode.MISSING_FILE, f"snippet not found: {args.snippet}")
    data_files = []
    for entry in getattr(args, "data_file", None) or []:
        path = Path(entry).resolve()
        if not path.is_file():
            raise DatasetError(ErrorCode.MISSING_FILE, f"data file not found: {entry}")
        data_files.append(path)
    # Ground truth is unknowable for an ad-hoc snippet; CORRECT is the
    # blank-slate placeholder (no description, no expectation) and is never
    # consulted by the check/fix/agent flows.
    return SnippetRecord(
        id=snippet_path.stem,
        library=getattr(args, "library", None) or "",
        snippet_path=snippet_path,
        data_files=tuple(data_files),
        target_api=getattr(args, "api", None) or "",
        directives=(),
        probe_targets=tuple(probes),
        data_dependent=False,
        ground_truth=GroundTruth.CORRECT,
        misuse_description="",
        expectation=Expectation(),
    )


def _load_record(args) -> SnippetRecord:
    record_id = getattr(args, "dataset_record", None)
    if record_id:
        if not getattr(args, "dataset", None):
            raise _usage("--dataset-record needs --dataset MANIFEST")
        dataset = load_dataset(args.dataset)
        for record in dataset:
            if record.id == record_id:
                return record
        raise DatasetError(
            ErrorCode.NOT_FOUND, f"record '{record_id}' not in {args.dataset}"
        )
    if getattr(args, "snippet", None):
        if not getattr(args, "library", None):
            raise _usage("--snippet needs --library")
        probes = [_parse_probe_flag(p) for p in (getattr(args, "probe", None) or [])]
        return _adhoc_record(args, probes)
    raise _usage("pass --snippet FILE --library NAME, or --dataset/--dataset-record")


def _augment_directives(record: SnippetRecord, args) -> SnippetRecord:
    """When the record carries no directives but a docs store is given,
    pull them from the index entry for the record's target API."""
    docs = getattr(args, "docs", None)
    if record.directives or not docs or not record.target_api:
        return record
    entry = lookup_api(load_index(docs), record.target_api)
    return replace(record, directives=entry.directives)


def _obtain_verdict(args, record: SnippetRecord):
    variant = _VARIANTS[args.prompt]
    exemplars = ()
    if variant is PromptVariant.FEWSHOT:
        exemplars = load_exemplars(getattr(args, "exemplars", None))
    if variant in (PromptVariant.DIR, PromptVariant.FULL, PromptVariant.FEWSHOT):
        record = _augment_directives(record, args)
    data_infos = ()
    if variant in _DATA_VARIANTS and record.probe_targets:
        data_infos = _runner(args).collect_data_info(record, timeout_ms=args.timeout)
    bundle = render(variant, record, data_infos=data_infos, exemplars=exemplars)
    conversation = [
        ChatMessage(role=Role.SYSTEM, content=bundle.system_text),
        ChatMessage(role=Role.USER, content=bundle.user_text),
    ]
    turn = _gateway(args).complete(conversation, (), _params(args))
    if turn.final_text is None:
        raise VerdictError(
            ErrorCode.MALFORMED_VERDICT, "model returned tool calls in prompt mode"
        )
    return parse_verdict(turn.final_text), record


def _print_verdict(verdict, out: Optional[str]) -> None:
    verdict_json = extract_verdict_json(verdict.raw)
    if out:
        Path(out).write_text(verdict_json + "\n", encoding="utf-8")
    print(verdict_json)
    if verdict.correct is CorrectAnswer.NO:
        print(f"summary: misuse flagged — {verdict.explanation}")
        patch_lines = len((verdict.patch or "").splitlines())
        print(f"patch: {patch_lines} line(s) of unified diff")
    else:
        print("summary: no misuse found")


# ---------------------------------------------------------------------------
# Commands


def _cmd_check(args) -> int:
    verdict, _ = _obtain_verdict(args, _load_record(args))
    _print_verdict(verdict, args.out)
    return EXIT_MISUSE if verdict.correct is CorrectAnswer.NO else EXIT_OK


def _cmd_fix(args) -> int:
    record = _load_record(args)
    verdict, record = _obtain_verdict(args, record)
    _print_verdict(verdict, None)
    if verdict.correct is CorrectAnswer.YES:
        print("nothing to fix")
        return EXIT_OK
    snippet = record.read_snippet()
    patched = apply_patch(snippet, verdict.patch or "", fuzz=args.patch_fuzz)
    if args.apply:
        record.snippet_path.write_text(patched, encoding="utf-8")
        print(f"patched in place: {record.snippet_path}")
    elif args.out:
        Path(args.out).write_text(patched, encoding="utf-8")
        print(f"patched snippet written to {args.out}")
    else:
        print("--- patched snippet ---")
        sys.stdout.write(patched)
    if args.validate:
        runner = _runner(args)
        original = runner.run_snippet(snippet, record.data_files, args.timeout)
        patched_run = runner.run_snippet(patched, record.data_files, args.timeout)

        def checker(script_value: str, outcome_) -> bool:
            return runner.run_checker(Path(script_value), outcome_.stdout, args.timeout)

        outcome = classify_fix(
            original, True, patched_run, record.expectation, run_checker=checker
        )
        print(f"fix: {outcome.classification.value} ({outcome.evidence})")
        if outcome.classification is FixClass.TIMEOUT:
            return EXIT_TIMEOUT
    return EXIT_OK


def _cmd_agent(args) -> int:
    record = _load_record(args)
    if not args.docs:
        raise _usage("agent mode needs --docs DIR")
    index = load_index(args.docs)
    config = AgentConfig(max_iterations=args.max_iters, tool_timeout_ms=args.timeout)
    runner = _runner(args)
    verdict, log = run_agent(
        record, index, _gateway(args), config, runner=runner, params=_params(args)
    )
    print(call_summary(log))
    _print_verdict(verdict, args.out)
    return EXIT_MISUSE if verdict.correct is CorrectAnswer.NO else EXIT_OK


def _cmd_probe(args) -> int:
    if len(args.var) != len(args.line):
        raise _usage("--var and --line must be given the same number of times")
    if not args.var:
        raise _usage("pass at least one --var NAME --line N pair")
    targets = [
        ProbeTarget(variable_name=v, line_number=n)
        for v, n in zip(args.var, args.line)
    ]
    record = _adhoc_record(args, targets)
    runner = _runner(args)
    infos = runner.collect_data_info(record, targets, timeout_ms=args.timeout)
    print("\n\n".join(render_data_section(info) for info in infos))
    return EXIT_OK


def _resolve(base: Path, value: Optional[str]) -> Optional[Path]:
    return (base / value).resolve() if value else None


def _config_from_entry(entry: dict, base: Path, args) -> EvalConfig:
    if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
        raise _usage("each config entry must be an object with a 'name'")
    name = entry["name"]
    mode = entry.get("mode", "prompt")
    if mode not in ("prompt", "agent"):
        raise _usage(f"config '{name}': mode must be 'prompt' or 'agent'")
    variant_name = entry.get("variant", "full")
    if variant_name not in _VARIANTS:
        raise _usage(f"config '{name}': unknown variant '{variant_name}'")
    variant = _VARIANTS[variant_name]

    replay = _resolve(base, entry.get("replay"))
    if replay:
        provider = ReplayProvider(replay)
    else:
        api_base = _env("DSCHECKER_API_BASE")
        if not api_base:
            raise _usage(f"config '{name}': no 'replay' transcript and no DSCHECKER_API_BASE")
        provider = HttpProvider(api_base, _env("DSCHECKER_API_KEY") or "")
        record_path = _resolve(base, entry.get("record"))
        if record_path:
            provider = RecordingProvider(provider, record_path)

    timeout_ms = int(entry.get("timeout_ms", args.timeout))
    exec_replay = _resolve(base, entry.get("exec_replay"))
    if exec_replay:
        engine = ReplayEngine(exec_replay)
    else:
        engine = LiveEngine(
            _interpreter(args), shim_path=getattr(args, "shim", None) or _env("DSCHECKER_SHIM")
        )
        exec_record = _resolve(base, entry.get("exec_record"))
        if exec_record:
            engine = RecordingEngine(engine, exec_record)
    runner = SnippetRunner(engine, default_timeout_ms=timeout_ms)

    index = None
    docs = entry.get("docs")
    if docs:
        index = load_index(_resolve(base, docs))
    elif mode == "agent":
        raise _usage(f"config '{name}': agent mode needs 'docs'")

    exemplars = ()
    if variant is PromptVariant.FEWSHOT and mode == "prompt":
        exemplars = load_exemplars(_resolve(base, entry.get("exemplars")))

    params = GenerationParams(
        model_name=entry.get("model") or _env("DSCHECKER_MODEL") or "unspecified",
        temperature=float(entry.get("temperature", 0.0)),
        max_output_tokens=int(entry.get("max_output_tokens", 1024)),
    )
    return EvalConfig(
        name=name,
        gateway=Gateway(provider),
        params=params,
        mode=mode,
        variant=variant,
        runner=runner,
        index=index,
        agent=AgentConfig(
            max_iterations=int(entry.get("max_iterations", 8)),
            tool_timeout_ms=timeout_ms,
        ),
        exemplars=exemplars,
        patch_fuzz=int(entry.get("patch_fuzz", args.patch_fuzz)),
        timeout_ms=timeout_ms,
        descriptor=entry,
    )


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    configs_path = Path(args.configs)
    try:
        raw = json.loads(configs_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(
            ErrorCode.MISSING_FILE, f"configs file not found: {args.configs}"
        ) from None
    except json.JSONDecodeError as exc:
        raise _usage(f"configs file: {exc.msg}") from None
    entries = raw.get("configs") if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not entries:
        raise _usage("configs file must hold a non-empty list under 'configs'")
    base = configs_path.resolve().parent
    configs = [_config_from_entry(e, base, args) for e in entries]
    adjudications = (
        load_adjudications(args.adjudications) if args.adjudications else None
    )
    report = evaluate(
        dataset,
        configs,
        adjudications=adjudications,
        seed=args.seed,
        sample_size=args.sample_size,
        resamples=args.resamples,
        with_replacement=not args.without_replacement,
        jobs=args.jobs,
    )
    text = report_to_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(report_to_table(report), end="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_model_flags(sub) -> None:
    sub.add_argument("--model", help="model name (default: $DSCHECKER_MODEL)")
    sub.add_argument(
        "--provider", choices=["http", "replay"], help="force a provider kind"
    )
    sub.add_argument("--api-base", help="HTTP API base URL (default: $DSCHECKER_API_BASE)")
    sub.add_argument("--replay", help="replay model turns from this transcript")
    sub.add_argument("--record", help="record model turns to this transcript")
    sub.add_argument("--temperature", type=float, default=0.0)
    sub.add_argument("--max-output-tokens", type=int, default=1024)


def _add_exec_flags(sub) -> None:
    sub.add_argument("--interpreter", help="subject interpreter (default: $DSCHECKER_INTERPRETER)")
    sub.add_argument("--shim", help="probe shim path (default: $DSCHECKER_SHIM)")
    sub.add_argument("--exec-replay", help="replay executions from this transcript")
    sub.add_argument("--exec-record", help="record executions to this transcript")
    sub.add_argument(
        "--timeout", type=int, default=DEFAULT_TIMEOUT_MS, help="per-run timeout in ms"
    )


def _add_snippet_flags(sub) -> None:
    sub.add_argument("--snippet", help="path to a code snippet")
    sub.add_argument("--library", help="library the snippet exercises")
    sub.add_argument("--api", help="fully qualified API under scrutiny")
    sub.add_argument("--dataset", help="dataset manifest (JSONL)")
    sub.add_argument("--dataset-record", help="record id within --dataset")
    sub.add_argument(
        "--data-file", action="append", help="input file the snippet reads (repeatable)"
    )
    sub.add_argument(
        "--probe", action="append", help="runtime probe as VAR@LINE (repeatable)"
    )
    sub.add_argument("--docs", help="documentation store directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dschecker",
        description="Detect and repair data-science API misuses with an LLM.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("check", help="classify one snippet")
    _add_snippet_flags(check)
    check.add_argument(
        "--prompt", choices=sorted(_VARIANTS), default="full", help="prompt variant"
    )
    check.add_argument("--exemplars", help="few-shot exemplar JSON (fewshot variant)")
    _add_model_flags(check)
    _add_exec_flags(check)
    check.add_argument("--out", help="also write the verdict JSON here")
    check.set_defaults(func=_cmd_check)

    fix = commands.add_parser("fix", help="classify, then apply the suggested patch")
    _add_snippet_flags(fix)
    fix.add_argument(
        "--prompt", choices=sorted(_VARIANTS), default="full", help="prompt variant"
    )
    fix.add_argument("--exemplars", help="few-shot exemplar JSON (fewshot variant)")
    _add_model_flags(fix)
    _add_exec_flags(fix)
    fix.add_argument("--out", help="write the patched snippet here")
    fix.add_argument("--apply", action="store_true", help="overwrite the snippet in place")
    fix.add_argument(
        "--validate", action="store_true", help="run original and patched snippets"
    )
    fix.add_argument("--patch-fuzz", type=int, default=3, help="hunk placement slack")
    fix.set_defaults(func=_cmd_fix)

    agent = commands.add_parser("agent", help="tool-calling detection loop")
    _add_snippet_flags(agent)
    agent.add_argument("--max-iters", type=int, default=8, help="tool-round budget")
    _add_model_flags(agent)
    _add_exec_flags(agent)
    agent.add_argument("--out", help="also write the verdict JSON here")
    agent.set_defaults(func=_cmd_agent)

    probe = commands.add_parser("probe", help="run the shim and print data blocks")
    probe.add_argument("--snippet", required=True)
    probe.add_argument("--var", action="append", default=[], help="variable name")
    probe.add_argument("--line", action="append", type=int, default=[], help="1-based line")
    probe.add_argument("--data-file", action="append")
    _add_exec_flags(probe)
    probe.set_defaults(func=_cmd_probe, library=None, api=None)

    evalp = commands.add_parser("eval", help="evaluate configurations over a dataset")
    evalp.add_argument("--dataset", required=True, help="dataset manifest (JSONL)")
    evalp.add_argument("--configs", required=True, help="configurations JSON file")
    evalp.add_argument("--adjudications", help="record-id → bool JSON (STRICT mode)")
    evalp.add_argument("--seed", type=int, default=7)
    evalp.add_argument("--sample-size", type=int, default=DEFAULT_SAMPLE_SIZE)
    evalp.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    evalp.add_argument(
        "--without-replacement", action="store_true", help="draw unique records"
    )
    evalp.add_argument("--jobs", type=int, default=1, help="parallel records")
    evalp.add_argument("--out", help="write the report JSON here (prints a table)")
    evalp.add_argument("--patch-fuzz", type=int, default=3)
    _add_exec_flags(evalp)
    evalp.set_defaults(func=_cmd_eval)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DSCheckerError as exc:
        print(f"dschecker: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
