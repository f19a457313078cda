"""Bounded tool-calling detection loop.

The conversation starts from the bare prompt (code + library only); the model
may call get_variable_info / get_api_documentation as often as it wants
within the round budget. Tool failures come back as conversational error text
so the model can recover; only execution timeouts escalate.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .docs import DocIndex, DocIndexError, lookup_api
from .errors import AgentError, ErrorCode, ExecutionError
from .execution import SnippetRunner
from .gateway import (
    TOOL_GET_API_DOCUMENTATION,
    TOOL_GET_VARIABLE_INFO,
    ChatMessage,
    Gateway,
    ModelTurn,
    Role,
    ToolCall,
    ToolDeclaration,
    load_tool_declarations,
)
from .model import GenerationParams, ProbeTarget, PromptVariant, SnippetRecord, Verdict
from .patching import MalformedVerdict, parse_verdict
from .prompts import PromptTemplate, load_template, render, render_data_section

NUDGE_FINAL = "Respond now with the JSON verdict object."


def _nudge_malformed(reason: str) -> str:
    return (
        f"Your previous reply was not a valid verdict object ({reason}). "
        "Respond with only the JSON verdict object."
    )


@dataclass(frozen=True)
class AgentConfig:
    max_iterations: int = 8
    tool_timeout_ms: int = 30_000
    allow_unlimited_calls: bool = True  # a turn with N calls costs 1 round, not N

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class CallRecord:
    tool: str
    arguments: dict
    result_digest: str
    relevant: Optional[bool] = None


def _names_match(requested: str, target: str) -> bool:
    return (
        requested == target
        or target.endswith("." + requested)
        or requested.endswith("." + target)
    )


def _relevant(call: ToolCall, record: SnippetRecord) -> bool:
    if call.name == TOOL_GET_API_DOCUMENTATION:
        return _names_match(str(call.arguments.get("api_name", "")), record.target_api)
    names = {t.variable_name for t in record.probe_targets}
    return str(call.arguments.get("variable_name", "")) in names


def dispatch_tool(
    call: ToolCall,
    record: SnippetRecord,
    index: DocIndex,
    runner: Optional[SnippetRunner] = None,
    template: Optional[PromptTemplate] = None,
    timeout_ms: int = 30_000,
) -> str:
    """Run one validated tool call and return text for the conversation.

    Every failure except a timeout becomes an "error: …" message to the
    model — hallucinated variables and APIs are answered, not crashed on.
    """
    if call.name == TOOL_GET_API_DOCUMENTATION:
        try:
            return lookup_api(index, str(call.arguments["api_name"])).body
        except DocIndexError as exc:
            # exc already reads "API 'x' not found …" / "'x' is ambiguous: …"
            return f"error: {exc.args[0]}"
    variable = str(call.arguments["variable_name"])
    line = int(call.arguments["line_number"])
    snippet = record.read_snippet()
    if variable not in _identifiers(snippet):
        return f"error: variable '{variable}' does not appear in the snippet"
    line_count = len(snippet.splitlines())
    if not 1 <= line <= line_count:
        return f"error: line {line} is outside the snippet ({line_count} lines)"
    if runner is None:
        return "error: no execution engine available for variable inspection"
    target = ProbeTarget(variable_name=variable, line_number=line)
    try:
        infos = runner.collect_data_info(record, [target], timeout_ms=timeout_ms)
    except ExecutionError as exc:
        if exc.code is ErrorCode.TIMEOUT:
            raise
        return f"error: {exc.args[0]}"
    if not infos:
        return f"error: no probe record produced for '{variable}' at line {line}"
    return "\n\n".join(render_data_section(info, template) for info in infos)


def _identifiers(text: str) -> set[str]:
    return set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", text))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _assert_well_formed(conversation: Sequence[ChatMessage]) -> None:
    known: set[str] = set()
    for msg in conversation:
        if msg.role is Role.ASSISTANT:
            known.update(c.id for c in msg.tool_calls)
        elif msg.role is Role.TOOL_RESULT:
            assert msg.tool_call_id in known, "TOOL_RESULT without a matching tool call"


def run_agent(
    record: SnippetRecord,
    index: DocIndex,
    gateway: Gateway,
    config: AgentConfig = AgentConfig(),
    runner: Optional[SnippetRunner] = None,
    params: Optional[GenerationParams] = None,
    template: Optional[PromptTemplate] = None,
    declarations: Optional[Sequence[ToolDeclaration]] = None,
) -> tuple[Verdict, list[CallRecord]]:
    """Drive the loop to a Verdict; errors AGENT_EXHAUSTED past the budget.

    Bound: at most max_iterations+1 model turns. A turn that yields tool
    calls costs one round (or one per call with allow_unlimited_calls=False);
    a malformed final answer also burns a round and is reprompted at most
    once. After the budget, one nudge demands the verdict; a model that still
    calls tools is cut off.
    """
    template = template or load_template()
    params = params or GenerationParams(model_name="unspecified")
    declarations = tuple(declarations or load_tool_declarations())
    bundle = render(PromptVariant.BASE, record, template=template, agent_mode=True)
    conversation: list[ChatMessage] = [
        ChatMessage(role=Role.SYSTEM, content=bundle.system_text),
        ChatMessage(role=Role.USER, content=bundle.user_text),
    ]
    log: list[CallRecord] = []
    rounds = 0
    nudged = False
    reprompted = False

    while True:
        turn: ModelTurn = gateway.complete(conversation, declarations, params)
        if turn.final_text is not None:
            try:
                verdict = parse_verdict(turn.final_text)
            except MalformedVerdict as exc:
                if reprompted or nudged:
                    raise
                reprompted = True
                rounds += 1
                conversation.append(ChatMessage(role=Role.ASSISTANT, content=turn.final_text))
                conversation.append(
                    ChatMessage(role=Role.USER, content=_nudge_malformed(exc.reason))
                )
                if rounds >= config.max_iterations and not nudged:
                    nudged = True  # the reprompt doubles as the last word
                continue
            conversation.append(ChatMessage(role=Role.ASSISTANT, content=turn.final_text))
            _assert_well_formed(conversation)
            return verdict, log
        if nudged:
            raise AgentError(
                ErrorCode.AGENT_EXHAUSTED,
                f"no verdict after {rounds} tool rounds and a final nudge",
            )
        conversation.append(
            ChatMessage(role=Role.ASSISTANT, content="", tool_calls=turn.tool_calls)
        )
        for call in turn.tool_calls:
            result = dispatch_tool(
                call, record, index, runner, template, timeout_ms=config.tool_timeout_ms
            )
            log.append(
                CallRecord(
                    tool=call.name,
                    arguments=dict(call.arguments),
                    result_digest=_digest(result),
                    relevant=_relevant(call, record),
                )
            )
            conversation.append(
                ChatMessage(role=Role.TOOL_RESULT, content=result, tool_call_id=call.id)
            )
        rounds += 1 if config.allow_unlimited_calls else len(turn.tool_calls)
        if rounds >= config.max_iterations:
            conversation.append(ChatMessage(role=Role.USER, content=NUDGE_FINAL))
            nudged = True


def call_summary(log: Sequence[CallRecord]) -> str:
    """Human-readable CallLog summary (pinned by a golden test)."""
    lines = [f"calls: {len(log)} total"]
    for order, name in ((1, TOOL_GET_VARIABLE_INFO), (2, TOOL_GET_API_DOCUMENTATION)):
        selected = [c for c in log if c.tool == name]
        if selected:
            relevant = sum(1 for c in selected if c.relevant)
            lines.append(f"  {name}: {len(selected)} (relevant: {relevant})")
    for i, call in enumerate(log, start=1):
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(call.arguments.items()))
        tag = " [relevant]" if call.relevant else ""
        lines.append(f"  call {i}: {call.tool}({args}) -> {call.result_digest}{tag}")
    return "\n".join(lines)
