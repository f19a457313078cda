"""Prompt assembly for the five variants.

All text comes from a versioned template asset (plain text sections with
`$placeholder` tokens); rendering is deterministic, so identical inputs give
byte-identical bundles. A record without directives renders FULL identical to
DATA and DIR identical to BASE — the directive section is simply absent, not
blanked.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from .errors import ErrorCode, PromptError
from .model import (
    ArrayDetail,
    DataInfo,
    Directive,
    FrameDetail,
    PromptVariant,
    SequenceDetail,
    SnippetRecord,
)

_SECTION_RE = re.compile(r"^### ([a-z_]+)$")

_REQUIRED_SECTIONS = (
    "system",
    "system_agent",
    "task",
    "data_header",
    "data_block",
    "directive_header",
    "directive_block",
    "directive_block_param",
    "fewshot_intro",
    "exemplar_header",
    "exemplar_answer",
    "response_format",
)


@dataclass(frozen=True)
class PromptTemplate:
    sections: dict[str, str]

    def section(self, name: str) -> str:
        return self.sections[name]


@dataclass(frozen=True)
class FewShotExemplar:
    """One solved example inlined ahead of the real task."""

    code: str
    library: str
    data_section: str
    directive_section: str
    expected_answer: str


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    variant: PromptVariant
    substitutions: dict[str, tuple[str, ...]] = field(compare=False)


def load_template(path: Optional[Path] = None) -> PromptTemplate:
    """Parse the sectioned template file (default: the packaged asset)."""
    if path is None:
        text = files("dschecker").joinpath("assets/prompt_template.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    sections: dict[str, str] = {}
    name: Optional[str] = None
    buffer: list[str] = []
    for line in text.splitlines():
        match = _SECTION_RE.match(line)
        if match:
            if name is not None:
                sections[name] = "\n".join(buffer).strip("\n")
            name = match.group(1)
            buffer = []
        elif name is not None:
            buffer.append(line)
    if name is not None:
        sections[name] = "\n".join(buffer).strip("\n")
    missing = [s for s in _REQUIRED_SECTIONS if s not in sections]
    if missing:
        raise PromptError(ErrorCode.USAGE, f"template missing sections: {', '.join(missing)}")
    return PromptTemplate(sections=sections)


def load_exemplars(path: Optional[Path] = None) -> tuple[FewShotExemplar, ...]:
    """Load few-shot exemplars; the packaged default holds exactly two,
    one expecting a yes and one expecting a no."""
    if path is None:
        raw = files("dschecker").joinpath("assets/fewshot_exemplars.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    entries = json.loads(raw)
    exemplars = tuple(
        FewShotExemplar(
            code=e["code"],
            library=e["library"],
            data_section=e.get("data_section", ""),
            directive_section=e.get("directive_section", ""),
            expected_answer=e["expected_answer"],
        )
        for e in entries
    )
    if not exemplars:
        raise PromptError(ErrorCode.FEWSHOT_WITHOUT_EXEMPLARS, "exemplar store is empty")
    return exemplars


class _Recorder:
    """Applies template substitutions while logging every value used."""

    def __init__(self) -> None:
        self.applied: dict[str, list[str]] = {}

    def fill(self, template_text: str, **values: str) -> str:
        rendered = Template(template_text).substitute(values)
        for key, value in values.items():
            self.applied.setdefault(key, []).append(value)
        return rendered

    def frozen(self) -> dict[str, tuple[str, ...]]:
        return {k: tuple(v) for k, v in self.applied.items()}


def _detail_text(info: DataInfo) -> str:
    detail = info.detail
    if isinstance(detail, FrameDetail):
        columns = ", ".join(
            f"{c.name} ({c.dtype}, {c.non_null} non-null)" for c in detail.columns
        )
        lines = [f"type: {info.type_name}", f"rows: {detail.row_count}", f"columns: {columns}"]
        if detail.sample_rows:
            lines.append("head(3):")
            lines.extend(detail.sample_rows)
        return "\n".join(lines)
    if isinstance(detail, ArrayDetail):
        shape = "(" + ", ".join(str(s) for s in detail.shape) + ("," if len(detail.shape) == 1 else "") + ")"
        return f"type: {info.type_name}\nshape: {shape}\ndtype: {detail.dtype}"
    if isinstance(detail, SequenceDetail):
        return f"type: {info.type_name}\nlength: {detail.length}"
    return f"type: {info.type_name}"


def render_data_section(info: DataInfo, template: Optional[PromptTemplate] = None) -> str:
    """One deterministic text block describing a probed variable."""
    template = template or load_template()
    return Template(template.section("data_block")).substitute(
        variable=info.target.variable_name,
        linenum=str(info.target.line_number),
        data=_detail_text(info),
    )


def _directive_block(directive: Directive, template: PromptTemplate, rec: _Recorder) -> str:
    if directive.parameter:
        return rec.fill(
            template.section("directive_block_param"),
            parameter=directive.parameter,
            api=directive.api,
            directive=directive.text,
        )
    return rec.fill(
        template.section("directive_block"), api=directive.api, directive=directive.text
    )


def _body_parts(
    variant: PromptVariant,
    library: str,
    code: str,
    directives: Sequence[Directive],
    data_infos: Sequence[DataInfo],
    template: PromptTemplate,
    rec: _Recorder,
) -> list[str]:
    parts = [rec.fill(template.section("task"), lib=library, code=code)]
    wants_data = variant in (PromptVariant.DATA, PromptVariant.FULL, PromptVariant.FEWSHOT)
    wants_dir = variant in (PromptVariant.DIR, PromptVariant.FULL, PromptVariant.FEWSHOT)
    if wants_data and data_infos:
        parts.append(template.section("data_header"))
        ordered = sorted(
            data_infos, key=lambda i: (i.target.line_number, i.target.variable_name)
        )
        for info in ordered:
            parts.append(
                rec.fill(
                    template.section("data_block"),
                    variable=info.target.variable_name,
                    linenum=str(info.target.line_number),
                    data=_detail_text(info),
                )
            )
    if wants_dir and directives:
        parts.append(rec.fill(template.section("directive_header"), lib=library))
        for directive in directives:
            parts.append(_directive_block(directive, template, rec))
    parts.append(template.section("response_format"))
    return parts


def render(
    variant: PromptVariant,
    record: SnippetRecord,
    data_infos: Sequence[DataInfo] = (),
    exemplars: Sequence[FewShotExemplar] = (),
    template: Optional[PromptTemplate] = None,
    agent_mode: bool = False,
) -> PromptBundle:
    """Assemble the prompt for one record.

    Section order: task statement with the code, then runtime data blocks,
    then directive blocks, then the response-format contract. FEWSHOT puts
    the solved exemplars (with their expected answers) ahead of that body.
    """
    template = template or load_template()
    code = record.read_snippet()
    if not code.strip():
        raise PromptError(ErrorCode.EMPTY_SNIPPET, f"snippet '{record.snippet_path}' is empty")
    code = code.rstrip("\n")
    if variant is PromptVariant.FEWSHOT and not exemplars:
        raise PromptError(
            ErrorCode.FEWSHOT_WITHOUT_EXEMPLARS, "FEWSHOT variant requires exemplars"
        )
    rec = _Recorder()
    parts: list[str] = []
    if variant is PromptVariant.FEWSHOT:
        parts.append(template.section("fewshot_intro"))
        for exemplar in exemplars:
            parts.append(template.section("exemplar_header"))
            parts.append(
                rec.fill(template.section("task"), lib=exemplar.library, code=exemplar.code)
            )
            if exemplar.data_section:
                parts.append(template.section("data_header"))
                parts.append(exemplar.data_section)
            if exemplar.directive_section:
                parts.append(rec.fill(template.section("directive_header"), lib=exemplar.library))
                parts.append(exemplar.directive_section)
            parts.append(
                rec.fill(template.section("exemplar_answer"), answer=exemplar.expected_answer)
            )
    parts.extend(
        _body_parts(variant, record.library, code, record.directives, data_infos, template, rec)
    )
    system_key = "system_agent" if agent_mode else "system"
    return PromptBundle(
        system_text=template.section(system_key),
        user_text="\n\n".join(parts) + "\n",
        variant=variant,
        substitutions=rec.frozen(),
    )
