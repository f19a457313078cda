"""Local documentation store.

Layout on disk: `root/index.json` describing entries, each pointing at a
vendored text file (`root/<library>/<api>.md`). Directives are curated fields
of the index, never extracted from the body text. The index is immutable
after load; lookups are pure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DocIndexError, ErrorCode
from .model import Directive


@dataclass(frozen=True)
class DocEntry:
    library: str
    api: str
    body: str
    directives: tuple[Directive, ...]


@dataclass(frozen=True)
class DocIndex:
    root: Path
    entries: tuple[DocEntry, ...]

    @property
    def libraries(self) -> frozenset[str]:
        return frozenset(e.library for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def load_index(root: Path | str) -> DocIndex:
    root = Path(root)
    index_path = root / "index.json"
    if not index_path.is_file():
        raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"no index.json under {root}")
    try:
        raw = json.loads(index_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"index.json: {exc.msg}") from None
    if not isinstance(raw, list):
        raise DocIndexError(ErrorCode.INDEX_SYNTAX, "index.json must hold a list of entries")

    entries: list[DocEntry] = []
    seen: set[tuple[str, str]] = set()
    for position, item in enumerate(raw):
        where = f"index entry {position}"
        if not isinstance(item, dict):
            raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"{where}: not an object")
        try:
            library, api, file_rel = item["library"], item["api"], item["file"]
        except KeyError as exc:
            raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"{where}: missing key {exc}") from None
        if not all(isinstance(v, str) for v in (library, api, file_rel)):
            raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"{where}: library/api/file must be strings")
        key = (library, api)
        if key in seen:
            raise DocIndexError(ErrorCode.DUPLICATE_ENTRY, f"{where}: duplicate {key}")
        seen.add(key)
        doc_path = root / file_rel
        if not doc_path.is_file():
            raise DocIndexError(ErrorCode.MISSING_DOC_FILE, f"{where}: no such file '{file_rel}'")
        body = doc_path.read_text(encoding="utf-8")
        if not body.strip():
            raise DocIndexError(ErrorCode.INDEX_SYNTAX, f"{where}: document body is empty")
        directives = []
        for d in item.get("directives", []):
            if not isinstance(d, dict) or not isinstance(d.get("text"), str) or not d["text"]:
                raise DocIndexError(
                    ErrorCode.INDEX_SYNTAX, f"{where}: directive entries need non-empty text"
                )
            directives.append(
                Directive(
                    api=api,
                    text=d["text"],
                    parameter=d.get("parameter"),
                    source_url=d.get("source_url"),
                )
            )
        entries.append(
            DocEntry(library=library, api=api, body=body, directives=tuple(directives))
        )
    return DocIndex(root=root, entries=tuple(entries))


def lookup_api(index: DocIndex, api_name: str) -> DocEntry:
    """Resolve an API name: exact match first, then dotted-suffix match,
    then case-insensitive; two or more suffix candidates is AMBIGUOUS."""
    exact = [e for e in index.entries if e.api == api_name]
    if len(exact) == 1:
        return exact[0]
    if len(exact) > 1:  # same api under two libraries
        raise DocIndexError(
            ErrorCode.AMBIGUOUS,
            f"'{api_name}' is ambiguous: " + ", ".join(_describe(e) for e in exact),
        )

    def suffix_matches(name: str, fold: bool) -> list[DocEntry]:
        probe = name.lower() if fold else name
        found = []
        for entry in index.entries:
            target = entry.api.lower() if fold else entry.api
            if target == probe or target.endswith("." + probe):
                found.append(entry)
        return found

    for fold in (False, True):
        candidates = suffix_matches(api_name, fold)
        if len(candidates) == 1:
            return candidates[0]
        if len(candidates) > 1:
            raise DocIndexError(
                ErrorCode.AMBIGUOUS,
                f"'{api_name}' is ambiguous: " + ", ".join(_describe(e) for e in candidates),
            )
    raise DocIndexError(ErrorCode.NOT_FOUND, f"API '{api_name}' not found in the index")


def _describe(entry: DocEntry) -> str:
    return f"{entry.api} ({entry.library})"
