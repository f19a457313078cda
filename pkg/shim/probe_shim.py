#!/usr/bin/env python3
"""Run a snippet with runtime variable probes injected at chosen lines.

Usage:
    <interpreter> probe_shim.py <snippet_path> <probes-spec-path>

The probes-spec file is JSON:

    {"snippet_path": "snippet.py",
     "probes": [{"variable_name": "df", "line_number": 4}],
     "workspace": "."}

The shim parses the snippet's AST once, inserts a reporting call immediately
after the statement that ends on each probe's line (or after the innermost
enclosing statement when the line sits inside a multi-line statement), and
executes the result with the workspace as working directory. Each probe
prints exactly one line to stdout:

    @@PROBE {"v": 1, "variable": ..., "line": ..., "kind": ...,
             "type_name": ..., "detail": ...}

Kinds are duck-typed so no data-science library is ever imported here:
an object with `columns` and `head` is a FRAME (column names/dtypes/non-null
counts, row count, up to 3 whitespace-normalized sample rows); `shape` plus
`dtype` is an NDARRAY; a built-in list is a SEQUENCE with its length;
anything else is OTHER with just its type name. Probes inside loops or
functions report only their first firing.

Exit codes: 0 = clean run, every probe fired; 2 = instrumentation failure
(syntax error, line out of range, unknown or unbound variable, probe never
fired); 3 = the snippet itself raised (traceback on stderr, probes already
emitted stay valid). Program stdout/stderr pass through untouched; a print
that ends without a newline directly before a probe can glue itself to the
record line, which the caller will then not recognize — snippets in practice
print whole lines.

Only the standard library is used; the snippet's own imports are its own.
"""
import ast
import json
import os
import sys
import traceback

PROTOCOL_VERSION = 1
PREFIX = "@@PROBE "


class ProbeFailure(Exception):
    """Raised by the emitter when a probed name is unbound at its line."""


def type_name_of(value):
    t = type(value)
    module = getattr(t, "__module__", "")
    if module in ("", "builtins"):
        return t.__qualname__
    return module + "." + t.__qualname__


def looks_like_frame(value):
    return hasattr(value, "columns") and callable(getattr(value, "head", None))


def looks_like_array(value):
    return hasattr(value, "shape") and hasattr(value, "dtype")


def frame_detail(value):
    columns = []
    for i, (name, dtype) in enumerate(zip(value.columns, value.dtypes)):
        columns.append(
            {
                "name": str(name),
                "dtype": str(dtype),
                "non_null": int(value.iloc[:, i].count()),
            }
        )
    head = value.head(3)
    text = head.to_string() if hasattr(head, "to_string") else str(head)
    rows = [" ".join(line.split()) for line in text.splitlines()]
    return {
        "columns": columns,
        "row_count": int(len(value)),
        "sample_rows": rows[1:4],  # drop the header line
    }


def describe(value):
    """(kind, detail) for one probed value; degrades to OTHER on surprises."""
    if looks_like_frame(value):
        try:
            return "FRAME", frame_detail(value)
        except Exception:
            return "OTHER", None
    if looks_like_array(value):
        try:
            shape = [int(n) for n in value.shape]
            return "NDARRAY", {"shape": shape, "dtype": str(value.dtype)}
        except Exception:
            return "OTHER", None
    if type(value) is list:
        return "SEQUENCE", {"length": len(value)}
    return "OTHER", None


def make_emitter(fired):
    def __dsprobe__(name, line):
        key = (name, line)
        if key in fired:
            return
        frame = sys._getframe(1)
        if name in frame.f_locals:
            value = frame.f_locals[name]
        elif name in frame.f_globals:
            value = frame.f_globals[name]
        else:
            raise ProbeFailure(
                "variable '%s' is not bound after line %d" % (name, line)
            )
        kind, detail = describe(value)
        record = {
            "v": PROTOCOL_VERSION,
            "variable": name,
            "line": line,
            "kind": kind,
            "type_name": type_name_of(value),
            "detail": detail,
        }
        sys.stdout.write(PREFIX + json.dumps(record, separators=(",", ":")) + "\n")
        sys.stdout.flush()
        fired.add(key)

    return __dsprobe__


def bound_names(tree):
    """Every identifier the snippet could bind or reference, for a cheap
    pre-check that catches misspelled probe variables before running."""
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            names.add(node.id)
        elif isinstance(node, ast.alias):
            names.add((node.asname or node.name).split(".")[0])
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            names.add(node.name)
        elif isinstance(node, ast.arg):
            names.add(node.arg)
        elif isinstance(node, ast.ExceptHandler) and node.name:
            names.add(node.name)
    return names


def statement_registry(tree):
    """All statements with their owning body list and index, in pre-order
    (ancestors before descendants), so the last match is the innermost."""
    found = []

    def visit(node):
        for _, value in ast.iter_fields(node):
            if isinstance(value, list):
                for index, child in enumerate(value):
                    if isinstance(child, ast.stmt):
                        found.append((child, value, index))
                    if isinstance(child, ast.AST):
                        visit(child)
            elif isinstance(value, ast.AST):
                visit(value)

    visit(tree)
    return found


def find_host(statements, line):
    """The statement a probe for this line attaches after, or None."""
    host = None
    for entry in statements:
        if entry[0].end_lineno == line:
            host = entry
    if host is not None:
        return host
    for entry in statements:
        if entry[0].lineno <= line <= entry[0].end_lineno:
            host = entry
    return host


def probe_call(name, line, host_stmt):
    call = ast.Expr(
        value=ast.Call(
            func=ast.Name(id="__dsprobe__", ctx=ast.Load()),
            args=[ast.Constant(value=name), ast.Constant(value=line)],
            keywords=[],
        )
    )
    return ast.copy_location(call, host_stmt)


def fail(message):
    sys.stdout.flush()
    sys.stderr.write("probe_shim: %s\n" % message)
    return 2


def instrument(tree, probes):
    """Insert one emitter call per probe; returns an error message or None."""
    statements = statement_registry(tree)
    source_names = bound_names(tree)
    pending = {}
    for order, (name, line) in enumerate(probes):
        if name not in source_names:
            return "variable '%s' does not appear in the snippet" % name
        host = find_host(statements, line)
        if host is None:
            return "line %d is not inside any statement" % line
        stmt, body, index = host
        slot = pending.setdefault(id(body), (body, {}))
        slot[1].setdefault(index, []).append((order, probe_call(name, line, stmt)))
    for body, by_index in pending.values():
        for index in sorted(by_index, reverse=True):
            nodes = [node for _, node in sorted(by_index[index])]
            body[index + 1 : index + 1] = nodes
    ast.fix_missing_locations(tree)
    return None


def main(argv):
    if len(argv) != 3:
        return fail("usage: probe_shim.py <snippet_path> <probes-spec-path>")
    snippet_arg, spec_arg = argv[1], argv[2]
    try:
        with open(spec_arg, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        probes = [
            (p["variable_name"], int(p["line_number"])) for p in spec.get("probes", [])
        ]
        workspace = spec.get("workspace") or "."
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return fail("probes-spec unreadable: %s" % exc)
    try:
        os.chdir(workspace)
    except OSError as exc:
        return fail("cannot enter workspace: %s" % exc)
    try:
        with open(snippet_arg, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        return fail("cannot read snippet: %s" % exc)
    try:
        tree = ast.parse(source, filename=snippet_arg)
    except SyntaxError as exc:
        return fail("snippet does not parse: %s" % exc)

    line_count = len(source.splitlines())
    for name, line in probes:
        if not 1 <= line <= line_count:
            return fail(
                "line %d is out of range (snippet has %d lines)" % (line, line_count)
            )
    message = instrument(tree, probes)
    if message is not None:
        return fail(message)

    fired = set()
    table = {
        "__name__": "__main__",
        "__file__": snippet_arg,
        "__builtins__": __builtins__,
        "__dsprobe__": make_emitter(fired),
    }
    try:
        exec(compile(tree, snippet_arg, "exec"), table)
    except ProbeFailure as exc:
        return fail(str(exc))
    except SystemExit as exc:
        if exc.code not in (None, 0):
            sys.stdout.flush()
            sys.stderr.write("SystemExit: %s\n" % exc.code)
            return 3
    except BaseException:
        sys.stdout.flush()
        etype, value, tb = sys.exc_info()
        # the first frame is this module's exec(); the snippet starts below it
        traceback.print_exception(etype, value, tb.tb_next)
        return 3
    unfired = [key for key in probes if key not in fired]
    if unfired:
        return fail(
            "probes never fired: "
            + ", ".join("(%s@%d)" % (name, line) for name, line in unfired)
        )
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
