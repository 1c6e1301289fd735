"""Reader and writer for the line-oriented ``.pbn`` text format.

::

    # comments run to end of line
    pbn 1
    nodes 3
    perturbation 0.01
    node 0 a
    func 0.6 : 1,2 : 0110
    func 0.4 : - : 1
    node 1
    ...
    end

``func <prob> : <parents> : <bits>`` lists parents comma-separated (``-`` for
none) and the truth table as a 0/1 string whose ``i``-th character is the
output for the parent assignment ``i``, first parent most significant.
"""

from __future__ import annotations

import io
import re
from pathlib import Path
from typing import TextIO

from .model import ModelError, NodeSpec, PBNModel, PredictorFunction

FORMAT_VERSION = 1
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*$")


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_model(text: str | TextIO) -> PBNModel:
    if not isinstance(text, str):
        text = text.read()
    lines = list(_tokens(text))
    pos = 0

    def expect(keyword: str) -> tuple[int, list[str]]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"unexpected end of input, expected '{keyword}'")
        lineno, line = lines[pos]
        parts = line.split()
        if parts[0] != keyword:
            raise ParseError(f"expected '{keyword}', found '{parts[0]}'", lineno)
        pos += 1
        return lineno, parts[1:]

    lineno, args = expect("pbn")
    if args != [str(FORMAT_VERSION)]:
        raise ParseError(f"unsupported format version {' '.join(args)!r}", lineno)
    lineno, args = expect("nodes")
    n = _parse_int(args, lineno, "node count")
    if n < 1:
        raise ParseError("node count must be positive", lineno)
    lineno, args = expect("perturbation")
    if len(args) != 1:
        raise ParseError("expected one perturbation value", lineno)
    p = _parse_float(args[0], lineno)

    nodes = []
    for i in range(n):
        lineno, args = expect("node")
        if not 1 <= len(args) <= 2:
            raise ParseError("expected 'node <index> [<name>]'", lineno)
        index = _parse_int(args[:1], lineno, "node index")
        if index != i:
            raise ParseError(f"expected node {i}, found node {index}", lineno)
        name = args[1] if len(args) == 2 else None
        if name is not None and not _NAME.match(name):
            raise ParseError(f"invalid node name {name!r}", lineno)
        funcs = []
        while pos < len(lines) and lines[pos][1].split()[0] == "func":
            flineno, line = lines[pos]
            pos += 1
            funcs.append(_parse_func(line[len("func"):], flineno, n))
        try:
            nodes.append(NodeSpec(index, tuple(funcs), name))
        except ModelError as exc:
            raise ParseError(str(exc), lineno) from None
    expect("end")
    if pos != len(lines):
        raise ParseError("content after 'end'", lines[pos][0])
    try:
        return PBNModel(tuple(nodes), p)
    except ModelError as exc:
        raise ParseError(str(exc)) from None


def _parse_int(args: list[str], lineno: int, what: str) -> int:
    if len(args) != 1:
        raise ParseError(f"expected one {what}", lineno)
    try:
        return int(args[0])
    except ValueError:
        raise ParseError(f"invalid {what} {args[0]!r}", lineno) from None


def _parse_float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"invalid number {token!r}", lineno) from None


def _parse_func(body: str, lineno: int, n: int) -> PredictorFunction:
    fields = [f.strip() for f in body.split(":")]
    if len(fields) != 3:
        raise ParseError("expected 'func <prob> : <parents> : <truthbits>'", lineno)
    prob = _parse_float(fields[0], lineno)
    if fields[1] == "-":
        parents: tuple[int, ...] = ()
    else:
        try:
            parents = tuple(int(t) for t in fields[1].replace(" ", "").split(","))
        except ValueError:
            raise ParseError(f"invalid parent list {fields[1]!r}", lineno) from None
    for q in parents:
        if not 0 <= q < n:
            raise ParseError(f"parent index {q} out of range for {n} nodes", lineno)
    bits = fields[2].replace(" ", "")
    if not bits or set(bits) - {"0", "1"}:
        raise ParseError(f"invalid truth table {fields[2]!r}", lineno)
    try:
        return PredictorFunction(parents, tuple(int(b) for b in bits), prob)
    except ModelError as exc:
        raise ParseError(str(exc), lineno) from None


def _num(x: float) -> str:
    return format(x, ".17g")


def serialize_model(model: PBNModel) -> str:
    out = io.StringIO()
    out.write(f"pbn {FORMAT_VERSION}\n")
    out.write(f"nodes {model.n}\n")
    out.write(f"perturbation {_num(model.perturbation_p)}\n")
    for node in model.nodes:
        out.write(f"node {node.index}" + (f" {node.name}" if node.name else "") + "\n")
        for f in node.functions:
            parents = ",".join(map(str, f.parents)) if f.parents else "-"
            bits = "".join(map(str, f.truth_table))
            out.write(f"func {_num(f.selection_prob)} : {parents} : {bits}\n")
    out.write("end\n")
    return out.getvalue()


def load_model(path: str | Path) -> PBNModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: PBNModel, path: str | Path) -> None:
    Path(path).write_text(serialize_model(model), encoding="utf-8")
