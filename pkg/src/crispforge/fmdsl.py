"""Text format for feature models (``.fm``) and configurations (``.cfg``).

Model syntax::

    model Name
    Root {
      and {
        mandatory A
        optional B { alt { x y } }
      }
    }
    constraint Root/B/x requires Root/A

Configuration syntax::

    config name
    select Root
    select Root/A
    set Root/A k = 3

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Iterator

from .errors import CrispError, ModelError
from .feature_model import (
    RESERVED_WORDS,
    Configuration,
    ConstraintKind,
    CrossTreeConstraint,
    Decomposition,
    Feature,
    FeatureModel,
    Optionality,
    Scalar,
)

MAX_DEPTH = 64

_KINDS = {"and": Decomposition.AND, "or": Decomposition.OR, "alt": Decomposition.ALTERNATIVE}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class DslError(CrispError):
    """Any error raised while reading model or configuration text."""

    exit_code = 2

    def __init__(self, code: str, span: SourceSpan, message: str) -> None:
        self.span = span
        super().__init__(code, f"{span}: {message}")


class ParseError(DslError):
    def __init__(self, span: SourceSpan, expected: str, found: str) -> None:
        self.expected = expected
        self.found = found
        super().__init__("PARSE_ERROR", span, f"expected {expected}, found {found}")


class SemanticError(DslError):
    """Well-formed text describing an ill-formed model or configuration."""


# -- lexing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<word>[A-Za-z][A-Za-z0-9_]*(?:/[A-Za-z][A-Za-z0-9_]*)*)
  | (?P<number>-?[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[{}=])
    """,
    re.VERBOSE | re.ASCII,
)


@dataclass(frozen=True)
class Token:
    kind: str  # word | number | string | punct | eof
    text: str
    span: SourceSpan

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        return repr(self.text)


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        span = SourceSpan(line, pos - line_start + 1, 1)
        if m is None:
            raise ParseError(span, "a token", repr(text[pos]))
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, SourceSpan(line, span.column, len(value))))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, pos - line_start + 1, 0)))
    return tokens


class _Cursor:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("word", "punct") and t.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise ParseError(self.tok.span, repr(text), self.tok.describe())
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "word" or "/" in t.text or t.text in RESERVED_WORDS:
            raise ParseError(t.span, what, t.describe())
        return self.advance()

    def path(self) -> Token:
        t = self.tok
        if t.kind != "word" or any(part in RESERVED_WORDS for part in t.text.split("/")):
            raise ParseError(t.span, "feature path", t.describe())
        return self.advance()

    def end(self) -> None:
        if self.tok.kind != "eof":
            raise ParseError(self.tok.span, "end of input", self.tok.describe())


# -- models ---------------------------------------------------------------


@dataclass
class _Node:
    name: Token
    flag: Token | None
    kind: Decomposition
    kind_span: SourceSpan | None
    children: list


def _feature(cur: _Cursor, depth: int) -> _Node:
    if depth > MAX_DEPTH:
        raise SemanticError("TOO_DEEP", cur.tok.span, f"nesting deeper than {MAX_DEPTH}")
    flag = None
    if cur.at("mandatory") or cur.at("optional"):
        flag = cur.advance()
    name = cur.ident("feature name")
    node = _Node(name, flag, Decomposition.LEAF, None, [])
    if cur.at("{"):
        cur.advance()
        t = cur.tok
        if not (t.kind == "word" and t.text in _KINDS):
            raise ParseError(t.span, "'and', 'or' or 'alt'", t.describe())
        cur.advance()
        node.kind, node.kind_span = _KINDS[t.text], t.span
        # both "{ and a b }" and "{ and { a b } }" are accepted
        inner = cur.at("{")
        if inner:
            cur.advance()
        node.children.append(_feature(cur, depth + 1))
        while not cur.at("}"):
            if cur.tok.kind == "eof":
                raise ParseError(cur.tok.span, "'}'", cur.tok.describe())
            node.children.append(_feature(cur, depth + 1))
        cur.advance()
        if inner:
            cur.expect("}")
    return node


def _build(node: _Node, parent_kind: Decomposition | None) -> Feature:
    if node.flag is not None and parent_kind is not Decomposition.AND:
        raise SemanticError(
            "MISPLACED_FLAG", node.flag.span, f"'{node.flag.text}' is only legal inside an 'and' block"
        )
    n = len(node.children)
    if node.kind in (Decomposition.OR, Decomposition.ALTERNATIVE) and n < 2:
        raise SemanticError(
            "ARITY", node.kind_span, f"'{node.kind.value}' group of {node.name.text} needs at least two children"
        )
    seen: set[str] = set()
    for c in node.children:
        if c.name.text in seen:
            raise SemanticError("DUPLICATE_SIBLING", c.name.span, f"duplicate sibling {c.name.text!r}")
        seen.add(c.name.text)
    optional = node.flag is not None and node.flag.text == "optional"
    return Feature(
        node.name.text,
        node.kind,
        tuple(_build(c, node.kind) for c in node.children),
        Optionality.OPTIONAL if optional else Optionality.MANDATORY,
    )


def parse_model(text: str) -> FeatureModel:
    """Parse ``.fm`` text. Raises :class:`ParseError` or :class:`SemanticError`."""
    cur = _Cursor(text)
    cur.expect("model")
    cur.ident("model name")
    root_node = _feature(cur, 0)
    if root_node.flag is not None:
        raise SemanticError("MISPLACED_FLAG", root_node.flag.span, "the root feature takes no flag")
    root = _build(root_node, None)
    # paths for constraint resolution
    known: set[str] = set()
    stack = [(root, root.name)]
    while stack:
        f, p = stack.pop()
        known.add(p)
        stack.extend((c, f"{p}/{c.name}") for c in f.children)
    constraints = []
    while cur.at("constraint"):
        cur.advance()
        src = cur.path()
        t = cur.tok
        if not (cur.at("requires") or cur.at("excludes")):
            raise ParseError(t.span, "'requires' or 'excludes'", t.describe())
        cur.advance()
        dst = cur.path()
        for end in (src, dst):
            if end.text not in known:
                raise SemanticError("UNKNOWN_PATH", end.span, f"no feature at {end.text!r}")
        if src.text == dst.text:
            raise SemanticError("SELF_CONSTRAINT", dst.span, "constraint relates a feature to itself")
        constraints.append(CrossTreeConstraint(ConstraintKind(t.text), src.text, dst.text))
    cur.end()
    try:
        return FeatureModel(root, tuple(constraints))
    except ModelError as err:  # pragma: no cover - the checks above are stricter
        raise SemanticError(err.code, SourceSpan(1, 1, 0), err.message) from None


def _emit(f: Feature, parent: Decomposition | None, indent: int) -> Iterator[str]:
    pad = "  " * indent
    flag = "optional " if (parent is Decomposition.AND and f.optional) else ""
    if parent is Decomposition.AND and not f.optional:
        flag = "mandatory "
    if f.is_leaf:
        yield f"{pad}{flag}{f.name}"
        return
    yield f"{pad}{flag}{f.name} {{ {f.decomposition.value}"
    for c in f.children:
        yield from _emit(c, f.decomposition, indent + 1)
    yield f"{pad}}}"


def serialize_model(model: FeatureModel, name: str | None = None) -> str:
    """Canonical text: two-space indentation, stored child order, constraints last."""
    lines = [f"model {name or model.root_path}"]
    lines.extend(_emit(model.root, None, 0))
    for c in model.constraints:
        lines.append(f"constraint {c.source} {c.kind.value} {c.target}")
    return "\n".join(lines) + "\n"


# -- configurations -------------------------------------------------------


def _value(tok: Token) -> Scalar:
    if tok.kind == "number":
        if re.fullmatch(r"-?[0-9]+", tok.text):
            return int(tok.text)
        v = float(tok.text)
        if not math.isfinite(v):
            raise SemanticError("BAD_VALUE", tok.span, f"number out of range: {tok.text}")
        return v
    if tok.kind == "string":
        try:
            return json.loads(tok.text)
        except ValueError:
            raise ParseError(tok.span, "valid string escape", tok.describe()) from None
    if tok.kind == "word" and tok.text in ("true", "false"):
        return tok.text == "true"
    raise ParseError(tok.span, "integer, decimal, string, true or false", tok.describe())


def parse_configuration(text: str) -> Configuration:
    """Parse ``.cfg`` text.

    Repeated ``select`` lines are idempotent; setting the same key of the
    same feature twice raises :class:`SemanticError` ``DUPLICATE_BINDING``.
    """
    cur = _Cursor(text)
    cur.expect("config")
    name = cur.ident("configuration name").text
    selected: set[str] = set()
    while cur.at("select"):
        cur.advance()
        selected.add(cur.path().text)
    bindings: dict[str, dict[str, Scalar]] = {}
    while cur.at("set"):
        cur.advance()
        path = cur.path().text
        key = cur.ident("parameter name")
        cur.expect("=")
        value = _value(cur.advance())
        slot = bindings.setdefault(path, {})
        if key.text in slot:
            raise SemanticError(
                "DUPLICATE_BINDING", key.span, f"{path} {key.text} is already set"
            )
        slot[key.text] = value
    cur.end()
    return Configuration(frozenset(selected), bindings, name)


def format_value(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if not math.isfinite(value):
            raise ValueError(f"cannot serialize {value}")
        return text if any(ch in text for ch in ".e") else text + ".0"
    return json.dumps(value, ensure_ascii=False)


def serialize_configuration(config: Configuration) -> str:
    lines = [f"config {config.name}"]
    lines.extend(f"select {p}" for p in sorted(config.selected))
    for path in sorted(config.bindings):
        for key in sorted(config.bindings[path]):
            lines.append(f"set {path} {key} = {format_value(config.bindings[path][key])}")
    return "\n".join(lines) + "\n"
