"""Feature models: representation, configuration validation and analysis.

A model is a rooted tree of features. Every feature decomposes its children
in exactly one way (``AND``, ``OR``, ``ALTERNATIVE``) or is a ``LEAF``;
children of an ``AND`` parent are individually mandatory or optional.
Cross-tree ``REQUIRES``/``EXCLUDES`` constraints relate arbitrary features.
Features are identified by their slash-joined path from the root, so the
same name may appear in several subtrees.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Union

from .errors import CapacityError, ModelError

Scalar = Union[int, float, str, bool]

#: Models with more features than this are never brute-forced.
ENUMERATION_CAPACITY = 24

IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

# Words with syntactic meaning in the model/configuration languages.
RESERVED_WORDS = frozenset(
    {
        "model", "mandatory", "optional", "and", "or", "alt", "constraint",
        "requires", "excludes", "config", "select", "set", "true", "false",
    }
)


class Decomposition(str, Enum):
    AND = "and"
    OR = "or"
    ALTERNATIVE = "alt"
    LEAF = "leaf"


class Optionality(str, Enum):
    MANDATORY = "mandatory"
    OPTIONAL = "optional"


class ConstraintKind(str, Enum):
    REQUIRES = "requires"
    EXCLUDES = "excludes"


class Rule(str, Enum):
    UNKNOWN_FEATURE = "UNKNOWN_FEATURE"
    ROOT_MISSING = "ROOT_MISSING"
    ORPHAN = "ORPHAN"
    MANDATORY_MISSING = "MANDATORY_MISSING"
    OR_EMPTY = "OR_EMPTY"
    ALT_NOT_ONE = "ALT_NOT_ONE"
    REQUIRES_BROKEN = "REQUIRES_BROKEN"
    EXCLUDES_BROKEN = "EXCLUDES_BROKEN"


def is_identifier(name: str) -> bool:
    return bool(IDENT_RE.match(name)) and name not in RESERVED_WORDS


@dataclass(frozen=True)
class Feature:
    name: str
    decomposition: Decomposition = Decomposition.LEAF
    children: tuple[Feature, ...] = ()
    optionality: Optionality = Optionality.MANDATORY

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))

    @property
    def is_leaf(self) -> bool:
        return self.decomposition is Decomposition.LEAF

    @property
    def optional(self) -> bool:
        return self.optionality is Optionality.OPTIONAL


def feature(
    name: str,
    decomposition: Decomposition = Decomposition.LEAF,
    *children: Feature,
    optional: bool = False,
) -> Feature:
    """Shorthand constructor used when writing models in code."""
    return Feature(
        name,
        decomposition,
        children,
        Optionality.OPTIONAL if optional else Optionality.MANDATORY,
    )


@dataclass(frozen=True)
class CrossTreeConstraint:
    kind: ConstraintKind
    source: str
    target: str

    def __str__(self) -> str:
        return f"{self.source} {self.kind.value} {self.target}"


def _normalize(node: Feature, optionality: Optionality) -> Feature:
    # Flags only mean something below an AND parent; everything else is
    # stored as MANDATORY so structural equality ignores them.
    kids = tuple(
        _normalize(
            c,
            c.optionality if node.decomposition is Decomposition.AND else Optionality.MANDATORY,
        )
        for c in node.children
    )
    return Feature(node.name, node.decomposition, kids, optionality)


@dataclass(frozen=True)
class FeatureModel:
    """Immutable feature tree plus cross-tree constraints.

    Construction checks every structural invariant and raises
    :class:`ModelError` with a ``subject`` path on the first violation.
    """

    root: Feature
    constraints: tuple[CrossTreeConstraint, ...] = ()
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _parent: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _children: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", _normalize(self.root, Optionality.MANDATORY))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        stack: list[tuple[Feature, str, str | None]] = [(self.root, self.root.name, None)]
        while stack:
            node, path, parent = stack.pop()
            if not is_identifier(node.name):
                raise _model_error("BAD_NAME", path, f"invalid feature name {node.name!r}")
            _check_arity(node, path)
            self._index[path] = node
            self._parent[path] = parent
            kid_paths = []
            for child in node.children:
                kid = f"{path}/{child.name}"
                if kid in kid_paths:
                    raise _model_error("DUPLICATE_SIBLING", kid, f"duplicate sibling {child.name!r}")
                kid_paths.append(kid)
            self._children[path] = tuple(kid_paths)
            for child, kid in reversed(list(zip(node.children, kid_paths))):
                stack.append((child, kid, path))
        # dict insertion order above is pre-order because of the reversed push
        for c in self.constraints:
            for end in (c.source, c.target):
                if end not in self._index:
                    raise _model_error("UNKNOWN_PATH", end, f"constraint endpoint {end!r} not in model")
            if c.source == c.target:
                raise _model_error("SELF_CONSTRAINT", c.source, "constraint relates a feature to itself")

    # -- navigation -----------------------------------------------------

    @property
    def root_path(self) -> str:
        return self.root.name

    @property
    def paths(self) -> tuple[str, ...]:
        """All feature paths in pre-order (document order)."""
        return tuple(self._index)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, path: object) -> bool:
        return path in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._index)

    def feature(self, path: str) -> Feature:
        try:
            return self._index[path]
        except KeyError:
            raise KeyError(f"no feature at {path!r}") from None

    def parent(self, path: str) -> str | None:
        return self._parent[path]

    def children(self, path: str) -> tuple[str, ...]:
        return self._children[path]

    def ancestors(self, path: str) -> list[str]:
        out = []
        p = self._parent[path]
        while p is not None:
            out.append(p)
            p = self._parent[p]
        return out

    def find(self, name: str) -> list[str]:
        """Paths of every feature called ``name``."""
        return [p for p, f in self._index.items() if f.name == name]


def _model_error(code: str, subject: str, message: str) -> ModelError:
    err = ModelError(code, f"{subject}: {message}")
    err.subject = subject
    return err


def _check_arity(node: Feature, path: str) -> None:
    n = len(node.children)
    kind = node.decomposition
    if kind is Decomposition.LEAF and n:
        raise _model_error("ARITY", path, "leaf feature has children")
    if kind is Decomposition.AND and n < 1:
        raise _model_error("ARITY", path, "and-decomposition needs at least one child")
    if kind in (Decomposition.OR, Decomposition.ALTERNATIVE) and n < 2:
        raise _model_error("ARITY", path, f"{kind.value}-group needs at least two children")


# -- configurations ------------------------------------------------------


@dataclass(frozen=True)
class Configuration:
    """A selection of feature paths plus per-feature parameter bindings."""

    selected: frozenset[str]
    bindings: Mapping[str, Mapping[str, Scalar]] = field(default_factory=dict)
    name: str = "config"

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected", frozenset(self.selected))
        object.__setattr__(
            self, "bindings", {p: dict(kv) for p, kv in self.bindings.items() if kv}
        )

    def __hash__(self) -> int:
        return hash((self.selected, self.name))

    def binding(self, path: str, key: str, default: Scalar | None = None) -> Scalar | None:
        return self.bindings.get(path, {}).get(key, default)

    def params(self, path: str) -> dict[str, Scalar]:
        return dict(self.bindings.get(path, {}))

    def with_selected(self, selected: Iterable[str]) -> Configuration:
        return Configuration(frozenset(selected), self.bindings, self.name)

    def with_binding(self, path: str, key: str, value: Scalar) -> Configuration:
        bindings = {p: dict(kv) for p, kv in self.bindings.items()}
        bindings.setdefault(path, {})[key] = value
        return Configuration(self.selected, bindings, self.name)


@dataclass(frozen=True)
class Violation:
    rule: Rule
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule.value} at {self.subject}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def rules(self) -> list[Rule]:
        return [v.rule for v in self.violations]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"rule": v.rule.value, "subject": v.subject, "detail": v.detail}
                for v in self.violations
            ],
        }


def validate_configuration(
    model: FeatureModel, config: Configuration | Iterable[str]
) -> ValidationReport:
    """Check a selection against group semantics and cross-tree constraints.

    Every violated rule instance is reported, ordered by (subject path, rule).
    Selections naming paths outside the model yield ``UNKNOWN_FEATURE``.
    """
    sel = config.selected if isinstance(config, Configuration) else frozenset(config)
    out: list[Violation] = []
    for p in sel:
        if p not in model:
            out.append(Violation(Rule.UNKNOWN_FEATURE, p, "path does not exist in the model"))
    if model.root_path not in sel:
        out.append(Violation(Rule.ROOT_MISSING, model.root_path, "root feature not selected"))
    for path, node in model._index.items():
        if path not in sel:
            continue
        parent = model._parent[path]
        if parent is not None and parent not in sel:
            out.append(Violation(Rule.ORPHAN, path, f"parent {parent} not selected"))
        kids = model._children[path]
        kind = node.decomposition
        if kind is Decomposition.AND:
            for kid, child in zip(kids, node.children):
                if not child.optional and kid not in sel:
                    out.append(Violation(Rule.MANDATORY_MISSING, kid, f"mandatory child of {path}"))
        elif kind is Decomposition.OR:
            if not any(k in sel for k in kids):
                out.append(Violation(Rule.OR_EMPTY, path, "or-group needs at least one child"))
        elif kind is Decomposition.ALTERNATIVE:
            n = sum(k in sel for k in kids)
            if n != 1:
                out.append(Violation(Rule.ALT_NOT_ONE, path, f"{n} children selected, exactly one required"))
    for c in model.constraints:
        if c.kind is ConstraintKind.REQUIRES:
            if c.source in sel and c.target not in sel:
                out.append(Violation(Rule.REQUIRES_BROKEN, c.source, f"requires {c.target}"))
        elif c.source in sel and c.target in sel:
            out.append(Violation(Rule.EXCLUDES_BROKEN, c.source, f"excludes {c.target}"))
    out.sort(key=lambda v: (v.subject, v.rule.value, v.detail))
    return ValidationReport(tuple(out))


# -- propositional translation -------------------------------------------


class ClauseKind(str, Enum):
    FACT = "fact"  # v
    IMPLIES = "implies"  # a -> b
    IMPLIES_ANY = "implies_any"  # a -> (b1 | ... | bn)
    NAND = "nand"  # not (a and b)


_UNICODE = {"imp": " → ", "and": " ∧ ", "or": " ∨ ", "not": "¬"}
_ASCII = {"imp": " -> ", "and": " & ", "or": " | ", "not": "!"}


@dataclass(frozen=True)
class Clause:
    kind: ClauseKind
    head: str
    body: tuple[str, ...] = ()

    def holds(self, true: frozenset[str] | set[str]) -> bool:
        if self.kind is ClauseKind.FACT:
            return self.head in true
        if self.kind is ClauseKind.NAND:
            return not (self.head in true and self.body[0] in true)
        return self.head not in true or any(b in true for b in self.body)

    def cnf(self) -> list[tuple[tuple[str, bool], ...]]:
        """The clause as CNF disjunctions of (variable, polarity) literals."""
        if self.kind is ClauseKind.FACT:
            return [((self.head, True),)]
        if self.kind is ClauseKind.NAND:
            return [((self.head, False), (self.body[0], False))]
        return [((self.head, False),) + tuple((b, True) for b in self.body)]

    def render(self, ascii: bool = False) -> str:
        s = _ASCII if ascii else _UNICODE
        if self.kind is ClauseKind.FACT:
            return self.head
        if self.kind is ClauseKind.NAND:
            return f"{s['not']}({self.head}{s['and']}{self.body[0]})"
        if self.kind is ClauseKind.IMPLIES:
            return f"({self.head}{s['imp']}{self.body[0]})"
        return f"({self.head}{s['imp']}({s['or'].join(self.body)}))"


@dataclass(frozen=True)
class Formula:
    """Conjunction of clauses over feature-path variables."""

    variables: tuple[str, ...]
    clauses: tuple[Clause, ...]

    def satisfied_by(self, true: Iterable[str]) -> bool:
        t = frozenset(true)
        return all(c.holds(t) for c in self.clauses)

    def cnf(self) -> list[tuple[tuple[str, bool], ...]]:
        return [d for c in self.clauses for d in c.cnf()]

    def render(self, ascii: bool = False) -> str:
        sep = _ASCII["and"] if ascii else _UNICODE["and"]
        return sep.join(c.render(ascii) for c in self.clauses)

    def __str__(self) -> str:
        return self.render()


def to_propositional(model: FeatureModel) -> Formula:
    """Translate the model into a formula whose models are its valid configurations.

    Clause order: the root fact, then for each feature in pre-order its
    child-implies-parent clauses, its mandatory/group clause and (for
    alternative groups) pairwise exclusions; cross-tree constraints last.
    """
    clauses = [Clause(ClauseKind.FACT, model.root_path)]
    for path, node in model._index.items():
        kids = model._children[path]
        for k in kids:
            clauses.append(Clause(ClauseKind.IMPLIES, k, (path,)))
        if node.decomposition is Decomposition.AND:
            for k, child in zip(kids, node.children):
                if not child.optional:
                    clauses.append(Clause(ClauseKind.IMPLIES, path, (k,)))
        elif node.decomposition in (Decomposition.OR, Decomposition.ALTERNATIVE):
            clauses.append(Clause(ClauseKind.IMPLIES_ANY, path, kids))
            if node.decomposition is Decomposition.ALTERNATIVE:
                for i, a in enumerate(kids):
                    for b in kids[i + 1:]:
                        clauses.append(Clause(ClauseKind.NAND, a, (b,)))
    for c in model.constraints:
        if c.kind is ConstraintKind.REQUIRES:
            clauses.append(Clause(ClauseKind.IMPLIES, c.source, (c.target,)))
        else:
            clauses.append(Clause(ClauseKind.NAND, c.source, (c.target,)))
    return Formula(model.paths, tuple(clauses))


# -- analysis -------------------------------------------------------------


def _satisfiable(clauses: list[list[tuple[int, bool]]], assignment: dict[int, bool]) -> bool:
    # Plain DPLL: unit propagation, then branch on the first open variable.
    assignment = dict(assignment)
    while True:
        unit = None
        open_var = None
        for clause in clauses:
            free = None
            n_free = 0
            satisfied = False
            for var, pol in clause:
                val = assignment.get(var)
                if val is None:
                    n_free += 1
                    free = (var, pol)
                elif val == pol:
                    satisfied = True
                    break
            if satisfied:
                continue
            if n_free == 0:
                return False
            if n_free == 1:
                unit = free
                break
            if open_var is None:
                open_var = free[0]
        if unit is not None:
            assignment[unit[0]] = unit[1]
            continue
        if open_var is None:
            return True
        for value in (True, False):
            trial = dict(assignment)
            trial[open_var] = value
            if _satisfiable(clauses, trial):
                return True
        return False


def _lex_selections(model: FeatureModel) -> Iterator[frozenset[str]]:
    # Depth-first over sorted paths: a selection list L is emitted before its
    # extensions L + [x], and extensions are tried in ascending x, which is
    # exactly the lexicographic order of sorted path lists. A branch is only
    # entered when the fixed prefix can still be completed to a model.
    names = sorted(model.paths)
    pos = {p: i for i, p in enumerate(names)}
    clauses = [
        [(pos[v], pol) for v, pol in disj] for disj in to_propositional(model).cnf()
    ]
    n = len(names)

    def closes(chosen: list[int]) -> bool:
        true = set(chosen)
        return all(any((v in true) == pol for v, pol in c) for c in clauses)

    stack: list[tuple[list[int], int]] = [([], 0)]
    while stack:
        chosen, start = stack.pop()
        if chosen and closes(chosen):
            yield frozenset(names[i] for i in chosen)
        fixed = {i: True for i in chosen}
        branches = []
        for j in range(start, n):
            trial = dict(fixed)
            trial[j] = True
            if _satisfiable(clauses, trial):
                branches.append((chosen + [j], j + 1))
            fixed[j] = False
        stack.extend(reversed(branches))


def enumerate_configurations(
    model: FeatureModel, limit: int | None = None
) -> list[Configuration]:
    """All valid selections in lexicographic order of their sorted path lists.

    ``limit`` truncates the result. Without a limit, models larger than
    :data:`ENUMERATION_CAPACITY` features raise :class:`CapacityError`.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be a positive integer")
    if limit is None and len(model) > ENUMERATION_CAPACITY:
        raise CapacityError(
            f"model has {len(model)} features (> {ENUMERATION_CAPACITY}); pass a limit"
        )
    out = []
    for sel in _lex_selections(model):
        out.append(Configuration(sel))
        if limit is not None and len(out) >= limit:
            break
    return out


def _product_count(model: FeatureModel) -> int:
    counts: dict[str, int] = {}
    for path in reversed(model.paths):  # children before parents
        node = model.feature(path)
        kids = [counts[k] for k in model.children(path)]
        kind = node.decomposition
        if kind is Decomposition.LEAF:
            n = 1
        elif kind is Decomposition.AND:
            n = 1
            for child, c in zip(node.children, kids):
                n *= c + 1 if child.optional else c
        elif kind is Decomposition.OR:
            n = 1
            for c in kids:
                n *= c + 1
            n -= 1
        else:
            n = sum(kids)
        counts[path] = n
    return counts[model.root_path]


def count_configurations(model: FeatureModel) -> int:
    """Number of valid configurations.

    Constraint-free models use the bottom-up product rule and have no size
    limit; constrained models are counted by enumeration.
    """
    if not model.constraints:
        return _product_count(model)
    if len(model) > ENUMERATION_CAPACITY:
        raise CapacityError(
            f"constrained model has {len(model)} features (> {ENUMERATION_CAPACITY})"
        )
    return sum(1 for _ in _lex_selections(model))


def find_dead_features(model: FeatureModel) -> set[str]:
    """Features that appear in no valid configuration."""
    if not model.constraints:
        # every feature is reachable by selecting its ancestor chain and
        # completing each group greedily
        return set()
    if len(model) > ENUMERATION_CAPACITY:
        raise CapacityError(
            f"constrained model has {len(model)} features (> {ENUMERATION_CAPACITY})"
        )
    live: set[str] = set()
    for sel in _lex_selections(model):
        live |= sel
    return set(model.paths) - live
