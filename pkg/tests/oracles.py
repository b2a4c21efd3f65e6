"""Independent reference implementations used as test oracles.

Nothing here calls the library's semantics; models are described by a
plain parent/kind table and judged by brute force.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field

from crispforge.feature_model import (
    ConstraintKind,
    CrossTreeConstraint,
    Decomposition,
    FeatureModel,
    feature,
)

KINDS = {"and": Decomposition.AND, "or": Decomposition.OR, "alt": Decomposition.ALTERNATIVE}


@dataclass
class TreeSpec:
    """Flat description of a feature model."""

    root: str
    parent: dict[str, str | None] = field(default_factory=dict)
    kind: dict[str, str] = field(default_factory=dict)  # "and" | "or" | "alt" | "leaf"
    optional: dict[str, bool] = field(default_factory=dict)
    constraints: list[tuple[str, str, str]] = field(default_factory=list)  # (kind, a, b)

    @property
    def paths(self) -> list[str]:
        return list(self.parent)

    def children(self, path: str) -> list[str]:
        return [p for p, q in self.parent.items() if q == path]

    def to_model(self) -> FeatureModel:
        def build(path: str):
            name = path.rsplit("/", 1)[-1]
            kids = [build(c) for c in self.children(path)]
            kind = Decomposition.LEAF if self.kind[path] == "leaf" else KINDS[self.kind[path]]
            return feature(name, kind, *kids, optional=self.optional.get(path, False))

        cons = tuple(
            CrossTreeConstraint(ConstraintKind.REQUIRES if k == "requires" else ConstraintKind.EXCLUDES, a, b)
            for k, a, b in self.constraints
        )
        return FeatureModel(build(self.root), cons)


def random_spec(rng: random.Random, max_features: int = 12, max_constraints: int = 3) -> TreeSpec:
    n = rng.randint(1, max_features)
    spec = TreeSpec("R")
    spec.parent["R"] = None
    order = ["R"]
    for i in range(1, n):
        parent = rng.choice(order)
        path = f"{parent}/f{i}"
        spec.parent[path] = parent
        order.append(path)
    for path in order:
        kids = spec.children(path)
        if not kids:
            spec.kind[path] = "leaf"
        elif len(kids) == 1:
            spec.kind[path] = "and"
        else:
            spec.kind[path] = rng.choice(["and", "or", "alt"])
    for path in order[1:]:
        spec.optional[path] = spec.kind[spec.parent[path]] == "and" and rng.random() < 0.5
    if n >= 2:
        for _ in range(rng.randint(0, max_constraints)):
            a, b = rng.sample(order, 2)
            spec.constraints.append((rng.choice(["requires", "excludes"]), a, b))
    return spec


def brute_valid(spec: TreeSpec, selection) -> bool:
    sel = set(selection)
    if spec.root not in sel or not sel <= set(spec.parent):
        return False
    for p in sel:
        if p != spec.root and spec.parent[p] not in sel:
            return False
    for p in sel:
        kids = spec.children(p)
        chosen = sum(1 for c in kids if c in sel)
        k = spec.kind[p]
        if k == "and" and any(c not in sel and not spec.optional[c] for c in kids):
            return False
        if k == "or" and chosen < 1:
            return False
        if k == "alt" and chosen != 1:
            return False
    for k, a, b in spec.constraints:
        if k == "requires" and a in sel and b not in sel:
            return False
        if k == "excludes" and a in sel and b in sel:
            return False
    return True


def all_subsets(spec: TreeSpec):
    others = [p for p in spec.paths if p != spec.root]
    for bits in itertools.product([False, True], repeat=len(others)):
        yield frozenset([spec.root] + [p for p, b in zip(others, bits) if b])


def brute_solutions(spec: TreeSpec) -> list[frozenset[str]]:
    return [s for s in all_subsets(spec) if brute_valid(spec, s)]


def lex_key(selection) -> list[str]:
    return sorted(selection)


def pairwise_auc(labels, scores, positive) -> float:
    """Concordance over every (positive, negative) pair, ties worth one half."""
    pos = [s for s, y in zip(scores, labels) if y == positive]
    neg = [s for s, y in zip(scores, labels) if y != positive]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def nb_posteriors(rows, target_col: int, x: tuple, alpha: float = 1.0) -> dict:
    """Unnormalised naive Bayes posteriors for categorical rows with add-alpha smoothing."""
    classes = sorted({r[target_col] for r in rows})
    features = [j for j in range(len(rows[0])) if j != target_col]
    out = {}
    for c in classes:
        members = [r for r in rows if r[target_col] == c]
        p = len(members) / len(rows)
        for k, j in enumerate(features):
            values = {r[j] for r in rows}
            hits = sum(1 for r in members if r[j] == x[k])
            p *= (hits + alpha) / (len(members) + alpha * len(values))
        out[c] = p
    return out


def mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)
