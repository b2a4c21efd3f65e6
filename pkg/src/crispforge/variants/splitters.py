"""Seeded data splitters.

Every splitter is a pure function of (dataset, params, seed). Ratio-based
methods put ``round(n * ratio)`` rows (half rounds up) in TEST.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from ..errors import DataError
from .data import Dataset


class SplitKind(str, Enum):
    TRAIN_TEST = "TRAIN_TEST"
    TRAIN_VALIDATION_TEST = "TRAIN_VALIDATION_TEST"


@dataclass(frozen=True)
class SplitPart:
    role: str
    ids: tuple[int, ...]


@dataclass(frozen=True)
class SplitPlan:
    method: str
    kind: SplitKind
    parts: tuple[SplitPart, ...]
    folds: tuple[tuple[int, ...], ...] | None = None
    params: Mapping = field(default_factory=dict)

    def part(self, role: str) -> tuple[int, ...]:
        for p in self.parts:
            if p.role == role:
                return p.ids
        raise KeyError(role)

    def has(self, role: str) -> bool:
        return any(p.role == role for p in self.parts)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "kind": self.kind.value,
            "params": dict(self.params),
            "parts": {p.role: list(p.ids) for p in self.parts},
        }
        if self.folds is not None:
            out["folds"] = [list(f) for f in self.folds]
        return out


def test_size(n: int, ratio: float) -> int:
    return math.floor(n * ratio + 0.5)


def _bad(msg: str) -> DataError:
    return DataError("BAD_PARAM", msg)


def _ratio(params: Mapping) -> float:
    r = params.get("ratio", 0.3)
    if isinstance(r, bool) or not isinstance(r, (int, float)) or not 0 < r < 1:
        raise _bad(f"ratio must be a number in (0, 1), got {r!r}")
    return float(r)


def _int(params: Mapping, key: str, default: int | None, low: int) -> int:
    v = params.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < low:
        raise _bad(f"{key} must be an integer >= {low}, got {v!r}")
    return v


def _check_keys(params: Mapping, allowed: set[str]) -> None:
    extra = sorted(set(params) - allowed)
    if extra:
        raise _bad(f"unknown split parameter(s): {', '.join(extra)}")


def _two_way(method: str, params: Mapping, train: list[int], test: list[int]) -> SplitPlan:
    if not train or not test:
        raise DataError("EMPTY_SPLIT", f"{method}: TRAIN has {len(train)} rows, TEST has {len(test)}")
    return SplitPlan(
        method,
        SplitKind.TRAIN_TEST,
        (SplitPart("TRAIN", tuple(sorted(train))), SplitPart("TEST", tuple(sorted(test)))),
        params=dict(params),
    )


def _shuffled(ids: list[int], rng: random.Random) -> list[int]:
    ids = list(ids)
    rng.shuffle(ids)
    return ids


def _random_prefix(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"ratio"})
    t = test_size(len(ids), _ratio(params))
    order = _shuffled(ids, rng)
    return _two_way(method, params, order[t:], order[:t])


def _stratified(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"ratio"})
    ratio = _ratio(params)
    strata: dict = {}
    for i, y in zip(ids, labels):
        strata.setdefault(y, []).append(i)
    train: list[int] = []
    test: list[int] = []
    for y in sorted(strata):
        members = strata[y]
        if len(members) < 2:
            raise DataError("STRATUM_TOO_SMALL", f"class {y!r} has {len(members)} row(s)")
        t = test_size(len(members), ratio)
        order = _shuffled(members, rng)
        test += order[:t]
        train += order[t:]
    return _two_way(method, params, train, test)


def _convenience(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"ratio"})
    t = test_size(len(ids), _ratio(params))
    cut = len(ids) - t
    return _two_way(method, params, ids[:cut], ids[cut:])


def _systematic(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"step", "start"})
    step = _int(params, "step", 3, 2)
    start = params.get("start")
    if start is None:
        start = rng.randrange(step)
    elif isinstance(start, bool) or not isinstance(start, int) or not 0 <= start < step:
        raise _bad(f"start must be an integer in [0, {step}), got {start!r}")
    picked = set(range(start, len(ids), step))
    test = [i for k, i in enumerate(ids) if k in picked]
    train = [i for k, i in enumerate(ids) if k not in picked]
    return _two_way(method, params, train, test)


def _kfold(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"k"})
    n = len(ids)
    k = _int(params, "k", 5, 2)
    if k > n:
        raise _bad(f"k={k} exceeds the number of rows ({n})")
    order = _shuffled(ids, rng)
    base, extra = divmod(n, k)
    folds = []
    pos = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(tuple(sorted(order[pos:pos + size])))
        pos += size
    return SplitPlan(method, SplitKind.TRAIN_TEST, (), tuple(folds), dict(params))


def _bootstrap(method: str, ids: list[int], labels, params: Mapping, rng: random.Random) -> SplitPlan:
    _check_keys(params, {"resamples"})
    n = len(ids)
    draws = _int(params, "resamples", n, 1)
    bag = [ids[rng.randrange(n)] for _ in range(draws)]
    oob = sorted(set(ids) - set(bag))
    if not oob:
        raise DataError("EMPTY_SPLIT", f"{method}: no out-of-bag rows")
    return SplitPlan(
        method,
        SplitKind.TRAIN_TEST,
        (SplitPart("TRAIN", tuple(sorted(bag))), SplitPart("TEST", tuple(oob))),
        params=dict(params),
    )


SPLITTERS: dict[str, Callable] = {
    "split.holdout": _random_prefix,
    "split.simple_random": _random_prefix,
    "split.stratified": _stratified,
    "split.convenience": _convenience,
    "split.systematic": _systematic,
    "split.kfold": _kfold,
    "split.bootstrap": _bootstrap,
}


def split_ids(method: str, ids: list[int], labels: list, params: Mapping, seed: int) -> SplitPlan:
    """Split an explicit id list (labels are only read by stratified sampling)."""
    try:
        fn = SPLITTERS[method]
    except KeyError:
        raise _bad(f"unknown split method {method!r}") from None
    if not ids:
        raise DataError("EMPTY_SPLIT", "no rows to split")
    return fn(method, list(ids), list(labels), dict(params), random.Random(seed))


def split(dataset: Dataset, method: str, params: Mapping, seed: int) -> SplitPlan:
    return split_ids(method, list(dataset.row_ids), dataset.labels(), params, seed)


def check_plan(plan: SplitPlan, n: int) -> list[str]:
    """Structural invariant violations of ``plan`` over ``n`` rows (empty when sound)."""
    problems = []
    everything = set(range(n))
    if plan.folds is not None:
        seen: list[int] = [i for f in plan.folds for i in f]
        if len(seen) != len(set(seen)):
            problems.append("folds overlap")
        if set(seen) != everything:
            problems.append("folds do not cover all rows")
        sizes = [len(f) for f in plan.folds]
        if sizes and max(sizes) - min(sizes) > 1:
            problems.append(f"fold sizes {sizes} differ by more than one")
        return problems
    sets = {p.role: p.ids for p in plan.parts}
    for role, ids in sets.items():
        if not ids:
            problems.append(f"{role} is empty")
        if role != "TRAIN" or plan.method != "split.bootstrap":
            if len(ids) != len(set(ids)):
                problems.append(f"{role} repeats ids")
    roles = list(sets)
    for a in range(len(roles)):
        for b in range(a + 1, len(roles)):
            if set(sets[roles[a]]) & set(sets[roles[b]]):
                problems.append(f"{roles[a]} and {roles[b]} overlap")
    union = set().union(*map(set, sets.values())) if sets else set()
    if union != everything:
        problems.append("parts do not cover all rows")
    return problems
