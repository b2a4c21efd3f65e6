"""Reference learners: naive Bayes, decision stump, OLS, logistic regression.

Each learner declares its tunable parameters in a :class:`LearnerSpec`.
``fit`` is deterministic; the returned :class:`FittedModel` holds a
JSON-serialisable snapshot of everything ``predict`` needs.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import DataError
from .data import Column, ColumnKind, Dataset

SINGULAR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ParamSpec:
    type: str  # "int" | "float" | "enum" | "bool"
    default: Any
    low: float | None = None
    high: float | None = None
    step: float | None = None
    values: tuple = ()
    tunable: bool = True

    def admits(self, value: Any) -> bool:
        if self.type == "bool":
            return isinstance(value, bool)
        if self.type == "enum":
            return value in self.values
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.type == "int" and not isinstance(value, int):
            return False
        return self.low - 1e-12 <= value <= self.high + 1e-12

    def describe(self) -> dict:
        d: dict[str, Any] = {"type": self.type, "default": self.default}
        if self.type in ("int", "float"):
            d.update(low=self.low, high=self.high, step=self.step)
        if self.values:
            d["values"] = list(self.values)
        return d


@dataclass(frozen=True)
class LearnerSpec:
    id: str
    task: str  # "classification" | "regression"
    params: Mapping[str, ParamSpec]
    assumptions: tuple[str, ...]

    def defaults(self) -> dict[str, Any]:
        return {k: p.default for k, p in self.params.items()}


LEARNERS: dict[str, LearnerSpec] = {
    "nb.gaussian": LearnerSpec(
        "nb.gaussian",
        "classification",
        {"alpha": ParamSpec("float", 1.0, 0.5, 3.0, 0.5)},
        ("min-rows", "categorical-target"),
    ),
    "tree.stump": LearnerSpec(
        "tree.stump",
        "classification",
        {
            "criterion": ParamSpec("enum", "gain", values=("gain", "gain_ratio"), tunable=False),
            "min_leaf": ParamSpec("int", 1, 1, 20, 1),
        },
        ("min-rows", "categorical-target"),
    ),
    "ols": LearnerSpec(
        "ols",
        "regression",
        {"ridge": ParamSpec("float", 0.0, 0.0, 1.0, 0.1)},
        ("min-rows", "numeric-features", "numeric-target"),
    ),
    "logreg": LearnerSpec(
        "logreg",
        "classification",
        {
            "learning_rate": ParamSpec("float", 0.1, 0.05, 1.0, 0.05),
            "iterations": ParamSpec("int", 500, 100, 2000, 100),
        },
        ("min-rows", "numeric-features", "binary-target"),
    ),
}


def learner_spec(learner: str) -> LearnerSpec:
    try:
        return LEARNERS[learner]
    except KeyError:
        raise DataError("BAD_PARAM", f"unknown learner {learner!r}") from None


def resolve_params(learner: str, params: Mapping[str, Any] | None) -> dict[str, Any]:
    """Defaults overlaid with ``params``; unknown keys or out-of-domain values raise BAD_PARAM."""
    spec = learner_spec(learner)
    out = spec.defaults()
    for k, v in (params or {}).items():
        if k not in spec.params:
            raise DataError("BAD_PARAM", f"{learner} has no parameter {k!r}")
        p = spec.params[k]
        if p.type == "float" and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not p.admits(v):
            raise DataError("BAD_PARAM", f"{learner}.{k}={v!r} outside {p.describe()}")
        out[k] = v
    return out


# -- assumption checks -------------------------------------------------------


def check_assumption(name: str, learner: str, dataset: Dataset, ids: Sequence[int] | None = None) -> tuple[bool, str]:
    ids = list(dataset.row_ids if ids is None else ids)
    feats = dataset.feature_columns
    if name == "min-rows":
        need = len(feats) + 1 if learner == "ols" else 2
        return len(ids) >= need, f"{len(ids)} rows, need >= {need}"
    if name == "categorical-target":
        kind = dataset.target_kind
        return kind is ColumnKind.CATEGORICAL, f"target {dataset.target!r} is {kind.value}"
    if name == "numeric-target":
        kind = dataset.target_kind
        return kind is ColumnKind.NUMERIC, f"target {dataset.target!r} is {kind.value}"
    if name == "numeric-features":
        bad = [c.name for c in feats if c.kind is not ColumnKind.NUMERIC]
        return not bad, ("all features numeric" if not bad else f"categorical features: {', '.join(bad)}")
    if name == "binary-target":
        n = len(set(dataset.labels(ids)))
        return n == 2, f"target has {n} distinct value(s)"
    raise ValueError(f"unknown assumption {name!r}")


def check_compatibility(learner: str, dataset: Dataset, ids: Sequence[int] | None = None) -> list[tuple[str, bool, str]]:
    return [(a, *check_assumption(a, learner, dataset, ids)) for a in learner_spec(learner).assumptions]


# -- fitted models -------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    labels: list
    scores: list[float] | None = None


@dataclass(frozen=True)
class FittedModel:
    learner: str
    params: Mapping[str, Any]
    features: tuple[Column, ...]
    state: Mapping[str, Any]
    classes: tuple = ()
    positive: Any = None
    seed: int = 0
    extra: Mapping[str, Any] = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "learner": self.learner,
            "params": dict(self.params),
            "features": [c.name for c in self.features],
            "classes": list(self.classes),
            "positive": self.positive,
            "state": self.state,
        }


def _entropy(counts: Sequence[int]) -> float:
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def _majority(labels: Sequence, classes: Sequence) -> Any:
    counts = Counter(labels)
    return max(classes, key=lambda c: (counts[c], -classes.index(c)))


# naive Bayes ---------------------------------------------------------------


def _fit_nb(X: list[tuple], y: list, cols: tuple[Column, ...], params: Mapping, classes: list) -> dict:
    alpha = params["alpha"]
    n = len(y)
    by_class = {c: [x for x, t in zip(X, y) if t == c] for c in classes}
    priors = {str(c): len(by_class[c]) / n for c in classes}
    features = []
    for j, col in enumerate(cols):
        if col.kind is ColumnKind.NUMERIC:
            allv = [x[j] for x in X]
            spread = float(np.var(allv)) if allv else 0.0
            floor = 1e-9 * max(spread, 1.0)
            stats = {}
            for c in classes:
                vals = [x[j] for x in by_class[c]]
                mu = sum(vals) / len(vals)
                var = sum((v - mu) ** 2 for v in vals) / len(vals)
                stats[str(c)] = [mu, var + floor]
            features.append({"kind": "numeric", "stats": stats})
        else:
            values = sorted({x[j] for x in X})
            table = {}
            for c in classes:
                counts = Counter(x[j] for x in by_class[c])
                denom = len(by_class[c]) + alpha * len(values)
                table[str(c)] = {v: (counts[v] + alpha) / denom for v in values}
                table[str(c)]["__unseen__"] = alpha / denom
            features.append({"kind": "categorical", "likelihood": table})
    return {"priors": priors, "features": features}


def _nb_log_posteriors(state: Mapping, classes: Sequence, x: tuple) -> list[float]:
    out = []
    for c in classes:
        key = str(c)
        lp = math.log(state["priors"][key]) if state["priors"][key] > 0 else -math.inf
        for v, f in zip(x, state["features"]):
            if f["kind"] == "numeric":
                mu, var = f["stats"][key]
                lp += -0.5 * math.log(2 * math.pi * var) - (v - mu) ** 2 / (2 * var)
            else:
                table = f["likelihood"][key]
                lp += math.log(table.get(v, table["__unseen__"]))
        out.append(lp)
    return out


def _softmax(logs: Sequence[float]) -> list[float]:
    m = max(logs)
    ex = [math.exp(v - m) if v != -math.inf else 0.0 for v in logs]
    s = sum(ex)
    return [e / s for e in ex]


# decision stump -------------------------------------------------------------


def _leaf(y: Sequence, classes: list, positive: Any) -> dict:
    return {
        "label": _majority(y, classes) if y else classes[0],
        "positive_rate": (sum(1 for t in y if t == positive) / len(y)) if y else 0.0,
        "size": len(y),
    }


def _fit_stump(X: list[tuple], y: list, cols: tuple[Column, ...], params: Mapping, classes: list, positive: Any) -> dict:
    min_leaf = params["min_leaf"]
    ratio = params["criterion"] == "gain_ratio"
    base = _entropy([y.count(c) for c in classes])
    n = len(y)
    best = None
    best_score = 1e-12
    for j, col in enumerate(cols):
        if col.kind is ColumnKind.NUMERIC:
            values = sorted({x[j] for x in X})
            tests = [("le", (a + b) / 2) for a, b in zip(values, values[1:])]
        else:
            tests = [("eq", v) for v in sorted({x[j] for x in X})]
        for op, ref in tests:
            left = [t for x, t in zip(X, y) if (x[j] <= ref if op == "le" else x[j] == ref)]
            nl = len(left)
            if nl < min_leaf or n - nl < min_leaf:
                continue
            right_counts = Counter(y)
            right_counts.subtract(Counter(left))
            h = (nl / n) * _entropy([left.count(c) for c in classes]) + ((n - nl) / n) * _entropy(
                [right_counts[c] for c in classes]
            )
            score = base - h
            if ratio:
                split_info = _entropy([nl, n - nl])
                score = score / split_info if split_info > 0 else 0.0
            if score > best_score:
                best_score, best = score, (j, col, op, ref)
    if best is None:
        return {"split": None, "leaf": _leaf(y, classes, positive)}
    j, col, op, ref = best
    go_left = [(x[j] <= ref if op == "le" else x[j] == ref) for x in X]
    return {
        "split": {"feature": col.name, "index": j, "op": op, "value": ref, "score": best_score},
        "left": _leaf([t for t, g in zip(y, go_left) if g], classes, positive),
        "right": _leaf([t for t, g in zip(y, go_left) if not g], classes, positive),
    }


def _stump_leaf(state: Mapping, x: tuple) -> Mapping:
    s = state["split"]
    if s is None:
        return state["leaf"]
    v = x[s["index"]]
    hit = v <= s["value"] if s["op"] == "le" else v == s["value"]
    return state["left"] if hit else state["right"]


# linear models ---------------------------------------------------------------


def _design(X: list[tuple]) -> np.ndarray:
    return np.array([[float(v) for v in x] for x in X], dtype=float).reshape(len(X), -1)


def _fit_ols(X: list[tuple], y: list, params: Mapping) -> dict:
    A = np.hstack([_design(X), np.ones((len(X), 1))])
    target = np.array(y, dtype=float)
    normal = A.T @ A
    ridge = float(params["ridge"])
    if ridge > 0:
        penalty = np.eye(normal.shape[0]) * ridge
        penalty[-1, -1] = 0.0  # intercept is not shrunk
        normal = normal + penalty
    sv = np.linalg.svd(normal, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < SINGULAR_TOLERANCE:
        raise DataError(
            "SINGULAR",
            f"normal matrix not invertible (condition ratio {sv[-1] / sv[0] if sv[0] else 0.0:.3g}); set ridge > 0",
        )
    beta = np.linalg.solve(normal, A.T @ target)
    return {"coefficients": [float(b) for b in beta[:-1]], "intercept": float(beta[-1])}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _fit_logreg(X: list[tuple], y: list, params: Mapping, positive: Any) -> dict:
    D = _design(X)
    mean = D.mean(axis=0)
    std = D.std(axis=0)
    std[std == 0] = 1.0
    Z = (D - mean) / std
    t = np.array([1.0 if v == positive else 0.0 for v in y])
    w = np.zeros(Z.shape[1])
    b = 0.0
    lr = float(params["learning_rate"])
    n = len(t)
    for _ in range(int(params["iterations"])):
        err = _sigmoid(Z @ w + b) - t
        w = w - lr * (Z.T @ err) / n
        b = b - lr * float(err.sum()) / n
    return {
        "mean": [float(v) for v in mean],
        "std": [float(v) for v in std],
        "weights": [float(v) for v in w],
        "bias": b,
    }


# -- public API ----------------------------------------------------------------


def fit(
    learner: str,
    dataset: Dataset,
    params: Mapping[str, Any] | None = None,
    seed: int = 0,
    rows: Sequence[int] | None = None,
    positive: Any = None,
) -> FittedModel:
    """Fit ``learner`` on ``rows`` of ``dataset`` (all rows by default).

    ``params`` must lie inside the learner's domains; missing ones take
    their defaults. ``positive`` designates the positive class for
    binary scores (default: the greatest label).
    """
    resolved = resolve_params(learner, params)
    ids = list(dataset.row_ids if rows is None else rows)
    failed = [(a, d) for a, ok, d in check_compatibility(learner, dataset, ids) if not ok]
    if failed:
        raise DataError(
            "INCOMPATIBLE_DATA", "; ".join(f"{a}: {d}" for a, d in failed)
        )
    X = dataset.features(ids)
    y = dataset.labels(ids)
    cols = dataset.feature_columns
    spec = LEARNERS[learner]
    classes: list = sorted(set(y)) if spec.task == "classification" else []
    if classes:
        if positive is None:
            positive = classes[-1]
        elif positive not in classes:
            if not any(str(c) == str(positive) for c in classes):
                raise DataError("BAD_PARAM", f"positive class {positive!r} not among {classes}")
            positive = next(c for c in classes if str(c) == str(positive))
    if learner == "nb.gaussian":
        state = _fit_nb(X, y, cols, resolved, classes)
    elif learner == "tree.stump":
        state = _fit_stump(X, y, cols, resolved, classes, positive)
    elif learner == "ols":
        state = _fit_ols(X, y, resolved)
    else:
        state = _fit_logreg(X, y, resolved, positive)
    return FittedModel(learner, resolved, cols, state, tuple(classes), positive, seed)


def predict_proba(model: FittedModel, rows: Sequence[tuple]) -> list[dict]:
    """Class-probability maps for classifiers."""
    out = []
    for x in rows:
        if model.learner == "nb.gaussian":
            probs = _softmax(_nb_log_posteriors(model.state, model.classes, x))
            out.append(dict(zip(model.classes, probs)))
        elif model.learner == "tree.stump":
            leaf = _stump_leaf(model.state, x)
            p = leaf["positive_rate"]
            out.append({c: (p if c == model.positive else None) for c in model.classes})
        elif model.learner == "logreg":
            s = model.state
            z = sum((float(v) - m) / sd * w for v, m, sd, w in zip(x, s["mean"], s["std"], s["weights"]))
            p = float(_sigmoid(np.array(z + s["bias"])))
            neg = [c for c in model.classes if c != model.positive]
            out.append({model.positive: p, **{c: 1.0 - p for c in neg}})
        else:
            raise DataError("BAD_PARAM", f"{model.learner} is not a classifier")
    return out


def predict(model: FittedModel, rows: Sequence[tuple]) -> Prediction:
    """Predicted labels plus positive-class scores (classifiers) for feature tuples."""
    rows = list(rows)
    width = len(model.features)
    for x in rows:
        if len(x) != width:
            raise DataError("INCOMPATIBLE_DATA", f"row has {len(x)} features, model expects {width}")
    if model.learner == "ols":
        s = model.state
        preds = [
            s["intercept"] + sum(float(v) * c for v, c in zip(x, s["coefficients"])) for x in rows
        ]
        return Prediction(preds, preds)
    if model.learner == "nb.gaussian":
        labels, scores = [], []
        for x in rows:
            logs = _nb_log_posteriors(model.state, model.classes, x)
            best = max(range(len(logs)), key=lambda i: (logs[i], -i))
            labels.append(model.classes[best])
            scores.append(_softmax(logs)[model.classes.index(model.positive)])
        return Prediction(labels, scores)
    if model.learner == "tree.stump":
        leaves = [_stump_leaf(model.state, x) for x in rows]
        return Prediction([lf["label"] for lf in leaves], [lf["positive_rate"] for lf in leaves])
    probs = [p[model.positive] for p in predict_proba(model, rows)]
    neg = next(c for c in model.classes if c != model.positive)
    return Prediction([model.positive if p >= 0.5 else neg for p in probs], probs)
