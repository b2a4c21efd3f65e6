"""Stop policies and the automated parameter-revision step."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from ..errors import DataError
from .learners import LearnerSpec, ParamSpec

AUTOMATED_STOP = "stop.automated"
MANUAL_STOP = "stop.manual"

STOP_DEFAULTS = {"max_iterations": 5, "min_improvement": 0.0, "patience": 2}

AWAITING_OPERATOR = "AWAITING_OPERATOR"


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str | None = None

    def __str__(self) -> str:
        return f"STOP({self.reason})" if self.stop else "CONTINUE"


CONTINUE = StopDecision(False)


def stop_params(params: Mapping[str, Any] | None) -> dict[str, Any]:
    """Automated-stop parameters with defaults applied and checked."""
    out = dict(STOP_DEFAULTS)
    for k, v in (params or {}).items():
        if k not in out:
            raise DataError("BAD_PARAM", f"unknown stop parameter {k!r}")
        out[k] = v
    mi, imp, pat = out["max_iterations"], out["min_improvement"], out["patience"]
    if isinstance(mi, bool) or not isinstance(mi, int) or mi < 1:
        raise DataError("BAD_PARAM", f"max_iterations must be an integer >= 1, got {mi!r}")
    if isinstance(imp, bool) or not isinstance(imp, (int, float)) or imp < 0:
        raise DataError("BAD_PARAM", f"min_improvement must be >= 0, got {imp!r}")
    if isinstance(pat, bool) or not isinstance(pat, int) or pat < 1:
        raise DataError("BAD_PARAM", f"patience must be an integer >= 1, got {pat!r}")
    return out


def _improves(score: float, best: float, threshold: float) -> bool:
    # strict, and blind to representation noise: 0.71 - 0.70 is not > 0.01
    return score - best - threshold > 1e-12 * max(1.0, abs(score), abs(best))


def stop_decision(
    policy: str, params: Mapping[str, Any] | None, history: Sequence[float | None]
) -> StopDecision:
    """Decide after the last entry of ``history`` (best score per iteration, higher is better).

    The automated policy stops on budget (``len(history) >= max_iterations``)
    or when ``patience`` consecutive iterations each failed to beat the best
    earlier score by more than ``min_improvement``. Undefined scores count as
    no improvement. The manual policy always hands control back.
    """
    if policy == MANUAL_STOP:
        return StopDecision(True, AWAITING_OPERATOR)
    if policy != AUTOMATED_STOP:
        raise DataError("BAD_PARAM", f"unknown stop policy {policy!r}")
    p = stop_params(params)
    if len(history) >= p["max_iterations"]:
        return StopDecision(True, "budget")
    stale = 0
    best = None
    for score in history:
        if score is None:
            stale += 1
        elif best is None or _improves(score, best, p["min_improvement"]):
            best, stale = score, 0
        else:
            best, stale = max(best, score), stale + 1
    if stale >= p["patience"]:
        return StopDecision(True, "no-improvement")
    return CONTINUE


@dataclass(frozen=True)
class Trial:
    """One past evaluation of a parameter setting."""

    params: Mapping[str, Any]
    metric: str
    value: float | None


def _key(params: Mapping[str, Any]) -> tuple:
    return tuple(sorted((k, repr(v)) for k, v in params.items()))


def _moves(name: str, spec: ParamSpec, current: Any) -> list[Any]:
    if not spec.tunable:
        return []
    if spec.type == "enum":
        vals = list(spec.values)
        if len(vals) < 2:
            return []
        return [vals[(vals.index(current) + 1) % len(vals)]]
    if spec.type == "bool":
        return [not current]
    out = []
    for direction in (-1, 1):
        v = current + direction * spec.step
        if spec.type == "int":
            v = int(round(v))
        else:
            v = round(v, 10)
        if spec.low - 1e-12 <= v <= spec.high + 1e-12:
            out.append(v)
    return out


def _rng(seed: int, spec: LearnerSpec, current: Mapping[str, Any], round_no: int) -> random.Random:
    material = f"{seed}|{spec.id}|{_key(current)}|{round_no}".encode()
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


def _fmt(v: Any) -> str:
    return repr(v) if isinstance(v, str) else str(v)


def propose_revision(
    spec: LearnerSpec,
    current: Mapping[str, Any],
    history: Sequence[Trial],
    seed: int,
) -> tuple[dict[str, Any], list[str]]:
    """Seeded neighbour move from ``current``.

    Every tunable parameter moves one step: numeric ones one grid step down
    or up (within range), enumerated ones to the next value cyclically.
    Settings already present in ``history`` are never proposed again.
    Raises ``EXHAUSTED`` when no untried neighbour remains.
    """
    for k, p in spec.params.items():
        if k in current and not p.admits(current[k]):
            raise DataError("BAD_PARAM", f"{spec.id}.{k}={current[k]!r} outside its domain")
    options = {k: _moves(k, p, current[k]) for k, p in sorted(spec.params.items()) if k in current}
    options = {k: v for k, v in options.items() if v}
    if not options:
        raise DataError("EXHAUSTED", f"{spec.id}: no tunable parameters")
    tried = {_key(t.params) for t in history} | {_key(current)}
    candidates: list[dict[str, Any]] = [dict(current)]
    for k, vals in options.items():
        candidates = [{**c, k: v} for c in candidates for v in vals]
    fresh = [c for c in candidates if _key(c) not in tried]
    if not fresh:
        # fall back to single-parameter moves before giving up
        singles = [{**current, k: v} for k, vals in options.items() for v in vals]
        fresh = [c for c in singles if _key(c) not in tried]
    if not fresh:
        raise DataError("EXHAUSTED", f"{spec.id}: every neighbour of {dict(current)} was tried")
    choice = _rng(seed, spec, current, len(history)).choice(fresh)
    trigger = "no prior assessment"
    scored = [t for t in history if t.value is not None]
    if history:
        last = history[-1]
        trigger = f"{last.metric}={last.value:.6g}" if last.value is not None else f"{last.metric}=undefined"
    reasons = [
        f"{k}: {_fmt(current[k])} -> {_fmt(choice[k])} (neighbour move after {trigger}"
        + (f", {len(scored)} scored trial(s))" if scored else ")")
        for k in sorted(choice)
        if choice[k] != current[k]
    ]
    return choice, reasons
