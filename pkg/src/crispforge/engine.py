"""Four-stage modeling pipeline driven by a validated configuration.

Stages: technique selection (:func:`plan_run`, :func:`check_assumptions`),
test design (:func:`generate_test_design`), model building
(:func:`build_models`) and model evaluation (:func:`assess_models`).
:func:`run` loops build/assess under the configured stop policy and
records everything in a :class:`~crispforge.provenance.RunLedger`.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from . import crispdm
from .crispdm import NO_VARIANT, ReferenceModel
from .errors import ConfigError, CrispError, DataError
from .feature_model import Configuration, validate_configuration
from .provenance import RunLedger, append, new_ledger, provenance_triple, utc_now
from .variants import learners as L
from .variants.data import ColumnKind, Dataset
from .variants.metrics import METRICS, SCORE_METRICS, MetricScore, evaluate_metric, undefined
from .variants.policies import (
    AUTOMATED_STOP,
    AWAITING_OPERATOR,
    MANUAL_STOP,
    StopDecision,
    Trial,
    propose_revision,
    stop_decision,
    stop_params,
)
from .variants.splitters import SplitKind, SplitPart, SplitPlan, split, split_ids

TOOL = {"name": "crispforge", "backend": "builtin"}

#: Initial values used under Automated/TechniqueParameter, per learner.
TECHNIQUE_PRESETS: dict[str, dict[str, Any]] = {
    "nb.gaussian": {"alpha": 0.5},
    "tree.stump": {"min_leaf": 5},
    "ols": {"ridge": 0.1},
    "logreg": {"learning_rate": 0.5, "iterations": 1000},
}

#: Parameters fixed by the selected algorithm feature rather than tuned.
ALGORITHM_PRESETS: dict[str, dict[str, Any]] = {
    "ID3": {"criterion": "gain"},
    "C50": {"criterion": "gain_ratio"},
}

DEFAULT_VALIDATION_RATIO = 0.25

# binding keys on a technique path that are not learner parameters
_TECHNIQUE_META_KEYS = {"rationale"}


class ExecutionMode(str, Enum):
    SEQUENTIAL = "SEQUENTIAL"
    PARALLEL = "PARALLEL"


class Mode(str, Enum):
    MANUAL = "MANUAL"
    AUTOMATED = "AUTOMATED"


class SettingsMode(str, Enum):
    MANUAL = "MANUAL"
    DEFAULT = "AUTOMATED/DefaultSetting"
    TECHNIQUE = "AUTOMATED/TechniqueParameter"


@dataclass(frozen=True)
class TechniquePlan:
    path: str
    model_id: str
    learner: str
    preset: Mapping[str, Any]
    bindings: Mapping[str, Any]
    rationale: str | None = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "model_id": self.model_id,
            "learner": self.learner,
            "preset": dict(self.preset),
            "bindings": dict(self.bindings),
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class TestDesignPlan:
    split_path: str
    split_method: str
    split_params: Mapping[str, Any]
    alternates: tuple[tuple[str, str], ...]
    data_splitting: SplitKind
    validation_ratio: float
    metrics: tuple[str, ...]
    primary_metric: str
    positive_class: Any
    success_criteria: tuple[str, ...]
    stop_policy: str
    stop_params: Mapping[str, Any]

    def to_dict(self) -> dict:
        return {
            "split": {"path": self.split_path, "method": self.split_method, "params": dict(self.split_params)},
            "alternates": [{"path": p, "method": m} for p, m in self.alternates],
            "data_splitting": self.data_splitting.value,
            "validation_ratio": self.validation_ratio,
            "metrics": list(self.metrics),
            "primary_metric": self.primary_metric,
            "positive_class": self.positive_class,
            "success_criteria": list(self.success_criteria),
            "stop": {"policy": self.stop_policy, "params": dict(self.stop_params)},
        }


@dataclass(frozen=True)
class ExecutionPlan:
    configuration: Configuration
    techniques: tuple[TechniquePlan, ...]
    test_design: TestDesignPlan
    execution: ExecutionMode
    settings_mode: SettingsMode
    rationale_mode: Mode
    adjustment_mode: Mode
    notes_mode: Mode
    adjustments: bool
    description: tuple[str, ...] = ()
    result_comments: bool = False
    post_processing: bool = False
    manual_notes: str | None = None
    comment: str | None = None

    def technique(self, model_id: str) -> TechniquePlan:
        return next(t for t in self.techniques if t.model_id == model_id)

    def to_dict(self) -> dict:
        return {
            "techniques": [t.to_dict() for t in self.techniques],
            "test_design": self.test_design.to_dict(),
            "execution": self.execution.value,
            "settings_mode": self.settings_mode.value,
            "rationale_mode": self.rationale_mode.value,
            "adjustment_mode": self.adjustment_mode.value,
            "notes_mode": self.notes_mode.value,
            "adjustments": self.adjustments,
            "description": list(self.description),
            "result_comments": self.result_comments,
            "post_processing": self.post_processing,
        }


@dataclass(frozen=True)
class AssumptionCheck:
    assumption: str
    holds: bool
    detail: str


@dataclass(frozen=True)
class TechniqueAssumptions:
    model_id: str
    learner: str
    checks: tuple[AssumptionCheck, ...]

    @property
    def compatible(self) -> bool:
        return all(c.holds for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "learner": self.learner,
            "status": "ACTIVE" if self.compatible else "SKIPPED",
            "checks": [
                {"assumption": c.assumption, "holds": c.holds, "detail": c.detail} for c in self.checks
            ],
        }


@dataclass(frozen=True)
class Round:
    """One train/evaluate pass: a k-fold fold, or the single split otherwise."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    validation: tuple[int, ...] | None = None
    fold: int | None = None


@dataclass(frozen=True)
class TestDesign:
    split: SplitPlan
    rounds: tuple[Round, ...]
    record: Mapping[str, Any]


@dataclass(frozen=True)
class BuiltModel:
    model_id: str
    technique: str
    learner: str
    params: Mapping[str, Any]
    rationale: tuple[Mapping[str, Any], ...]
    fits: tuple[L.FittedModel, ...] = ()
    error: tuple[str, str] | None = None
    provenance: Mapping[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class Assessment:
    primary_metric: str
    scores: Mapping[str, Mapping[str, MetricScore]]
    round_scores: Mapping[str, list]
    validation_scores: Mapping[str, Mapping[str, MetricScore]]
    ranking: tuple[tuple[str, int, float | None], ...]
    comments: tuple[str, ...] = ()

    def rank_of(self, model_id: str) -> int:
        return next(r for m, r, _ in self.ranking if m == model_id)


# -- helpers -------------------------------------------------------------------


def derive_seed(seed: int, *labels: Any) -> int:
    material = "|".join([str(seed), *map(str, labels)]).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def params_digest(params: Mapping[str, Any]) -> str:
    blob = json.dumps(dict(params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_agent() -> str:
    agent = os.environ.get("CRISPFORGE_AGENT")
    if agent:
        return agent
    try:
        import getpass

        return getpass.getuser() or "unknown"
    except Exception:  # no passwd entry in some containers
        return "unknown"


def _selected_children(config: Configuration, model, path: str) -> list[str]:
    return [c for c in model.children(path) if c in config.selected]


def _pick(config: Configuration, model, path: str) -> str:
    kids = _selected_children(config, model, path)
    return kids[0].rsplit("/", 1)[1]


def _bad_binding(msg: str) -> ConfigError:
    return ConfigError("BAD_BINDING", msg)


def _model_id(path: str) -> str:
    rel = path[len(crispdm.SUPERVISED) + 1:] if path.startswith(crispdm.SUPERVISED + "/") else path
    return rel.replace("/", ".")


# -- stage 1: technique selection -------------------------------------------------


def plan_run(reference: ReferenceModel, config: Configuration) -> ExecutionPlan:
    """Derive an execution plan from a configuration of the reference model."""
    model = reference.model
    report = validate_configuration(model, config)
    if not report.valid:
        shown = "; ".join(str(v) for v in report.violations[:5])
        more = f" (+{len(report.violations) - 5} more)" if len(report.violations) > 5 else ""
        raise ConfigError("INVALID_CONFIG", shown + more)
    sel = config.selected
    unbound = [p for p in model.paths if p in sel and reference.variant(p) == NO_VARIANT]
    if unbound:
        raise ConfigError("UNBOUND_FEATURE", "no executable variant for " + ", ".join(unbound))

    # techniques: deepest selected learner-bound features
    techniques = []
    for p in model.paths:
        learner = reference.variant(p)
        if p not in sel or learner not in L.LEARNERS:
            continue
        if any(c in sel and reference.variant(c) in L.LEARNERS for c in model.children(p)):
            continue
        preset = dict(ALGORITHM_PRESETS.get(p.rsplit("/", 1)[1], {}))
        raw = config.params(p)
        rationale = raw.pop("rationale", None)
        try:
            L.resolve_params(learner, raw)
        except DataError as err:
            raise _bad_binding(f"{p}: {err.message}") from None
        techniques.append(
            TechniquePlan(p, _model_id(p), learner, preset, raw, None if rationale is None else str(rationale))
        )
    if not techniques:
        raise ConfigError("UNBOUND_FEATURE", "no executable modeling technique selected")

    # test design
    metric_paths = _selected_children(config, model, crispdm.QUALITY)
    metrics = tuple(reference.variant(p) for p in metric_paths)
    primary = metrics[0]
    wanted = config.binding(crispdm.QUALITY, "primary_metric")
    if wanted is not None:
        lookup = {}
        for p, m in zip(metric_paths, metrics):
            lookup.update({m: m, p: m, p.rsplit("/", 1)[1]: m, m.split(".", 1)[1]: m})
        if wanted not in lookup:
            raise _bad_binding(f"primary_metric {wanted!r} is not a selected quality criterion")
        primary = lookup[wanted]
    splits = [
        (p, reference.variant(p))
        for p in model.paths
        if p in sel and p.startswith(crispdm.SPLIT_TECHNIQUE + "/") and (reference.variant(p) or "").startswith("split.")
    ]
    if not splits:
        raise ConfigError("UNBOUND_FEATURE", "no executable data-splitting technique selected")
    split_path, split_method = splits[0]
    tvt = f"{crispdm.DATA_SPLITTING}/TestValidationTraining" in sel
    vr = config.binding(f"{crispdm.DATA_SPLITTING}/TestValidationTraining", "validation_ratio", DEFAULT_VALIDATION_RATIO)
    if isinstance(vr, bool) or not isinstance(vr, (int, float)) or not 0 < vr < 1:
        raise _bad_binding(f"validation_ratio must be in (0, 1), got {vr!r}")
    stop_path = _selected_children(config, model, crispdm.STOP)[0]
    policy = reference.variant(stop_path)
    sparams: dict[str, Any] = {}
    if policy == AUTOMATED_STOP:
        try:
            sparams = stop_params(config.params(stop_path))
        except DataError as err:
            raise _bad_binding(f"{stop_path}: {err.message}") from None
    design = TestDesignPlan(
        split_path=split_path,
        split_method=split_method,
        split_params=config.params(split_path),
        alternates=tuple(splits[1:]),
        data_splitting=SplitKind.TRAIN_VALIDATION_TEST if tvt else SplitKind.TRAIN_TEST,
        validation_ratio=float(vr),
        metrics=metrics,
        primary_metric=primary,
        positive_class=config.binding(crispdm.QUALITY, "positive_class"),
        success_criteria=tuple(p.rsplit("/", 1)[1] for p in _selected_children(config, model, crispdm.SUCCESS)),
        stop_policy=policy,
        stop_params=sparams,
    )

    initial = _pick(config, model, crispdm.INITIAL)
    if initial == "Manual":
        settings = SettingsMode.MANUAL
    elif _pick(config, model, f"{crispdm.INITIAL}/Automated") == "DefaultSetting":
        settings = SettingsMode.DEFAULT
    else:
        settings = SettingsMode.TECHNIQUE
    if settings is SettingsMode.MANUAL:
        for t in techniques:
            missing = [
                k for k, spec in L.LEARNERS[t.learner].params.items()
                if spec.tunable and k not in t.bindings
            ]
            if missing:
                raise ConfigError(
                    "MISSING_BINDING",
                    f"manual settings need {', '.join(f'{t.path} {k}' for k in missing)}",
                )

    def mode(path: str, manual: str) -> Mode:
        return Mode.MANUAL if _pick(config, model, path) == manual else Mode.AUTOMATED

    return ExecutionPlan(
        configuration=config,
        techniques=tuple(techniques),
        test_design=design,
        execution=(
            ExecutionMode.PARALLEL if _pick(config, model, crispdm.EXECUTION) == "Parallel" else ExecutionMode.SEQUENTIAL
        ),
        settings_mode=settings,
        rationale_mode=mode(crispdm.RATIONALE, "Manual"),
        adjustment_mode=mode(crispdm.ADJUSTMENT, "ManualAdjustment"),
        notes_mode=mode(crispdm.NOTES, "ManualNotes"),
        adjustments=f"{crispdm.SETTINGS}/Adjustments" in sel,
        description=tuple(p.rsplit("/", 1)[1] for p in _selected_children(config, model, crispdm.DESCRIPTION)),
        result_comments=f"{crispdm.MODEL_ASSESSMENT}/ResultComments" in sel,
        post_processing=f"{crispdm.GENERATION}/PostProcessingProcedures" in sel,
        manual_notes=config.binding(f"{crispdm.NOTES}/ManualNotes", "notes"),
        comment=config.binding(f"{crispdm.MODEL_ASSESSMENT}/ResultComments", "comment"),
    )


def _assumption_records(plan: ExecutionPlan, dataset: Dataset) -> list[TechniqueAssumptions]:
    out = []
    for t in plan.techniques:
        checks = tuple(AssumptionCheck(a, ok, d) for a, ok, d in L.check_compatibility(t.learner, dataset))
        out.append(TechniqueAssumptions(t.model_id, t.learner, checks))
    return out


def check_assumptions(plan: ExecutionPlan, dataset: Dataset) -> list[TechniqueAssumptions]:
    """Evaluate each technique's data assumptions against ``dataset``.

    Incompatible techniques are marked SKIPPED; if none remains,
    ``ALL_TECHNIQUES_INCOMPATIBLE`` is raised.
    """
    records = _assumption_records(plan, dataset)
    if not any(r.compatible for r in records):
        raise DataError(
            "ALL_TECHNIQUES_INCOMPATIBLE",
            "; ".join(
                f"{r.model_id}: " + ", ".join(c.detail for c in r.checks if not c.holds) for r in records
            ),
        )
    return records


# -- stage 2: test design ------------------------------------------------------------


def _validation_split(method: str, train: Sequence[int], labels: list, design: TestDesignPlan, seed: int):
    vr = design.validation_ratio
    if method == "split.systematic":
        params: dict[str, Any] = {"step": max(2, round(1 / vr))}
    elif method in ("split.kfold", "split.bootstrap"):
        method, params = "split.simple_random", {"ratio": vr}
    else:
        params = {"ratio": vr}
    inner = split_ids(method, list(train), labels, params, seed)
    return inner.part("TRAIN"), inner.part("TEST")


def generate_test_design(plan: ExecutionPlan, dataset: Dataset, seed: int = 0) -> TestDesign:
    """Split the data per the plan and derive the train/evaluate rounds."""
    td = plan.test_design
    if len(dataset) < 2:
        raise DataError("EMPTY_SPLIT", "test design needs at least two rows")
    base = split(dataset, td.split_method, td.split_params, seed)
    labels = dataset.labels()
    tvt = td.data_splitting is SplitKind.TRAIN_VALIDATION_TEST
    rounds: list[Round] = []
    if base.folds is not None:
        all_ids = set(dataset.row_ids)
        for i, fold in enumerate(base.folds):
            train = tuple(sorted(all_ids - set(fold)))
            val = None
            if tvt:
                train, val = _validation_split(
                    td.split_method, train, [labels[j] for j in train], td, derive_seed(seed, "validation", i)
                )
            rounds.append(Round(train, fold, val, i))
        final = SplitPlan(base.method, td.data_splitting, (), base.folds, base.params)
    else:
        train, test = base.part("TRAIN"), base.part("TEST")
        val = None
        if tvt:
            unique = sorted(set(train))
            kept, val = _validation_split(
                td.split_method, unique, [labels[j] for j in unique], td, derive_seed(seed, "validation")
            )
            held = set(val)
            train = tuple(i for i in train if i not in held)
        rounds.append(Round(tuple(train), tuple(test), val))
        parts = [SplitPart("TRAIN", tuple(train))]
        if val is not None:
            parts.append(SplitPart("VALIDATION", tuple(val)))
        parts.append(SplitPart("TEST", tuple(test)))
        final = SplitPlan(base.method, td.data_splitting, tuple(parts), None, base.params)
    record = {
        "split": final.to_dict(),
        "split_path": td.split_path,
        "alternates": [{"path": p, "method": m} for p, m in td.alternates],
        "rounds": len(rounds),
        "quality_criteria": list(td.metrics),
        "primary_metric": td.primary_metric,
        "success_criteria": list(td.success_criteria),
        "stop": {"policy": td.stop_policy, "params": dict(td.stop_params)},
    }
    return TestDesign(final, tuple(rounds), record)


# -- stage 3: model building --------------------------------------------------------


def initial_settings(plan: ExecutionPlan, technique: TechniquePlan) -> tuple[dict[str, Any], list[dict]]:
    """Initial parameters and rationale entries for one technique."""
    spec = L.LEARNERS[technique.learner]
    manual_rationale = plan.rationale_mode is Mode.MANUAL
    params: dict[str, Any] = {}
    sources: dict[str, str] = {}
    if plan.settings_mode is not SettingsMode.MANUAL:
        params.update(spec.defaults())
        sources.update({k: f"default of {spec.id}" for k in params})
    if plan.settings_mode is SettingsMode.TECHNIQUE:
        for k, v in TECHNIQUE_PRESETS.get(spec.id, {}).items():
            params[k] = v
            sources[k] = f"technique preset for {spec.id}"
    for k, v in technique.preset.items():
        params[k] = v
        sources[k] = f"implied by algorithm feature {technique.path.rsplit('/', 1)[1]}"
    for k, v in technique.bindings.items():
        params[k] = v
        sources[k] = "bound in the configuration"
    for k, p in spec.params.items():
        if k not in params:
            if p.tunable:
                raise ConfigError("MISSING_BINDING", f"{technique.path} {k}")
            params[k] = p.default
            sources[k] = f"default of {spec.id}"
    params = L.resolve_params(spec.id, params)
    rationale = []
    for k in sorted(params):
        if manual_rationale:
            text = technique.rationale or "no rationale recorded"
            rationale.append({"param": k, "value": params[k], "source": "manual", "reason": text})
        else:
            rationale.append({"param": k, "value": params[k], "source": "automated", "reason": sources[k]})
    return params, rationale


def _fit_job(
    technique: TechniquePlan,
    params: Mapping[str, Any],
    rationale: Sequence[Mapping],
    dataset: Dataset,
    rounds: Sequence[Round],
    seed: int,
    iteration: int,
    positive: Any,
    who: str,
    clock: Callable[[], str],
) -> BuiltModel:
    fits = []
    error = None
    try:
        for r in rounds:
            s = derive_seed(seed, technique.model_id, iteration, r.fold if r.fold is not None else 0)
            fits.append(L.fit(technique.learner, dataset, params, s, r.train, positive))
    except CrispError as err:
        fits, error = [], (err.code, err.message)
    triple = provenance_triple(f"build:{technique.learner}#{params_digest(params)}", who, clock())
    return BuiltModel(
        technique.model_id, technique.path, technique.learner, dict(params), tuple(rationale),
        tuple(fits), error, triple,
    )


def build_models(
    plan: ExecutionPlan,
    dataset: Dataset,
    design: TestDesign,
    settings: Mapping[str, tuple[Mapping[str, Any], Sequence[Mapping]]],
    seed: int = 0,
    iteration: int = 0,
    *,
    active: Sequence[str] | None = None,
    positive: Any = None,
    who: str = "automated",
    clock: Callable[[], str] = utc_now,
    mode: ExecutionMode | None = None,
) -> list[BuiltModel]:
    """Fit every active technique on every round of ``design``.

    ``settings`` maps model id to (params, rationale entries). Results come
    back in technique document order whatever the execution mode.
    """
    mode = mode or plan.execution
    techniques = [t for t in plan.techniques if active is None or t.model_id in active]
    for t in techniques:
        if t.model_id not in settings:
            raise ConfigError("MISSING_BINDING", f"no parameter settings for {t.model_id}")
    if positive is None:
        positive = _positive(plan, dataset)
    jobs = [
        (t, settings[t.model_id][0], settings[t.model_id][1], dataset, design.rounds, seed, iteration, positive, who, clock)
        for t in techniques
    ]
    if mode is ExecutionMode.PARALLEL and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 2)) as pool:
            futures = [pool.submit(_fit_job, *job) for job in jobs]
            return [f.result() for f in futures]
    return [_fit_job(*job) for job in jobs]


# -- stage 4: evaluation -------------------------------------------------------------


def _positive(plan: ExecutionPlan, dataset: Dataset) -> Any:
    if dataset.target_kind is ColumnKind.NUMERIC and not plan.test_design.positive_class:
        return None
    classes = dataset.classes()
    wanted = plan.test_design.positive_class
    if wanted is None:
        return classes[-1]
    for c in classes:
        if c == wanted or str(c) == str(wanted):
            return c
    raise ConfigError("BAD_BINDING", f"positive_class {wanted!r} not among {classes}")


def _score_round(model: BuiltModel, fitted: L.FittedModel, dataset: Dataset, ids: Sequence[int],
                 metrics: Sequence[str], positive: Any) -> dict[str, MetricScore]:
    pred = L.predict(fitted, dataset.features(ids))
    truth = dataset.labels(ids)
    regression = L.LEARNERS[model.learner].task == "regression"
    out = {}
    for m in metrics:
        if regression and m != "metric.mae":
            out[m] = undefined(m, "not applicable to a regression model")
        elif m in SCORE_METRICS:
            out[m] = evaluate_metric(m, truth, pred.scores, positive)
        else:
            out[m] = evaluate_metric(m, truth, pred.labels, positive)
    return out


def _mean(metric: str, scores: Sequence[MetricScore]) -> MetricScore:
    vals = [s.value for s in scores if s.defined]
    if not vals:
        return undefined(metric, scores[0].reason or "undefined")
    return MetricScore(metric, sum(vals) / len(vals), METRICS[metric])


def oriented(score: MetricScore) -> float | None:
    """Score on a higher-is-better scale (None when undefined)."""
    if not score.defined:
        return None
    return score.value if score.higher_is_better else -score.value


def dense_ranking(values: Sequence[tuple[str, float | None]]) -> list[tuple[str, int, float | None]]:
    """Dense ranks of (id, oriented value) pairs; undefined values share the last rank.

    Output keeps ties in input order.
    """
    defined = sorted({v for _, v in values if v is not None}, reverse=True)
    rank_of = {v: i + 1 for i, v in enumerate(defined)}
    last = len(defined) + 1
    ranked = [(m, rank_of[v] if v is not None else last, v) for m, v in values]
    return sorted(ranked, key=lambda r: r[1])


def assess_models(
    built: Sequence[BuiltModel],
    design: TestDesign,
    metrics: Sequence[str],
    dataset: Dataset,
    primary_metric: str | None = None,
    positive: Any = None,
) -> Assessment:
    """Score built models on TEST (fold means under k-fold) and rank them densely."""
    ok = [b for b in built if b.ok]
    if not ok:
        raise DataError("NO_MODELS", "no model was built successfully")
    primary = primary_metric or metrics[0]
    scores, per_round, validation = {}, {}, {}
    for b in ok:
        rounds = [
            _score_round(b, f, dataset, r.test, metrics, positive) for f, r in zip(b.fits, design.rounds)
        ]
        per_round[b.model_id] = rounds
        scores[b.model_id] = {m: _mean(m, [r[m] for r in rounds]) for m in metrics}
        if design.rounds[0].validation is not None:
            vrounds = [
                _score_round(b, f, dataset, r.validation, metrics, positive)
                for f, r in zip(b.fits, design.rounds)
            ]
            validation[b.model_id] = {m: _mean(m, [r[m] for r in vrounds]) for m in metrics}
    ranking = dense_ranking([(b.model_id, oriented(scores[b.model_id][primary])) for b in ok])
    ranking = [(m, r, scores[m][primary].value) for m, r, _ in ranking]
    return Assessment(primary, scores, per_round, validation, tuple(ranking))


# -- the loop ----------------------------------------------------------------------


def _jsonable(obj: Any) -> Any:
    return json.loads(json.dumps(obj, allow_nan=False))


def _io_types(dataset: Dataset, learner: str) -> dict:
    task = L.LEARNERS[learner].task
    return {
        "inputs": {c.name: c.kind.value for c in dataset.feature_columns},
        "output": {
            "target": dataset.target,
            "kind": dataset.target_kind.value,
            "prediction": "label" if task == "classification" else "numeric",
            "score": "positive-class probability" if task == "classification" else "numeric",
        },
    }


def _tuning_signal(assessment: Assessment, model_id: str) -> MetricScore:
    source = assessment.validation_scores or assessment.scores
    return source[model_id][assessment.primary_metric]


def _comments(plan: ExecutionPlan, assessment: Assessment) -> list[str]:
    if not plan.result_comments:
        return []
    n = len(assessment.ranking)
    out = []
    for m, r, v in assessment.ranking:
        shown = "undefined" if v is None else f"{v:.6g}"
        out.append(f"{m}: {assessment.primary_metric}={shown}, rank {r} of {n}")
    if plan.comment:
        out.append(str(plan.comment))
    return out


def _model_entry(b: BuiltModel, assessment: Assessment | None, dataset: Dataset, status: str) -> dict:
    entry: dict[str, Any] = {
        "model_id": b.model_id,
        "technique": b.technique,
        "learner": b.learner,
        "status": status,
        "params": dict(b.params),
        "rationale": [dict(r) for r in b.rationale],
        "io_types": _io_types(dataset, b.learner),
        "artifact": "sha256:" + hashlib.sha256(
            json.dumps([f.snapshot() for f in b.fits], sort_keys=True, default=str).encode()
        ).hexdigest(),
        "provenance": dict(b.provenance),
    }
    if b.error:
        entry["error"] = {"code": b.error[0], "message": b.error[1]}
    if assessment is not None and b.ok:
        entry["scores"] = {m: s.to_dict() for m, s in assessment.scores[b.model_id].items()}
        if len(assessment.round_scores[b.model_id]) > 1:
            entry["fold_scores"] = [
                {m: s.value for m, s in r.items()} for r in assessment.round_scores[b.model_id]
            ]
        if assessment.validation_scores:
            entry["validation_scores"] = {
                m: s.to_dict() for m, s in assessment.validation_scores[b.model_id].items()
            }
        entry["rank"] = assessment.rank_of(b.model_id)
    return entry


def _history(ledger: RunLedger) -> list[float | None]:
    return [it["best_score"] for it in ledger.iterations]


def _trials(ledger: RunLedger, model_id: str) -> list[Trial]:
    out = []
    for it in ledger.iterations:
        for m in it["models"]:
            if m["model_id"] == model_id and m["status"] == "BUILT":
                out.append(Trial(m["params"], it["tuning_metric"], m.get("tuning_value")))
    return out


def _last_params(ledger: RunLedger) -> dict[str, tuple[dict, list]]:
    last = ledger.iterations[-1]
    return {m["model_id"]: (dict(m["params"]), list(m["rationale"])) for m in last["models"]}


def _revise(
    plan: ExecutionPlan, ledger: RunLedger, seed: int, who: str
) -> tuple[dict[str, tuple[dict, list]], list[dict], bool]:
    """Parameters for the next iteration; returns (settings, revisions, any_change)."""
    previous = _last_params(ledger)
    settings: dict[str, tuple[dict, list]] = {}
    revisions = []
    changed = False
    for model_id, (params, rationale) in previous.items():
        t = plan.technique(model_id)
        spec = L.LEARNERS[t.learner]
        if plan.adjustment_mode is Mode.AUTOMATED:
            try:
                new, reasons = propose_revision(spec, params, _trials(ledger, model_id), derive_seed(seed, model_id))
                exhausted = False
            except DataError as err:
                if err.code != "EXHAUSTED":
                    raise
                new, reasons, exhausted = dict(params), [err.message], True
        else:
            new = dict(params)
            new.update(t.bindings)
            new = L.resolve_params(t.learner, new)
            reasons = [f"manual adjustment: {k}: {params[k]} -> {new[k]}" for k in sorted(new) if new[k] != params[k]]
            exhausted = not reasons
        notes = list(reasons) if plan.notes_mode is Mode.AUTOMATED else [plan.manual_notes or "operator notes pending"]
        changed = changed or not exhausted
        new_rationale = [
            {"param": k, "value": new[k], "source": "automated" if plan.adjustment_mode is Mode.AUTOMATED else "manual",
             "reason": next((r for r in reasons if r.startswith(f"{k}:") or f" {k}:" in r), "unchanged")}
            for k in sorted(new)
        ]
        settings[model_id] = (new, new_rationale)
        revisions.append(
            {
                "model_id": model_id,
                "before": params,
                "after": new,
                "reasons": reasons,
                "notes": notes,
                "exhausted": exhausted,
                "who": "automated" if plan.adjustment_mode is Mode.AUTOMATED else who,
            }
        )
    return settings, revisions, changed


def _final_ranking(ledger: RunLedger) -> list[dict]:
    best: dict[str, dict] = {}
    for it in ledger.iterations:
        for m in it["models"]:
            if m["status"] != "BUILT":
                continue
            tv = m.get("tuning_value")
            cur = best.get(m["model_id"])
            if cur is None or (tv is not None and (cur["tuning_value"] is None or tv > cur["tuning_value"])):
                best[m["model_id"]] = {
                    "model_id": m["model_id"],
                    "iteration": it["index"],
                    "params": m["params"],
                    "tuning_value": tv,
                    "primary_metric": it["tuning_metric"],
                    "value": m["scores"][it["tuning_metric"]]["value"],
                    "oriented": m.get("oriented"),
                }
    order = list(best)
    ranked = dense_ranking([(mid, best[mid]["oriented"]) for mid in order])
    return [{**best[m], "rank": r} for m, r, _ in ranked]


def _descriptions(plan: ExecutionPlan, ledger: RunLedger, dataset: Dataset, design: TestDesign, seed: int) -> dict:
    if not plan.description:
        return {}
    out = {}
    n = len(ledger.final_ranking)
    for row in ledger.final_ranking:
        t = plan.technique(row["model_id"])
        fitted = L.fit(t.learner, dataset, row["params"], derive_seed(seed, t.model_id, "describe"),
                       design.rounds[0].train, _positive(plan, dataset))
        facets: dict[str, Any] = {}
        for facet in plan.description:
            if facet == "Interpretation":
                facets[facet] = interpret(fitted)
            elif facet == "ParameterSettings":
                facets[facet] = dict(row["params"])
            elif facet == "Conclusion":
                facets[facet] = (
                    f"rank {row['rank']} of {n} on {row['primary_metric']} "
                    f"(best at iteration {row['iteration']})"
                )
            elif facet == "Characteristics":
                facets[facet] = {
                    "learner": t.learner,
                    "technique_features": t.path.split("/"),
                    "params": dict(row["params"]),
                    "features_used": [c.name for c in dataset.feature_columns],
                    "training_rows": len(design.rounds[0].train),
                }
            elif facet == "Behaviors":
                last = next(
                    m for it in ledger.iterations if it["index"] == row["iteration"]
                    for m in it["models"] if m["model_id"] == row["model_id"]
                )
                facets[facet] = {k: v["value"] for k, v in last["scores"].items()}
            else:
                facets[facet] = ""
        out[row["model_id"]] = facets
    return out


def interpret(fitted: L.FittedModel) -> str:
    """Short human-readable reading of a fitted model."""
    s = fitted.state
    if fitted.learner == "ols":
        terms = " + ".join(f"{c:.6g}*{f.name}" for c, f in zip(s["coefficients"], fitted.features))
        return f"{terms} + {s['intercept']:.6g}" if terms else f"{s['intercept']:.6g}"
    if fitted.learner == "logreg":
        terms = ", ".join(f"{f.name}: {w:.4g}" for f, w in zip(fitted.features, s["weights"]))
        return f"standardised weights {{{terms}}}, bias {s['bias']:.4g}; predicts {fitted.positive!r} when p >= 0.5"
    if fitted.learner == "tree.stump":
        sp = s["split"]
        if sp is None:
            return f"always {s['leaf']['label']!r}"
        op = "<=" if sp["op"] == "le" else "=="
        return (f"if {sp['feature']} {op} {sp['value']!r} then {s['left']['label']!r} "
                f"else {s['right']['label']!r}")
    priors = ", ".join(f"{k}: {v:.3g}" for k, v in s["priors"].items())
    return f"class priors {{{priors}}} combined with {len(s['features'])} per-feature likelihoods"


def _decide(plan: ExecutionPlan, ledger: RunLedger, history: list[float | None]) -> StopDecision:
    td = plan.test_design
    if td.stop_policy == MANUAL_STOP:
        return stop_decision(MANUAL_STOP, None, history)
    if not plan.adjustments:
        return StopDecision(True, "no-adjustments")
    decision = stop_decision(AUTOMATED_STOP, td.stop_params, history)
    if not decision.stop and plan.adjustment_mode is Mode.MANUAL:
        return StopDecision(True, AWAITING_OPERATOR)
    return decision


def _snapshot(config: Configuration) -> dict:
    return {
        "name": config.name,
        "selected": sorted(config.selected),
        "bindings": {p: dict(kv) for p, kv in sorted(config.bindings.items())},
    }


def run(
    reference: ReferenceModel,
    config: Configuration,
    dataset: Dataset,
    seed: int = 0,
    *,
    agent: str | None = None,
    clock: Callable[[], str] = utc_now,
    run_id: str | None = None,
    resume: RunLedger | None = None,
    mode: ExecutionMode | None = None,
) -> RunLedger:
    """Execute the pipeline and return its ledger.

    Planning errors raise. Errors in later stages are recorded in the
    ledger (``status == "FAILED"``) and the partial ledger is returned.
    ``resume`` continues a ledger left ``AWAITING_OPERATOR``.
    """
    plan = plan_run(reference, config)
    who = agent or default_agent()
    mode = mode or plan.execution
    if resume is not None:
        if not plan.adjustments:
            raise ConfigError("NOT_RESUMABLE", "Adjustments is not selected; the run is single-iteration")
        ledger = _check_resumable(resume, config, dataset, seed)
    else:
        ledger = new_ledger(
            run_id=run_id,
            tool=TOOL,
            seed=seed,
            agent=who,
            configuration=_snapshot(config),
            dataset=dataset.digest(),
            plan=_jsonable(plan.to_dict()),
        )
        ledger = ledger.with_provenance("plan", provenance_triple(f"plan#{params_digest(_snapshot(config))}", who, clock()))
    try:
        positive = _positive(plan, dataset)
        records = _assumption_records(plan, dataset)
        if resume is None:
            ledger = ledger.replace(assumptions=_jsonable([r.to_dict() for r in records]))
        check_assumptions(plan, dataset)
        active = [r.model_id for r in records if r.compatible]
        design = generate_test_design(plan, dataset, seed)
        if resume is None:
            ledger = ledger.replace(test_design=_jsonable(dict(design.record)))
            ledger = ledger.with_provenance(
                "test_design", provenance_triple(f"test_design:{plan.test_design.split_method}#{params_digest(design.record)}", who, clock())
            )
        while True:
            index = len(ledger.iterations)
            revisions: list[dict] = []
            if index == 0:
                settings = {}
                for t in plan.techniques:
                    if t.model_id in active:
                        settings[t.model_id] = initial_settings(plan, t)
            else:
                settings, revisions, changed = _revise(plan, ledger, seed, who)
                if not changed:
                    ledger = ledger.replace(status="COMPLETED", stop_reason="exhausted")
                    break
            build_who = who if plan.settings_mode is SettingsMode.MANUAL and index == 0 else "automated"
            built = build_models(plan, dataset, design, settings, seed, index, active=active,
                                 positive=positive, who=build_who, clock=clock, mode=mode)
            assessment = assess_models(built, design, plan.test_design.metrics, dataset,
                                       plan.test_design.primary_metric, positive)
            entry = _iteration_entry(plan, index, built, assessment, dataset, revisions, clock)
            history = _history(ledger) + [entry["best_score"]]
            decision = _decide(plan, ledger, history)
            if not decision.stop and plan.adjustment_mode is Mode.AUTOMATED:
                probe = append(ledger, _jsonable({**entry, "stop": {"decision": "CONTINUE", "reason": None}}))
                if not _revise(plan, probe, seed, who)[2]:
                    decision = StopDecision(True, "exhausted")
            entry["stop"] = {"decision": "STOP" if decision.stop else "CONTINUE", "reason": decision.reason}
            ledger = append(ledger, _jsonable(entry))
            if decision.stop:
                status = "AWAITING_OPERATOR" if decision.reason == AWAITING_OPERATOR else "COMPLETED"
                ledger = ledger.replace(status=status, stop_reason=decision.reason)
                break
        ledger = ledger.replace(final_ranking=_jsonable(_final_ranking(ledger)))
        ledger = ledger.replace(model_descriptions=_jsonable(_descriptions(plan, ledger, dataset, design, seed)))
    except CrispError as err:
        ledger = ledger.replace(
            status="FAILED",
            error={"code": err.code, "message": err.message, "exit_code": err.exit_code},
        )
    return ledger


def _iteration_entry(plan, index, built, assessment, dataset, revisions, clock) -> dict:
    models = []
    best = None
    for b in built:
        m = _model_entry(b, assessment, dataset, "BUILT" if b.ok else "FAILED")
        if b.ok:
            sig = _tuning_signal(assessment, b.model_id)
            m["tuning_value"] = oriented(sig)
            m["oriented"] = oriented(assessment.scores[b.model_id][assessment.primary_metric])
            if m["tuning_value"] is not None and (best is None or m["tuning_value"] > best):
                best = m["tuning_value"]
        models.append(m)
    entry: dict[str, Any] = {
        "index": index,
        "models": models,
        "revisions": revisions,
        "assessment": {
            "primary_metric": assessment.primary_metric,
            "higher_is_better": METRICS[assessment.primary_metric],
            "ranking": [{"model_id": m, "rank": r, "value": v} for m, r, v in assessment.ranking],
            "comments": _comments(plan, assessment),
            "criteria": list(plan.test_design.metrics),
        },
        "tuning_metric": assessment.primary_metric,
        "tuning_source": "VALIDATION" if assessment.validation_scores else "TEST",
        "best_score": best,
        "provenance": provenance_triple(f"assess:{index}#{params_digest({'metrics': list(plan.test_design.metrics)})}",
                                        "automated", clock()),
    }
    if plan.post_processing:
        entry["post_processing"] = {"declared": True, "computed": False}
    return entry


def _check_resumable(ledger: RunLedger, config: Configuration, dataset: Dataset, seed: int) -> RunLedger:
    if ledger.status != "AWAITING_OPERATOR":
        raise ConfigError("NOT_RESUMABLE", f"ledger status is {ledger.status}, not AWAITING_OPERATOR")
    if sorted(config.selected) != ledger.configuration["selected"]:
        raise ConfigError("RESUME_MISMATCH", "configuration selection differs from the ledger")
    if dataset.content_hash() != ledger.dataset["content_hash"]:
        raise ConfigError("RESUME_MISMATCH", "dataset content differs from the ledger")
    if seed != ledger.seed:
        raise ConfigError("RESUME_MISMATCH", f"seed {seed} differs from the ledger's {ledger.seed}")
    return ledger.replace(status="RUNNING", stop_reason=None)
