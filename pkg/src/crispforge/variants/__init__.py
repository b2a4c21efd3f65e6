"""Executable variants behind feature-model leaves."""

from .data import Column, ColumnKind, Dataset, read_csv
from .learners import (
    LEARNERS,
    FittedModel,
    LearnerSpec,
    ParamSpec,
    Prediction,
    fit,
    learner_spec,
    predict,
    predict_proba,
    resolve_params,
)
from .metrics import METRICS, MetricScore, evaluate_metric
from .policies import StopDecision, Trial, propose_revision, stop_decision
from .splitters import SplitKind, SplitPart, SplitPlan, split

__all__ = [
    "Column", "ColumnKind", "Dataset", "read_csv",
    "LEARNERS", "FittedModel", "LearnerSpec", "ParamSpec", "Prediction",
    "fit", "learner_spec", "predict", "predict_proba", "resolve_params",
    "METRICS", "MetricScore", "evaluate_metric",
    "StopDecision", "Trial", "propose_revision", "stop_decision",
    "SplitKind", "SplitPart", "SplitPlan", "split",
]
