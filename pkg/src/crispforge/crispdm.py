"""Built-in feature model of the CRISP-DM modeling phase.

The tree has four mandatory subtrees, one per generic task of the phase
(select technique, test design, build, assess). Leaves that the engine can
execute are mapped to variant identifiers by :func:`executable_bindings`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

from .feature_model import (
    Configuration,
    ConstraintKind,
    CrossTreeConstraint,
    Decomposition,
    Feature,
    FeatureModel,
    feature,
    validate_configuration,
)

AND = Decomposition.AND
OR = Decomposition.OR
ALT = Decomposition.ALTERNATIVE

#: Registry marker for features that exist in the model but cannot run.
NO_VARIANT = "NO_VARIANT"

ROOT = "Modeling"
TECHNIQUE = f"{ROOT}/SelectModelingTechnique/ModelingTechnique"
SUPERVISED = f"{TECHNIQUE}/MachineLearning/Supervised"
TEST_DESIGN = f"{ROOT}/TestDesign"
QUALITY = f"{TEST_DESIGN}/QualityCriteria"
SPLIT_TECHNIQUE = f"{TEST_DESIGN}/DataSplittingTechnique"
CROSS_VALIDATION = f"{SPLIT_TECHNIQUE}/CrossValidation"
SAMPLING = f"{SPLIT_TECHNIQUE}/StatisticalSampling"
DATA_SPLITTING = f"{TEST_DESIGN}/DataSplitting"
STOP = f"{TEST_DESIGN}/StrategyToStop"
SUCCESS = f"{TEST_DESIGN}/SuccessCriteria"
BUILD = f"{ROOT}/BuildModel"
PARAMETER_SETTINGS = f"{BUILD}/ParameterSettings"
SETTINGS = f"{PARAMETER_SETTINGS}/Settings"
INITIAL = f"{SETTINGS}/Initial"
RATIONALE = f"{PARAMETER_SETTINGS}/RationaleForChoosing"
GENERATION = f"{BUILD}/ModelGeneration"
EXECUTION = f"{GENERATION}/Execution"
DESCRIPTION = f"{BUILD}/ModelDescription"
ASSESS = f"{ROOT}/AssessModel"
MODEL_ASSESSMENT = f"{ASSESS}/ModelAssessment"
REVISED = f"{ASSESS}/RevisedParameterSettings"
ADJUSTMENT = f"{REVISED}/ParameterAdjustment"
NOTES = f"{REVISED}/AdjustmentReasons"


def _m(name: str, kind: Decomposition = Decomposition.LEAF, *children: Feature) -> Feature:
    return feature(name, kind, *children)


def _o(name: str, kind: Decomposition = Decomposition.LEAF, *children: Feature) -> Feature:
    return feature(name, kind, *children, optional=True)


def _leaves(*names: str) -> tuple[Feature, ...]:
    return tuple(_m(n) for n in names)


def _select_modeling_technique() -> Feature:
    supervised = _m(
        "Supervised", OR,
        _m("DecisionTree", OR, *_leaves("ID3", "C50")),
        *_leaves(
            "NaiveBayes", "OrdinaryLeastSquareRegression", "LogisticRegression",
            "NeuralNetworks", "SVM", "EnsembleMethods",
        ),
    )
    technique = _m(
        "ModelingTechnique", OR,
        _m("StatisticalMethods"),
        _m("MachineLearning", OR, supervised, *_leaves("Unsupervised", "ReinforcedLearning")),
        # only one data-mining branch is named, so it sits under an AND parent
        _m("DataMining", AND, _o("AssociationRules", AND, _m("AprioriAlgorithm"))),
        *_leaves("PredictiveAnalytics", "ComputationalModelingTechniques", "DomainAnalyticsMethods"),
    )
    assumptions = _m(
        "ModelingAssumptions", OR,
        *_leaves("DataRelatedAssumptions", "ApplicationAreas", "ModelDataType"),
    )
    return _m("SelectModelingTechnique", AND, technique, assumptions)


def _test_design() -> Feature:
    return _m(
        "TestDesign", AND,
        _m("QualityCriteria", OR,
           *_leaves("Sensitivity", "Accuracy", "Specificity", "ROCCurve", "MeanAbsoluteError")),
        _m("DataSplittingTechnique", OR,
           _m("CrossValidation", OR, *_leaves("HoldOut", "KFold", "Bootstrapping")),
           _m("StatisticalSampling", OR,
              *_leaves("DUPLEX", "CADEX", "StratifiedSampling", "SimpleRandomSampling",
                       "ConvenienceSampling", "SystematicSampling"))),
        _m("DataSplitting", ALT, *_leaves("TestTraining", "TestValidationTraining")),
        _m("StrategyToStop", ALT, *_leaves("AutomatedStop", "ManualStop")),
        _m("SuccessCriteria", OR, *_leaves("EaseOfInterpretation", "Deployment", "ProcessingTime")),
    )


def _build_model() -> Feature:
    settings = _m(
        "Settings", AND,
        _m("Initial", ALT,
           _m("Manual"),
           _m("Automated", ALT, *_leaves("DefaultSetting", "TechniqueParameter"))),
        _o("Adjustments"),
    )
    return _m(
        "BuildModel", AND,
        _m("ParameterSettings", AND,
           settings,
           _m("RationaleForChoosing", ALT, *_leaves("Manual", "Automated"))),
        _m("ModelGeneration", AND,
           _m("Execution", ALT, *_leaves("Sequential", "Parallel")),
           _o("PostProcessingProcedures")),
        _o("ModelDescription", OR,
           *_leaves("Interpretation", "ParameterSettings", "Conclusion",
                    "SpecialFeatures", "Characteristics", "Behaviors")),
    )


def _assess_model() -> Feature:
    return _m(
        "AssessModel", AND,
        _m("ModelAssessment", AND,
           _m("EvaluationCriteria"), _m("ResultsEvaluation"), _m("Ranking"), _o("ResultComments")),
        _m("RevisedParameterSettings", AND,
           _m("ParameterAdjustment", ALT, *_leaves("ManualAdjustment", "AutomatedAdjustment")),
           _m("AdjustmentReasons", ALT, *_leaves("ManualNotes", "AutomatedNotes"))),
    )


@dataclass(frozen=True)
class ReferenceModel:
    model: FeatureModel
    executable_leaves: dict[str, str]

    def variant(self, path: str) -> str | None:
        return self.executable_leaves.get(path)


_BINDINGS = {
    f"{CROSS_VALIDATION}/HoldOut": "split.holdout",
    f"{CROSS_VALIDATION}/KFold": "split.kfold",
    f"{CROSS_VALIDATION}/Bootstrapping": "split.bootstrap",
    f"{SAMPLING}/DUPLEX": NO_VARIANT,
    f"{SAMPLING}/CADEX": NO_VARIANT,
    f"{SAMPLING}/StratifiedSampling": "split.stratified",
    f"{SAMPLING}/SimpleRandomSampling": "split.simple_random",
    f"{SAMPLING}/ConvenienceSampling": "split.convenience",
    f"{SAMPLING}/SystematicSampling": "split.systematic",
    f"{QUALITY}/Sensitivity": "metric.sensitivity",
    f"{QUALITY}/Accuracy": "metric.accuracy",
    f"{QUALITY}/Specificity": "metric.specificity",
    f"{QUALITY}/ROCCurve": "metric.roc_auc",
    f"{QUALITY}/MeanAbsoluteError": "metric.mae",
    f"{SUPERVISED}/NaiveBayes": "nb.gaussian",
    f"{SUPERVISED}/DecisionTree": "tree.stump",
    f"{SUPERVISED}/DecisionTree/ID3": "tree.stump",
    f"{SUPERVISED}/DecisionTree/C50": "tree.stump",
    f"{SUPERVISED}/OrdinaryLeastSquareRegression": "ols",
    f"{SUPERVISED}/LogisticRegression": "logreg",
    f"{SUPERVISED}/NeuralNetworks": NO_VARIANT,
    f"{SUPERVISED}/SVM": NO_VARIANT,
    f"{SUPERVISED}/EnsembleMethods": NO_VARIANT,
    f"{STOP}/AutomatedStop": "stop.automated",
    f"{STOP}/ManualStop": "stop.manual",
    f"{EXECUTION}/Sequential": "exec.sequential",
    f"{EXECUTION}/Parallel": "exec.parallel",
    f"{ADJUSTMENT}/AutomatedAdjustment": "revise.automated",
    f"{ADJUSTMENT}/ManualAdjustment": "revise.manual",
}


def executable_bindings() -> dict[str, str]:
    """Feature path -> variant identifier (``NO_VARIANT`` when unsupported)."""
    return dict(_BINDINGS)


@lru_cache(maxsize=None)
def _reference() -> ReferenceModel:
    root = _m(
        ROOT, AND,
        _select_modeling_technique(), _test_design(), _build_model(), _assess_model(),
    )
    return ReferenceModel(FeatureModel(root), executable_bindings())


def build_reference_model() -> ReferenceModel:
    return _reference()


def build_extended_model() -> FeatureModel:
    """Reference model plus illustrative cross-tree constraints.

    NOT part of the published feature diagrams: the constraints exist to
    exercise requires/excludes reasoning on a realistic tree.
    """
    base = build_reference_model().model
    return FeatureModel(
        base.root,
        (
            CrossTreeConstraint(ConstraintKind.REQUIRES, f"{CROSS_VALIDATION}/KFold", f"{STOP}/AutomatedStop"),
            CrossTreeConstraint(
                ConstraintKind.EXCLUDES, f"{SUPERVISED}/OrdinaryLeastSquareRegression", f"{QUALITY}/Accuracy"
            ),
            CrossTreeConstraint(
                ConstraintKind.REQUIRES, f"{ADJUSTMENT}/AutomatedAdjustment", f"{SETTINGS}/Adjustments"
            ),
        ),
    )


# -- golden configurations -------------------------------------------------


def close_upward(model: FeatureModel, paths: Iterable[str]) -> frozenset[str]:
    """The given paths plus all of their ancestors."""
    out: set[str] = set()
    for p in paths:
        out.add(p)
        out.update(model.ancestors(p))
    return frozenset(out)


# Mandatory structure every golden configuration shares.
_COMMON = (
    f"{ROOT}/SelectModelingTechnique/ModelingAssumptions/DataRelatedAssumptions",
    f"{ROOT}/SelectModelingTechnique/ModelingAssumptions/ModelDataType",
    f"{MODEL_ASSESSMENT}/EvaluationCriteria",
    f"{MODEL_ASSESSMENT}/ResultsEvaluation",
    f"{MODEL_ASSESSMENT}/Ranking",
)

_GOLDEN_SELECTIONS: dict[str, tuple[str, ...]] = {
    "supervised-kfold": (
        f"{SUPERVISED}/NaiveBayes",
        f"{SUPERVISED}/DecisionTree/ID3",
        f"{SUPERVISED}/LogisticRegression",
        f"{QUALITY}/Accuracy",
        f"{QUALITY}/Sensitivity",
        f"{QUALITY}/Specificity",
        f"{QUALITY}/ROCCurve",
        f"{CROSS_VALIDATION}/KFold",
        f"{DATA_SPLITTING}/TestTraining",
        f"{STOP}/AutomatedStop",
        f"{SUCCESS}/EaseOfInterpretation",
        f"{SUCCESS}/ProcessingTime",
        f"{INITIAL}/Automated/TechniqueParameter",
        f"{SETTINGS}/Adjustments",
        f"{RATIONALE}/Automated",
        f"{EXECUTION}/Parallel",
        f"{GENERATION}/PostProcessingProcedures",
        f"{DESCRIPTION}/Characteristics",
        f"{DESCRIPTION}/ParameterSettings",
        f"{DESCRIPTION}/Interpretation",
        f"{DESCRIPTION}/Behaviors",
        f"{MODEL_ASSESSMENT}/ResultComments",
        f"{ADJUSTMENT}/AutomatedAdjustment",
        f"{NOTES}/AutomatedNotes",
        f"{ROOT}/SelectModelingTechnique/ModelingAssumptions/ApplicationAreas",
    ),
    "regression-holdout": (
        f"{SUPERVISED}/OrdinaryLeastSquareRegression",
        f"{QUALITY}/MeanAbsoluteError",
        f"{CROSS_VALIDATION}/HoldOut",
        f"{DATA_SPLITTING}/TestValidationTraining",
        f"{STOP}/AutomatedStop",
        f"{SUCCESS}/Deployment",
        f"{INITIAL}/Automated/DefaultSetting",
        f"{SETTINGS}/Adjustments",
        f"{RATIONALE}/Automated",
        f"{EXECUTION}/Sequential",
        f"{DESCRIPTION}/Characteristics",
        f"{DESCRIPTION}/Conclusion",
        f"{ADJUSTMENT}/AutomatedAdjustment",
        f"{NOTES}/AutomatedNotes",
    ),
    "minimal-manual": (
        f"{SUPERVISED}/NaiveBayes",
        f"{QUALITY}/Accuracy",
        f"{CROSS_VALIDATION}/HoldOut",
        f"{DATA_SPLITTING}/TestTraining",
        f"{STOP}/ManualStop",
        f"{SUCCESS}/EaseOfInterpretation",
        f"{INITIAL}/Manual",
        f"{RATIONALE}/Manual",
        f"{EXECUTION}/Sequential",
        f"{ADJUSTMENT}/ManualAdjustment",
        f"{NOTES}/ManualNotes",
    ),
}

_GOLDEN_BINDINGS: dict[str, dict[str, dict]] = {
    "supervised-kfold": {
        QUALITY: {"primary_metric": "Accuracy"},
        f"{CROSS_VALIDATION}/KFold": {"k": 5},
        f"{STOP}/AutomatedStop": {"max_iterations": 3, "min_improvement": 0.0, "patience": 2},
    },
    "regression-holdout": {
        f"{CROSS_VALIDATION}/HoldOut": {"ratio": 0.2},
        f"{DATA_SPLITTING}/TestValidationTraining": {"validation_ratio": 0.25},
        f"{STOP}/AutomatedStop": {"max_iterations": 4, "min_improvement": 0.0, "patience": 2},
    },
    "minimal-manual": {
        f"{CROSS_VALIDATION}/HoldOut": {"ratio": 0.3},
        f"{SUPERVISED}/NaiveBayes": {
            "alpha": 1.0,
            "rationale": "add-one smoothing is the textbook default",
        },
    },
}

#: Bundled dataset (resource name, target column) each golden configuration runs on.
GOLDEN_DATASETS = {
    "supervised-kfold": ("toy_classification.csv", "label"),
    "regression-holdout": ("toy_regression.csv", "y"),
    "minimal-manual": ("toy_classification.csv", "label"),
}


def golden_configurations() -> list[tuple[str, Configuration]]:
    model = build_reference_model().model
    out = []
    for name, picks in _GOLDEN_SELECTIONS.items():
        selected = close_upward(model, _COMMON + picks)
        out.append((name, Configuration(selected, _GOLDEN_BINDINGS[name], name.replace("-", "_"))))
    return out


def golden_configuration(name: str) -> Configuration:
    for n, cfg in golden_configurations():
        if n == name:
            return cfg
    raise KeyError(f"no golden configuration named {name!r}")


def dataset_path(resource: str):
    """Filesystem path of a bundled CSV."""
    return resources.files("crispforge") / "data" / resource


def check_golden() -> dict[str, list[str]]:
    """Validation problems per golden configuration (empty lists when all valid)."""
    model = build_reference_model().model
    return {
        name: [str(v) for v in validate_configuration(model, cfg).violations]
        for name, cfg in golden_configurations()
    }
