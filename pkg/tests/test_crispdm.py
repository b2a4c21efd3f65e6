import pytest

from crispforge import crispdm
from crispforge.crispdm import NO_VARIANT
from crispforge.feature_model import Decomposition, Rule, count_configurations, validate_configuration

REFERENCE_COUNT = 3750439999143936


@pytest.fixture(scope="module")
def ref():
    return crispdm.build_reference_model()


def names(model, path):
    return [c.rsplit("/", 1)[1] for c in model.children(path)]


def hand_count(f) -> int:
    """Product rule written out independently of the library."""
    kids = [hand_count(c) for c in f.children]
    if f.decomposition is Decomposition.LEAF:
        return 1
    if f.decomposition is Decomposition.AND:
        out = 1
        for c, k in zip(f.children, kids):
            out *= k + 1 if c.optional else k
        return out
    if f.decomposition is Decomposition.OR:
        out = 1
        for k in kids:
            out *= k + 1
        return out - 1
    return sum(kids)


def test_root_has_four_mandatory_tasks(ref):
    m = ref.model
    assert names(m, "Modeling") == ["SelectModelingTechnique", "TestDesign", "BuildModel", "AssessModel"]
    assert m.root.decomposition is Decomposition.AND
    assert not any(c.optional for c in m.root.children)


def test_test_design_has_five_mandatory_children(ref):
    td = ref.model.feature(crispdm.TEST_DESIGN)
    assert len(td.children) == 5 and not any(c.optional for c in td.children)


@pytest.mark.parametrize(
    "path, children",
    [
        (crispdm.DATA_SPLITTING, ["TestTraining", "TestValidationTraining"]),
        (crispdm.STOP, ["AutomatedStop", "ManualStop"]),
        (crispdm.INITIAL, ["Manual", "Automated"]),
        (f"{crispdm.INITIAL}/Automated", ["DefaultSetting", "TechniqueParameter"]),
        (crispdm.RATIONALE, ["Manual", "Automated"]),
        (crispdm.EXECUTION, ["Sequential", "Parallel"]),
        (crispdm.ADJUSTMENT, ["ManualAdjustment", "AutomatedAdjustment"]),
        (crispdm.NOTES, ["ManualNotes", "AutomatedNotes"]),
    ],
)
def test_alternative_groups(ref, path, children):
    assert ref.model.feature(path).decomposition is Decomposition.ALTERNATIVE
    assert names(ref.model, path) == children


def test_quality_criteria_are_the_five_metrics(ref):
    assert ref.model.feature(crispdm.QUALITY).decomposition is Decomposition.OR
    assert sorted(names(ref.model, crispdm.QUALITY)) == sorted(
        ["Sensitivity", "Accuracy", "Specificity", "ROCCurve", "MeanAbsoluteError"]
    )


def test_technique_vocabulary(ref):
    m = ref.model
    assert names(m, crispdm.SUPERVISED) == [
        "DecisionTree", "NaiveBayes", "OrdinaryLeastSquareRegression", "LogisticRegression",
        "NeuralNetworks", "SVM", "EnsembleMethods",
    ]
    assert names(m, f"{crispdm.SUPERVISED}/DecisionTree") == ["ID3", "C50"]
    assert "Modeling/SelectModelingTechnique/ModelingTechnique/DataMining/AssociationRules/AprioriAlgorithm" in m
    assert names(m, f"{crispdm.TECHNIQUE}/MachineLearning") == ["Supervised", "Unsupervised", "ReinforcedLearning"]


def test_reference_count(ref):
    m = ref.model
    assert len(m) == 93
    assert not m.constraints
    assert count_configurations(m) == REFERENCE_COUNT == hand_count(m.root)
    per_task = [hand_count(c) for c in m.root.children]
    assert per_task == [344057, 443548, 3072, 8]


def test_extended_model_is_separate(ref):
    ext = crispdm.build_extended_model()
    assert ext.root == ref.model.root
    assert len(ext.constraints) == 3
    assert not ref.model.constraints


def test_registry(ref):
    assert ref.variant(f"{crispdm.CROSS_VALIDATION}/KFold") == "split.kfold"
    assert ref.variant(f"{crispdm.SAMPLING}/DUPLEX") == NO_VARIANT
    assert ref.variant(f"{crispdm.SAMPLING}/CADEX") == NO_VARIANT
    for path in crispdm.executable_bindings():
        assert path in ref.model


@pytest.mark.parametrize("name", ["supervised-kfold", "regression-holdout", "minimal-manual"])
def test_golden_configuration_validates(ref, name):
    cfg = crispdm.golden_configuration(name)
    assert validate_configuration(ref.model, cfg).valid
    for p in cfg.selected:
        assert ref.variant(p) != NO_VARIANT


@pytest.mark.parametrize("name", ["supervised-kfold", "regression-holdout", "minimal-manual"])
def test_dropping_quality_criteria_breaks_validation(ref, name):
    cfg = crispdm.golden_configuration(name)
    broken = cfg.with_selected(p for p in cfg.selected if not p.startswith(crispdm.QUALITY))
    report = validate_configuration(ref.model, broken)
    assert (Rule.MANDATORY_MISSING, crispdm.QUALITY) in [(v.rule, v.subject) for v in report.violations]


def test_supervised_kfold_is_automated():
    cfg = crispdm.golden_configuration("supervised-kfold")
    assert f"{crispdm.STOP}/AutomatedStop" in cfg.selected
    assert f"{crispdm.ADJUSTMENT}/AutomatedAdjustment" in cfg.selected


def test_check_golden_and_datasets():
    assert crispdm.check_golden() == {n: [] for n in crispdm.GOLDEN_DATASETS}
    for resource, _ in crispdm.GOLDEN_DATASETS.values():
        assert crispdm.dataset_path(resource).is_file()
