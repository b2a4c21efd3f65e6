import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crispforge.errors import CapacityError, ModelError
from crispforge.feature_model import (
    ClauseKind,
    Configuration,
    ConstraintKind,
    CrossTreeConstraint,
    Decomposition,
    FeatureModel,
    Rule,
    count_configurations,
    enumerate_configurations,
    feature,
    find_dead_features,
    to_propositional,
    validate_configuration,
)
from oracles import all_subsets, brute_solutions, brute_valid, lex_key, random_spec

AND, OR, ALT = Decomposition.AND, Decomposition.OR, Decomposition.ALTERNATIVE


def leaves(*names, optional=False):
    return [feature(n, optional=optional) for n in names]


def rules(report):
    return [v.rule for v in report.violations]


# -- validation ------------------------------------------------------------------


def test_missing_mandatory_child():
    m = FeatureModel(feature("R", AND, feature("m")))
    report = validate_configuration(m, {"R"})
    assert not report.valid
    assert [(v.rule, v.subject) for v in report.violations] == [(Rule.MANDATORY_MISSING, "R/m")]


def test_alternative_with_two_selected():
    m = FeatureModel(feature("R", ALT, *leaves("a", "b", "c")))
    report = validate_configuration(m, {"R", "R/a", "R/b"})
    assert rules(report) == [Rule.ALT_NOT_ONE]
    assert report.violations[0].subject == "R"


def test_excludes_broken():
    m = FeatureModel(
        feature("R", OR, *leaves("a", "b", "c")),
        (CrossTreeConstraint(ConstraintKind.EXCLUDES, "R/a", "R/b"),),
    )
    assert rules(validate_configuration(m, {"R", "R/a", "R/b"})) == [Rule.EXCLUDES_BROKEN]


def test_other_rules_reported():
    m = FeatureModel(
        feature("R", AND, feature("o", OR, *leaves("x", "y"), optional=True), feature("q", optional=True)),
        (CrossTreeConstraint(ConstraintKind.REQUIRES, "R/q", "R/o"),),
    )
    assert rules(validate_configuration(m, {"R/o"})) == [Rule.ROOT_MISSING, Rule.ORPHAN, Rule.OR_EMPTY]
    assert Rule.ORPHAN in rules(validate_configuration(m, {"R", "R/o/x"}))
    assert rules(validate_configuration(m, {"R", "R/q"})) == [Rule.REQUIRES_BROKEN]
    assert rules(validate_configuration(m, {"R", "nope"})) == [Rule.UNKNOWN_FEATURE]
    assert validate_configuration(m, {"R"}).valid


def test_violations_sorted_and_serialisable():
    m = FeatureModel(feature("R", AND, *leaves("b", "a")))
    report = validate_configuration(m, Configuration({"R"}))
    assert [v.subject for v in report.violations] == ["R/a", "R/b"]
    assert report.to_dict()["valid"] is False


# -- model invariants --------------------------------------------------------------


@pytest.mark.parametrize(
    "build, code",
    [
        (lambda: FeatureModel(feature("R", OR, feature("a"))), "ARITY"),
        (lambda: FeatureModel(feature("R", ALT, feature("a"))), "ARITY"),
        (lambda: FeatureModel(feature("R", AND, feature("a"), feature("a"))), "DUPLICATE_SIBLING"),
        (lambda: FeatureModel(feature("R", AND, feature("bad-name"))), "BAD_NAME"),
        (lambda: FeatureModel(feature("R", AND, feature("or"))), "BAD_NAME"),
        (
            lambda: FeatureModel(
                feature("R", AND, feature("a")), (CrossTreeConstraint(ConstraintKind.REQUIRES, "R/a", "R/zz"),)
            ),
            "UNKNOWN_PATH",
        ),
        (
            lambda: FeatureModel(
                feature("R", AND, feature("a")), (CrossTreeConstraint(ConstraintKind.EXCLUDES, "R/a", "R/a"),)
            ),
            "SELF_CONSTRAINT",
        ),
    ],
)
def test_ill_formed_models_rejected(build, code):
    with pytest.raises(ModelError) as info:
        build()
    assert info.value.code == code


def test_group_flags_are_ignored():
    a = FeatureModel(feature("R", OR, feature("a", optional=True), feature("b")))
    b = FeatureModel(feature("R", OR, feature("a"), feature("b")))
    assert a == b


def test_navigation():
    m = FeatureModel(feature("R", AND, feature("a", ALT, *leaves("x", "y"))))
    assert m.paths == ("R", "R/a", "R/a/x", "R/a/y")
    assert m.parent("R/a/x") == "R/a"
    assert m.children("R/a") == ("R/a/x", "R/a/y")
    assert list(m.ancestors("R/a/y")) == ["R/a", "R"]
    assert len(m) == 4 and "R/a" in m


# -- counting and enumeration --------------------------------------------------------


@pytest.mark.parametrize(
    "root, expected",
    [
        (feature("R", OR, *leaves("a", "b", "c")), 7),
        (feature("R", ALT, *leaves("a", "b", "c")), 3),
        (feature("R", AND, feature("m"), feature("o", optional=True)), 2),
        (feature("R", OR, feature("a", ALT, *leaves("x", "y")), feature("b")), 5),
        (feature("R"), 1),
    ],
)
def test_counts(root, expected):
    m = FeatureModel(root)
    assert count_configurations(m) == expected
    assert len(enumerate_configurations(m)) == expected


def test_or_count_matches_subset_oracle():
    kids = ["a", "b", "c"]
    nonempty = [s for r in range(1, 4) for s in itertools.combinations(kids, r)]
    assert count_configurations(FeatureModel(feature("R", OR, *leaves(*kids)))) == len(nonempty)


def test_and_with_optional_enumeration():
    m = FeatureModel(feature("R", AND, feature("m"), feature("o", optional=True)))
    assert [c.selected for c in enumerate_configurations(m)] == [
        frozenset({"R", "R/m"}),
        frozenset({"R", "R/m", "R/o"}),
    ]


def test_enumeration_capacity_and_limit():
    big = FeatureModel(feature("R", AND, *leaves(*[f"f{i}" for i in range(30)], optional=True)))
    with pytest.raises(CapacityError) as info:
        enumerate_configurations(big)
    assert info.value.exit_code == 4
    assert len(enumerate_configurations(big, limit=5)) == 5
    assert count_configurations(big) == 2**30


# -- dead features -----------------------------------------------------------------


def test_dead_by_exclusion_of_mandatory():
    m = FeatureModel(
        feature("R", AND, feature("m"), feature("a", optional=True)),
        (CrossTreeConstraint(ConstraintKind.EXCLUDES, "R/a", "R/m"),),
    )
    assert find_dead_features(m) == {"R/a"}


def test_dead_by_requires_within_alternative():
    m = FeatureModel(
        feature("R", ALT, *leaves("a", "b")), (CrossTreeConstraint(ConstraintKind.REQUIRES, "R/a", "R/b"),)
    )
    assert find_dead_features(m) == {"R/a"}


def test_no_constraints_no_dead_features():
    rng = random.Random(5)
    for _ in range(50):
        spec = random_spec(rng, max_constraints=0)
        m = spec.to_model()
        live = set().union(*brute_solutions(spec))
        assert find_dead_features(m) == set() == set(spec.paths) - live


# -- propositional translation --------------------------------------------------------


def test_leaf_formula():
    assert str(to_propositional(FeatureModel(feature("R")))) == "R"


def test_alternative_formula():
    f = to_propositional(FeatureModel(feature("R", ALT, *leaves("a", "b"))))
    assert [c.kind for c in f.clauses] == [
        ClauseKind.FACT, ClauseKind.IMPLIES, ClauseKind.IMPLIES, ClauseKind.IMPLIES_ANY, ClauseKind.NAND,
    ]
    assert str(f) == "R ∧ (R/a → R) ∧ (R/b → R) ∧ (R → (R/a ∨ R/b)) ∧ ¬(R/a ∧ R/b)"
    universe = ["R", "R/a", "R/b"]
    solutions = [
        set(s) for r in range(4) for s in itertools.combinations(universe, r) if f.satisfied_by(s)
    ]
    assert solutions == [{"R", "R/a"}, {"R", "R/b"}]


def test_cnf_agrees_with_clauses():
    rng = random.Random(11)
    for _ in range(30):
        spec = random_spec(rng, max_features=8)
        f = to_propositional(spec.to_model())
        for s in all_subsets(spec):
            cnf_ok = all(any((v in s) == pos for v, pos in clause) for clause in f.cnf())
            assert cnf_ok == f.satisfied_by(s)


# -- property: oracle equivalence ------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_models_agree_with_brute_force(seed):
    spec = random_spec(random.Random(seed))
    m = spec.to_model()
    oracle = sorted(brute_solutions(spec), key=lex_key)
    assert [c.selected for c in enumerate_configurations(m)] == oracle
    f = to_propositional(m)
    for s in all_subsets(spec):
        expected = brute_valid(spec, s)
        assert validate_configuration(m, s).valid == expected
        assert f.satisfied_by(s) == expected
    if not spec.constraints:
        assert count_configurations(m) == len(oracle)
    else:
        assert find_dead_features(m) == set(spec.paths) - set().union(*oracle) if oracle else set(spec.paths)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=6))
def test_limit_is_a_prefix(seed, limit):
    m = random_spec(random.Random(seed), max_features=9).to_model()
    full = enumerate_configurations(m)
    assert enumerate_configurations(m, limit=limit) == full[:limit]
