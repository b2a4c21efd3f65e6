"""End-to-end acceptance checks, one group per numbered criterion.

Test names carry the criterion number so the terminal summary can print
one PASS/FAIL line per criterion.
"""

import json
import random
from collections import Counter

import numpy as np
import pytest

from crispforge import crispdm, engine, fmdsl
from crispforge.cli import main
from crispforge.errors import DataError
from crispforge.feature_model import (
    Decomposition,
    FeatureModel,
    count_configurations,
    enumerate_configurations,
    feature,
    to_propositional,
    validate_configuration,
)
from crispforge.fmdsl import DslError, parse_configuration, parse_model
from crispforge.provenance import gap_report, import_ledger, normalize, resolve_pointer
from crispforge.variants import learners as L
from crispforge.variants.data import Column, ColumnKind, Dataset, read_csv
from crispforge.variants.metrics import ACCURACY, MAE, ROC_AUC, SENSITIVITY, SPECIFICITY, evaluate_metric
from crispforge.variants.policies import AUTOMATED_STOP, MANUAL_STOP, stop_decision
from crispforge.variants.splitters import SPLITTERS, check_plan, split
from oracles import all_subsets, brute_solutions, brute_valid, lex_key, nb_posteriors, pairwise_auc, random_spec

AND, OR, ALT = Decomposition.AND, Decomposition.OR, Decomposition.ALTERNATIVE
N, C = ColumnKind.NUMERIC, ColumnKind.CATEGORICAL
REF = crispdm.build_reference_model()
REFERENCE_COUNT = 3750439999143936
GOLDENS = sorted(crispdm.GOLDEN_DATASETS)


def golden_dataset(name):
    resource, target = crispdm.GOLDEN_DATASETS[name]
    return read_csv(crispdm.dataset_path(resource), target)


def leaves(*names):
    return [feature(n) for n in names]


# -- 1. feature-model oracle equivalence -------------------------------------------


def test_criterion_01_feature_model_oracle_equivalence():
    rng = random.Random(20240501)
    mismatches = 0
    with_constraints = 0
    for _ in range(200):
        spec = random_spec(rng, max_features=12, max_constraints=3)
        with_constraints += bool(spec.constraints)
        m = spec.to_model()
        assert len(m) <= 12
        oracle = sorted(brute_solutions(spec), key=lex_key)
        enumerated = [c.selected for c in enumerate_configurations(m)]
        formula = to_propositional(m)
        validated, truth_table = [], []
        for s in all_subsets(spec):
            if validate_configuration(m, s).valid:
                validated.append(frozenset(s))
            if formula.satisfied_by(s):
                truth_table.append(frozenset(s))
        oracle_set = set(oracle)
        mismatches += (enumerated != oracle) + (set(validated) != oracle_set) + (set(truth_table) != oracle_set)
        for s in all_subsets(spec):
            assert brute_valid(spec, s) == (frozenset(s) in oracle_set)
    assert with_constraints > 50
    assert mismatches == 0


# -- 2. counting ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "root, expected",
    [
        (feature("R", OR, *leaves("a", "b", "c")), 7),
        (feature("R", ALT, *leaves("a", "b", "c")), 3),
        (feature("R", OR, feature("a", ALT, *leaves("x", "y")), feature("b")), 5),
    ],
)
def test_criterion_02_counting_examples(root, expected):
    assert count_configurations(FeatureModel(root)) == expected


def test_criterion_02_counting_matches_enumeration():
    rng = random.Random(7)
    for _ in range(200):
        m = random_spec(rng, max_features=12, max_constraints=0).to_model()
        assert count_configurations(m) == len(enumerate_configurations(m))


# -- 3. built-in model structure ---------------------------------------------------------


def test_criterion_03_reference_model_structure():
    m = REF.model
    kids = lambda p: [c.rsplit("/", 1)[1] for c in m.children(p)]
    assert m.root.decomposition is AND and len(m.root.children) == 4
    assert not any(c.optional for c in m.root.children)
    td = m.feature(crispdm.TEST_DESIGN)
    assert len(td.children) == 5 and not any(c.optional for c in td.children)
    alternatives = {
        crispdm.DATA_SPLITTING: ["TestTraining", "TestValidationTraining"],
        crispdm.STOP: ["AutomatedStop", "ManualStop"],
        crispdm.INITIAL: ["Manual", "Automated"],
        f"{crispdm.INITIAL}/Automated": ["DefaultSetting", "TechniqueParameter"],
        crispdm.RATIONALE: ["Manual", "Automated"],
        crispdm.EXECUTION: ["Sequential", "Parallel"],
        crispdm.ADJUSTMENT: ["ManualAdjustment", "AutomatedAdjustment"],
        crispdm.NOTES: ["ManualNotes", "AutomatedNotes"],
    }
    for path, names in alternatives.items():
        assert m.feature(path).decomposition is ALT
        assert kids(path) == names
        # exactly-one semantics on the group itself
        base = {p for p in crispdm.golden_configuration("supervised-kfold").selected}
        if path in base:
            both = base | {f"{path}/{n}" for n in names}
            assert not validate_configuration(m, crispdm.close_upward(m, both)).valid
    assert sorted(kids(crispdm.QUALITY)) == sorted(
        ["Sensitivity", "Accuracy", "Specificity", "ROCCurve", "MeanAbsoluteError"]
    )


def test_criterion_03_round_trip_and_count():
    m = REF.model
    text = fmdsl.serialize_model(m)
    assert parse_model(text) == m
    assert fmdsl.serialize_model(parse_model(text)) == text
    assert count_configurations(m) == REFERENCE_COUNT


# -- 4. metrics ------------------------------------------------------------------------


def test_criterion_04_confusion_example():
    tp, tn, fp, fn = 3, 4, 2, 1
    truth = [1] * tp + [0] * tn + [0] * fp + [1] * fn
    pred = [1] * tp + [0] * tn + [1] * fp + [0] * fn
    assert evaluate_metric(ACCURACY, truth, pred, 1).value == pytest.approx(0.7, abs=1e-9)
    assert evaluate_metric(SENSITIVITY, truth, pred, 1).value == pytest.approx(0.75, abs=1e-9)
    assert evaluate_metric(SPECIFICITY, truth, pred, 1).value == pytest.approx(0.6667, abs=1e-4)
    assert evaluate_metric(SPECIFICITY, truth, pred, 1).value == pytest.approx(4 / 6, abs=1e-9)
    y = [0.5, 2.0, -3.25]
    assert evaluate_metric(MAE, y, y).value == 0


def test_criterion_04_auc_against_pairwise_oracle():
    rng = random.Random(99)
    checked = 0
    for _ in range(100):
        n = rng.randint(2, 40)
        labels = [rng.randint(0, 1) for _ in range(n)]
        labels[0], labels[1] = 0, 1
        # coarse grid so ties actually occur
        scores = [rng.randint(0, 10) / 10 for _ in range(n)]
        assert evaluate_metric(ROC_AUC, labels, scores, 1).value == pairwise_auc(labels, scores, 1)
        checked += 1
        distinct = rng.sample(range(10 * n), n)
        fwd = evaluate_metric(ROC_AUC, labels, distinct, 1).value
        back = evaluate_metric(ROC_AUC, labels, [-s for s in distinct], 1).value
        assert fwd + back == pytest.approx(1.0, abs=1e-12)
        assert fwd == pairwise_auc(labels, distinct, 1)
    assert checked == 100


# -- 5. splits ---------------------------------------------------------------------------


def split_params(method, n, rng):
    if method == "split.kfold":
        return {"k": rng.randint(2, min(n, 10))}
    if method == "split.systematic":
        return {"step": rng.randint(2, max(2, n // 2))}
    if method == "split.bootstrap":
        return {"resamples": rng.randint(1, 2 * n)}
    return {"ratio": rng.uniform(0.15, 0.85)}


def test_criterion_05_split_properties():
    rng = random.Random(5)
    methods = sorted(SPLITTERS)
    produced = Counter()
    for trial in range(1000):
        method = methods[trial % len(methods)]
        n = rng.randint(6, 80)
        labels = [rng.choice("abc") for _ in range(n)]
        ds = Dataset((Column("x", N), Column("y", C)), [(float(i), lab) for i, lab in enumerate(labels)], "y")
        params = split_params(method, n, rng)
        seed = rng.getrandbits(63)
        try:
            plan = split(ds, method, params, seed)
        except DataError as err:
            assert err.code in ("EMPTY_SPLIT", "STRATUM_TOO_SMALL")
            continue
        produced[method] += 1
        assert check_plan(plan, n) == []
        if plan.folds is not None:
            sizes = [len(f) for f in plan.folds]
            assert max(sizes) - min(sizes) <= 1
        if method == "split.stratified":
            test = Counter(ds.labels(plan.part("TEST")))
            for cls, size in Counter(labels).items():
                assert abs(test[cls] - size * params["ratio"]) <= 1
        assert split(ds, method, params, seed) == plan
    assert sum(produced.values()) >= 900
    assert set(produced) == set(methods)


# -- 6. learners ---------------------------------------------------------------------------


def test_criterion_06_ols_recovers_line():
    ds = Dataset((Column("x", N), Column("y", N)), [(float(x), 2.0 * x + 1.0) for x in range(5)], "y")
    fitted = L.fit("ols", ds)
    (slope,), intercept = fitted.state["coefficients"], fitted.state["intercept"]
    assert abs(slope - 2) <= 1e-9 and abs(intercept - 1) <= 1e-9


def test_criterion_06_naive_bayes_posterior_ordering():
    ds = read_csv(crispdm.dataset_path("nb_toy.csv"), "play")
    assert len(ds.rows) == 4
    fitted = L.fit("nb.gaussian", ds, {"alpha": 1.0})
    rows = [list(r) for r in ds.rows]
    for x in [("sunny", "no"), ("sunny", "yes"), ("rainy", "yes"), ("rainy", "no")]:
        oracle = nb_posteriors(rows, 2, x)
        probs = L.predict_proba(fitted, [x])[0]
        assert sorted(oracle, key=oracle.get) == sorted(probs, key=probs.get)


def test_criterion_06_logreg_separable():
    rng = np.random.default_rng(2024)
    X = rng.uniform(-1, 1, size=(200, 2))
    rows = [(float(a), float(b), "pos" if 2 * a - b > 0 else "neg") for a, b in X]
    ds = Dataset((Column("a", N), Column("b", N), Column("y", C)), rows, "y")
    fitted = L.fit("logreg", ds, seed=0)
    pred = L.predict(fitted, ds.features()).labels
    assert evaluate_metric(ACCURACY, ds.labels(), pred).value >= 0.95


# -- 7. sequential / parallel ----------------------------------------------------------------


def triples(ledger):
    return [
        (it["index"], m["model_id"], metric, score["value"])
        for it in ledger.iterations
        for m in it["models"]
        for metric, score in sorted(m["scores"].items())
    ]


@pytest.mark.parametrize("name", GOLDENS)
def test_criterion_07_execution_modes_agree(name):
    cfg, ds = crispdm.golden_configuration(name), golden_dataset(name)
    for seed in range(5):
        seq = engine.run(REF, cfg, ds, seed, agent="t", mode=engine.ExecutionMode.SEQUENTIAL)
        par = engine.run(REF, cfg, ds, seed, agent="t", mode=engine.ExecutionMode.PARALLEL)
        assert seq.status != "FAILED"
        assert triples(seq) and triples(seq) == triples(par)


# -- 8. end-to-end determinism ------------------------------------------------------------------


def canonical(path):
    return json.dumps(normalize(path.read_text()), sort_keys=True, indent=2)


def test_criterion_08_end_to_end_determinism(tmp_path, capsys):
    cfg = tmp_path / "supervised-kfold.cfg"
    cfg.write_text(fmdsl.serialize_configuration(crispdm.golden_configuration("supervised-kfold")))
    data = str(crispdm.dataset_path("toy_classification.csv"))
    outs = []
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        out = tmp_path / d / "run.ledger.json"
        code = main(["run", "--config", str(cfg), "--data", data, "--target", "label", "--seed", "42", "--out", str(out)])
        assert code == 0
        outs.append(out)
    capsys.readouterr()
    ledger = import_ledger(outs[0].read_text())
    assert ledger.status == "COMPLETED" and ledger.dataset["rows"] == 150
    ranks = [r["rank"] for r in ledger.final_ranking]
    assert ranks and ranks[0] == 1 and ranks == sorted(ranks)
    assert canonical(outs[0]) == canonical(outs[1])


# -- 9. iteration and stop ----------------------------------------------------------------------


def test_criterion_09_stop_examples():
    assert str(stop_decision(AUTOMATED_STOP, {"min_improvement": 0.01, "patience": 2, "max_iterations": 10},
                             [0.7, 0.71, 0.711])) == "STOP(no-improvement)"
    for budget in range(1, 6):
        history = [0.1 * (i + 1) for i in range(budget)]
        params = {"max_iterations": budget, "patience": 100}
        assert str(stop_decision(AUTOMATED_STOP, params, history)) == "STOP(budget)"
        assert str(stop_decision(AUTOMATED_STOP, params, history[:-1])) == "CONTINUE"
    for history in ([], [0.5], [0.1, 0.9, 0.2]):
        assert str(stop_decision(MANUAL_STOP, {}, history)) == "STOP(AWAITING_OPERATOR)"


def test_criterion_09_engine_honors_budget():
    ds = golden_dataset("supervised-kfold")
    cfg = crispdm.golden_configuration("supervised-kfold")
    for budget in (1, 2, 3):
        led = engine.run(REF, cfg.with_binding(f"{crispdm.STOP}/AutomatedStop", "max_iterations", budget), ds, 0, agent="t")
        assert len(led.iterations) <= budget


def test_criterion_09_manual_resume_matches_automated(tmp_path, capsys):
    budget, seed = 3, 17
    base = crispdm.golden_configuration("supervised-kfold")
    auto = base.with_binding(f"{crispdm.STOP}/AutomatedStop", "max_iterations", budget)
    auto = auto.with_binding(f"{crispdm.STOP}/AutomatedStop", "patience", 100)
    selected = (set(base.selected) - {f"{crispdm.STOP}/AutomatedStop"}) | {f"{crispdm.STOP}/ManualStop"}
    manual = base.with_selected(selected)
    manual = type(manual)(manual.selected, {p: kv for p, kv in manual.bindings.items()
                                            if p != f"{crispdm.STOP}/AutomatedStop"}, manual.name)
    ds = golden_dataset("supervised-kfold")
    uninterrupted = engine.run(REF, auto, ds, seed, agent="t")
    assert len(uninterrupted.iterations) == budget

    cfg = tmp_path / "manual.cfg"
    cfg.write_text(fmdsl.serialize_configuration(manual))
    out = tmp_path / "manual.ledger.json"
    data = str(crispdm.dataset_path("toy_classification.csv"))
    argv = ["run", "--config", str(cfg), "--data", data, "--target", "label", "--seed", str(seed)]
    assert main([*argv, "--out", str(out)]) == 0
    first = import_ledger(out.read_text())
    assert len(first.iterations) == 1 and first.status == "AWAITING_OPERATOR"
    while len(import_ledger(out.read_text()).iterations) < budget:
        assert main([*argv, "--resume", str(out)]) == 0
    capsys.readouterr()
    resumed = import_ledger(out.read_text())
    assert len(resumed.iterations) == len(uninterrupted.iterations)
    view = lambda led: [[(m["model_id"], m["params"], m["scores"]) for m in it["models"]] for it in led.iterations]
    assert view(resumed) == view(uninterrupted)


# -- 10. gap report -------------------------------------------------------------------------------


def test_criterion_10_gap_report():
    full = engine.run(REF, crispdm.golden_configuration("supervised-kfold"), golden_dataset("supervised-kfold"), 0, agent="t")
    report = gap_report(full)
    doc = full.to_dict()
    for oid in ("ii", "iv", "v", "vi", "viii", "ix", "x"):
        item = report.item(oid)
        assert item.exercised and item.evidence, oid
        for ptr in item.evidence:
            resolve_pointer(doc, ptr)
    minimal = engine.run(REF, crispdm.golden_configuration("minimal-manual"), golden_dataset("minimal-manual"), 0, agent="t")
    report = gap_report(minimal)
    assert not report.item("v").exercised and not report.item("x").exercised


# -- 11. DSL robustness ----------------------------------------------------------------------------

ALPHABET = "{}=/\"-.0123456789 \n\tabcxyz_$#" + "".join(chr(c) for c in (0xE9, 0x3BB))
TOKENS = ["model", "config", "select", "set", "constraint", "requires", "excludes", "and", "or", "alt",
          "mandatory", "optional", "{", "}", "=", "true", "false", '"', "M", "M/a", "1.5", "-3", "\n"]


def mutate(text, rng):
    ops = rng.randint(1, 4)
    for _ in range(ops):
        kind = rng.randrange(5)
        pos = rng.randint(0, len(text))
        if kind == 0 and text:  # delete a run
            text = text[:pos] + text[pos + rng.randint(1, 8):]
        elif kind == 1:  # insert a character
            text = text[:pos] + rng.choice(ALPHABET) + text[pos:]
        elif kind == 2:  # insert a token
            text = text[:pos] + " " + rng.choice(TOKENS) + " " + text[pos:]
        elif kind == 3 and text:  # swap two chunks
            a, b = sorted(rng.sample(range(len(text) + 1), 2)) if len(text) > 1 else (0, 0)
            text = text[:a] + text[b:] + text[a:b]
        else:  # truncate
            text = text[:pos]
    return text


def span_ok(text, err):
    lines = text.split("\n")
    s = err.span
    return s is not None and 1 <= s.line <= len(lines) and 1 <= s.column <= len(lines[s.line - 1]) + 1


def test_criterion_11_dsl_fuzzing():
    rng = random.Random(11)
    small = fmdsl.serialize_model(parse_model(
        "model M M { and { mandatory a { alt p q } optional b { or x y z } } } "
        "constraint M/b requires M/a/p constraint M/b/x excludes M/a/q"
    ))
    seeds = [
        (parse_model, small),
        (parse_model, "model M M { alt a b }"),
        (parse_model, fmdsl.serialize_model(crispdm.build_extended_model())),
        (parse_configuration, 'config c select M select M/a set M/a k = 3 set M/a s = "x" set M b = true'),
        (parse_configuration, fmdsl.serialize_configuration(crispdm.golden_configuration("supervised-kfold"))),
    ]
    outcomes = Counter()
    for i in range(10_000):
        parse, seed_text = seeds[i % len(seeds)]
        if len(seed_text) > 400:
            # keep long inputs focused on a window so runtime stays small
            start = rng.randrange(len(seed_text) - 200)
            seed_text = seed_text[:start + 200] if rng.random() < 0.5 else seed_text
        text = mutate(seed_text, rng)
        try:
            parse(text)
        except DslError as err:
            outcomes[err.code] += 1
            assert span_ok(text, err), (text, err)
        else:
            outcomes["ok"] += 1
    assert sum(outcomes.values()) == 10_000
    assert outcomes["PARSE_ERROR"] > 0
