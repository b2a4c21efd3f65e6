"""Command-line interface.

Exit codes: 0 success, 1 configuration/validation failure or usage error,
2 parse error, 3 runtime (data/learner) error, 4 capacity error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, crispdm, engine, fmdsl, provenance
from .errors import ConfigError, CrispError, DataError
from .feature_model import (
    FeatureModel,
    count_configurations,
    enumerate_configurations,
    find_dead_features,
    to_propositional,
    validate_configuration,
)
from .variants.data import read_csv

EXIT_OK = 0
EXIT_USAGE = 1


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("UNREADABLE", f"{path}: {err.strerror or err}") from None


def _model(path: str | None) -> tuple[FeatureModel, str]:
    if path is None:
        model = crispdm.build_reference_model().model
        return model, model.root.name
    model = fmdsl.parse_model(_read(path))
    return model, model.root.name


def _emit(data, as_json: bool, text: str) -> None:
    if as_json:
        print(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False))
    else:
        print(text)


# -- fm ---------------------------------------------------------------------------


def cmd_fm_validate(args) -> int:
    model, _ = _model(args.model)
    config = fmdsl.parse_configuration(_read(args.config))
    report = validate_configuration(model, config)
    text = "valid" if report.valid else "invalid\n" + "\n".join(f"  {v}" for v in report.violations)
    _emit(report.to_dict(), args.json, text)
    return EXIT_OK if report.valid else 1


def cmd_fm_enumerate(args) -> int:
    model, _ = _model(args.model)
    configs = enumerate_configurations(model, args.limit)
    rows = [sorted(c.selected) for c in configs]
    _emit({"count": len(rows), "configurations": rows}, args.json,
          "\n".join(" ".join(r) for r in rows))
    return EXIT_OK


def cmd_fm_count(args) -> int:
    model, _ = _model(args.model)
    n = count_configurations(model)
    _emit({"count": n}, args.json, str(n))
    return EXIT_OK


def cmd_fm_dead(args) -> int:
    model, _ = _model(args.model)
    dead = [p for p in model.paths if p in find_dead_features(model)]
    _emit({"dead": dead}, args.json, "\n".join(dead) if dead else "no dead features")
    return EXIT_OK


def cmd_fm_formula(args) -> int:
    model, _ = _model(args.model)
    formula = to_propositional(model)
    if args.json:
        _emit(
            {
                "variables": list(formula.variables),
                "clauses": [c.render(ascii=True) for c in formula.clauses],
                "cnf": [[("" if pos else "!") + v for v, pos in d] for d in formula.cnf()],
            },
            True,
            "",
        )
    else:
        print("\n".join(c.render(args.ascii) for c in formula.clauses))
    return EXIT_OK


# -- crispdm ----------------------------------------------------------------------


def cmd_crispdm_export(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    ref = crispdm.build_reference_model().model
    files = {
        "crispdm.fm": fmdsl.serialize_model(ref, "CrispDM"),
        "crispdm-extended.fm": fmdsl.serialize_model(crispdm.build_extended_model(), "CrispDMExtended"),
    }
    for name, cfg in crispdm.golden_configurations():
        files[f"{name}.cfg"] = fmdsl.serialize_configuration(cfg)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        written.append(str(out / name))
    print("\n".join(written))
    return EXIT_OK


# -- run / report / gap -------------------------------------------------------------


def _load_ledger(path: str) -> provenance.RunLedger:
    return provenance.import_ledger(_read(path))


def cmd_run(args) -> int:
    config = fmdsl.parse_configuration(_read(args.config))
    try:
        dataset = read_csv(args.data, args.target)
    except OSError as err:
        raise DataError("BAD_DATASET", f"{args.data}: {err.strerror or err}") from None
    resume = _load_ledger(args.resume) if args.resume else None
    mode = None
    if args.execution:
        mode = engine.ExecutionMode(args.execution.upper())
    ledger = engine.run(
        crispdm.build_reference_model(), config, dataset, args.seed, resume=resume, mode=mode
    )
    out = args.out or (args.resume if args.resume else f"{ledger.run_id}.ledger.json")
    ledger = ledger.with_export(Path(out).name)
    Path(out).write_text(provenance.export_ledger(ledger), encoding="utf-8")
    print(provenance.ranking_table(ledger))
    print(f"ledger: {out}", file=sys.stderr)
    if ledger.status == "FAILED":
        err = ledger.error or {}
        print(f"error: {err.get('code')}: {err.get('message')}", file=sys.stderr)
        return int(err.get("exit_code", 3))
    if ledger.status == "AWAITING_OPERATOR":
        print(f"awaiting operator; continue with --resume {out}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    ledger = _load_ledger(args.ledger)
    if args.json:
        _emit({"status": ledger.status, "final_ranking": ledger.final_ranking,
               "iterations": len(ledger.iterations)}, True, "")
    else:
        print(provenance.summary(ledger))
    return EXIT_OK


def cmd_gap(args) -> int:
    report = provenance.gap_report(_load_ledger(args.ledger))
    _emit(report.to_dict(), args.json, report.to_text())
    return EXIT_OK


# -- wiring -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crispforge", description="Feature-model toolkit and configurable modeling pipeline.")
    p.add_argument("--version", action="version", version=f"crispforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fm = sub.add_parser("fm", help="feature-model analyses")
    fsub = fm.add_subparsers(dest="fm_command", required=True, parser_class=_Parser)

    def model_cmd(name: str, fn, help: str):
        sp = fsub.add_parser(name, help=help)
        sp.add_argument("--model", help="model file (default: built-in reference model)")
        sp.add_argument("--json", action="store_true")
        sp.set_defaults(func=fn)
        return sp

    v = model_cmd("validate", cmd_fm_validate, "validate a configuration")
    v.add_argument("--config", required=True)
    e = model_cmd("enumerate", cmd_fm_enumerate, "list valid configurations")
    e.add_argument("--limit", type=_positive_int)
    model_cmd("count", cmd_fm_count, "count valid configurations")
    model_cmd("dead", cmd_fm_dead, "list dead features")
    f = model_cmd("formula", cmd_fm_formula, "propositional translation")
    f.add_argument("--ascii", action="store_true", help="ASCII connectives")

    cd = sub.add_parser("crispdm", help="built-in reference model")
    csub = cd.add_subparsers(dest="crispdm_command", required=True, parser_class=_Parser)
    ex = csub.add_parser("export", help="write the built-in model and golden configurations")
    ex.add_argument("--out", default=".")
    ex.set_defaults(func=cmd_crispdm_export)

    r = sub.add_parser("run", help="execute the pipeline")
    r.add_argument("--config", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--target", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.add_argument("--resume")
    r.add_argument("--execution", choices=["sequential", "parallel"],
                   help="override the configured execution mode")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="summarise a run ledger")
    rep.add_argument("--ledger", required=True)
    rep.add_argument("--json", action="store_true")
    rep.set_defaults(func=cmd_report)

    g = sub.add_parser("gap", help="automation-opportunity gap report")
    g.add_argument("--ledger", required=True)
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_gap)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CrispError as err:
        print(f"error: {err.code}: {err.message}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
