"""Append-only run ledger, JSON interchange and the automation gap report."""

from __future__ import annotations

import copy
import dataclasses
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping

from .errors import ConfigError, CrispError

LEDGER_VERSION = 1


class LedgerError(CrispError):
    """Malformed ledger document."""

    exit_code = 2


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def provenance_triple(what: str, who: str, when: str) -> dict[str, str]:
    if not (what and who and when):
        raise ConfigError("BAD_PROVENANCE", f"empty provenance field in {(what, who, when)!r}")
    return {"what": what, "who": who, "when": when}


@dataclass(frozen=True)
class RunLedger:
    run_id: str
    tool: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    agent: str = ""
    configuration: Mapping[str, Any] = field(default_factory=dict)
    dataset: Mapping[str, Any] = field(default_factory=dict)
    plan: Mapping[str, Any] = field(default_factory=dict)
    assumptions: list = field(default_factory=list)
    test_design: Mapping[str, Any] = field(default_factory=dict)
    iterations: tuple[dict, ...] = ()
    model_descriptions: Mapping[str, Any] = field(default_factory=dict)
    final_ranking: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    exports: list = field(default_factory=list)
    status: str = "RUNNING"
    stop_reason: str | None = None
    error: Mapping[str, Any] | None = None
    ledger_version: int = LEDGER_VERSION

    def replace(self, **changes: Any) -> "RunLedger":
        return dataclasses.replace(self, **changes)

    def with_provenance(self, step: str, triple: Mapping[str, str]) -> "RunLedger":
        return self.replace(provenance=[*self.provenance, {"step": step, **triple}])

    def with_export(self, path: str, fmt: str = "json") -> "RunLedger":
        return self.replace(exports=[*self.exports, {"path": path, "format": fmt}])

    def to_dict(self) -> dict:
        d = {f.name: copy.deepcopy(getattr(self, f.name)) for f in dataclasses.fields(self)}
        d["iterations"] = list(d["iterations"])
        return d


def new_ledger(run_id: str | None = None, **fields: Any) -> RunLedger:
    return RunLedger(run_id=run_id or uuid.uuid4().hex, **fields)


def append(ledger: RunLedger, entry: Mapping[str, Any]) -> RunLedger:
    """Return ``ledger`` extended with one iteration entry.

    The entry's ``index`` must equal the current iteration count.
    """
    index = entry.get("index")
    if index != len(ledger.iterations):
        raise ConfigError(
            "OUT_OF_ORDER", f"entry index {index!r} but the ledger holds {len(ledger.iterations)} iteration(s)"
        )
    return ledger.replace(iterations=ledger.iterations + (copy.deepcopy(dict(entry)),))


def export_ledger(ledger: RunLedger) -> str:
    return json.dumps(ledger.to_dict(), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def import_ledger(text: str | bytes) -> RunLedger:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise LedgerError("BAD_LEDGER", f"not a JSON document: {err}") from None
    if not isinstance(doc, dict):
        raise LedgerError("BAD_LEDGER", "ledger must be a JSON object")
    if doc.get("ledger_version") != LEDGER_VERSION:
        raise LedgerError("BAD_LEDGER", f"unsupported ledger_version {doc.get('ledger_version')!r}")
    names = {f.name for f in dataclasses.fields(RunLedger)}
    unknown = sorted(set(doc) - names)
    if unknown or "run_id" not in doc:
        raise LedgerError("BAD_LEDGER", f"unexpected or missing fields: {unknown or ['run_id']}")
    if not isinstance(doc.get("iterations", []), list):
        raise LedgerError("BAD_LEDGER", "iterations must be a list")
    doc["iterations"] = tuple(doc.get("iterations", []))
    return RunLedger(**doc)


def normalize(doc: Any) -> Any:
    """Copy of a ledger (object, dict or JSON text) with timestamps and run id blanked."""
    if isinstance(doc, RunLedger):
        doc = doc.to_dict()
    elif isinstance(doc, (str, bytes)):
        doc = json.loads(doc)

    def walk(node: Any) -> Any:
        if isinstance(node, dict):
            return {
                k: ("<when>" if k == "when" else "<run-id>" if k == "run_id" else walk(v))
                for k, v in node.items()
            }
        if isinstance(node, list):
            return [walk(v) for v in node]
        return node

    return walk(doc)


# -- JSON pointers ---------------------------------------------------------------


def pointer(*parts: Any) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def resolve_pointer(doc: Any, ptr: str) -> Any:
    """Follow a JSON pointer; raises KeyError when it does not resolve."""
    if isinstance(doc, RunLedger):
        doc = doc.to_dict()
    if ptr == "":
        return doc
    node = doc
    for raw in ptr.split("/")[1:]:
        key = raw.replace("~1", "/").replace("~0", "~")
        if isinstance(node, list):
            if not key.isdigit() or int(key) >= len(node):
                raise KeyError(ptr)
            node = node[int(key)]
        elif isinstance(node, dict) and key in node:
            node = node[key]
        else:
            raise KeyError(ptr)
    return node


# -- gap report ----------------------------------------------------------------------

OPPORTUNITIES = (
    ("i", "more than one technique family considered"),
    ("ii", "assumption records per technique"),
    ("iii", "input/output data types per model"),
    ("iv", "data splitting, quality and success criteria recorded"),
    ("v", "automated initial parameter settings"),
    ("vi", "rationale for parameter values"),
    ("vii", "ledger exported for interchange"),
    ("viii", "model characteristics and provenance triples"),
    ("ix", "model ranking"),
    ("x", "revised parameter settings"),
)


@dataclass(frozen=True)
class GapItem:
    id: str
    title: str
    exercised: bool
    evidence: tuple[str, ...] = ()


@dataclass(frozen=True)
class GapReport:
    items: tuple[GapItem, ...]

    def item(self, oid: str) -> GapItem:
        return next(i for i in self.items if i.id == oid)

    @property
    def exercised(self) -> list[str]:
        return [i.id for i in self.items if i.exercised]

    def to_dict(self) -> dict:
        return {
            "opportunities": [
                {"id": i.id, "title": i.title, "exercised": i.exercised, "evidence": list(i.evidence)}
                for i in self.items
            ],
            "exercised": len(self.exercised),
            "total": len(self.items),
        }

    def to_text(self) -> str:
        width = max(len(t) for _, t in OPPORTUNITIES)
        lines = [f"{'id':<5} {'opportunity':<{width}}  exercised  evidence"]
        for i in self.items:
            shown = i.evidence[0] if i.evidence else "-"
            if len(i.evidence) > 1:
                shown += f" (+{len(i.evidence) - 1})"
            lines.append(f"{i.id:<5} {i.title:<{width}}  {'yes' if i.exercised else 'no':<9}  {shown}")
        lines.append(f"{len(self.exercised)}/{len(self.items)} exercised")
        return "\n".join(lines)


def _models(doc: dict):
    for i, it in enumerate(doc.get("iterations", [])):
        for j, m in enumerate(it.get("models", [])):
            yield i, j, m


def gap_report(ledger: RunLedger | Mapping[str, Any]) -> GapReport:
    """Score a ledger against the ten automation opportunities."""
    doc = ledger.to_dict() if isinstance(ledger, RunLedger) else dict(ledger)
    plan = doc.get("plan") or {}
    techniques = plan.get("techniques", [])
    ev: dict[str, list[str]] = {oid: [] for oid, _ in OPPORTUNITIES}

    if len({t.get("learner") for t in techniques}) > 1:
        ev["i"] = [pointer("plan", "techniques", k) for k in range(len(techniques))]

    records = doc.get("assumptions") or []
    covered = {r.get("model_id") for r in records}
    if techniques and all(t.get("model_id") in covered for t in techniques):
        ev["ii"] = [pointer("assumptions", k) for k in range(len(records))]

    built = [(i, j, m) for i, j, m in _models(doc)]
    ev["iii"] = [pointer("iterations", i, "models", j, "io_types") for i, j, m in built if m.get("io_types")]

    td = doc.get("test_design") or {}
    if td.get("split") and td.get("quality_criteria") and td.get("success_criteria"):
        ev["iv"] = [pointer("test_design", k) for k in ("split", "quality_criteria", "success_criteria")]

    if str(plan.get("settings_mode", "")).startswith("AUTOMATED"):
        ev["v"] = [
            pointer("iterations", i, "models", j, "params") for i, j, m in built if i == 0 and m.get("params")
        ]
        if ev["v"]:
            ev["v"].insert(0, pointer("plan", "settings_mode"))

    ev["vi"] = [pointer("iterations", i, "models", j, "rationale") for i, j, m in built if m.get("rationale")]

    ev["vii"] = [pointer("exports", k) for k in range(len(doc.get("exports") or []))]

    descriptions = doc.get("model_descriptions") or {}
    characteristics = [pointer("model_descriptions", mid, "Characteristics")
                       for mid, facets in descriptions.items() if facets.get("Characteristics")]
    triples = [pointer("iterations", i, "models", j, "provenance") for i, j, m in built if m.get("provenance")]
    if characteristics and triples:
        ev["viii"] = characteristics + triples

    ev["ix"] = [pointer("final_ranking", k) for k in range(len(doc.get("final_ranking") or []))]

    for i, it in enumerate(doc.get("iterations", [])):
        for j, r in enumerate(it.get("revisions", [])):
            if r.get("after") != r.get("before"):
                ev["x"].append(pointer("iterations", i, "revisions", j))

    items = tuple(GapItem(oid, title, bool(ev[oid]), tuple(ev[oid])) for oid, title in OPPORTUNITIES)
    return GapReport(items)


# -- text summary -----------------------------------------------------------------


def ranking_table(ledger: RunLedger) -> str:
    rows = ledger.final_ranking
    if not rows:
        return "(no ranking)"
    w = max(len("model"), *(len(r["model_id"]) for r in rows))
    metric = rows[0]["primary_metric"]
    lines = [f"{'rank':<5} {'model':<{w}}  {metric:<16} iteration  params"]
    for r in rows:
        v = "undefined" if r["value"] is None else f"{r['value']:.6g}"
        params = ", ".join(f"{k}={r['params'][k]!r}" for k in sorted(r["params"]))
        lines.append(f"{r['rank']:<5} {r['model_id']:<{w}}  {v:<16} {r['iteration']:<9}  {params}")
    return "\n".join(lines)


def summary(ledger: RunLedger) -> str:
    lines = [
        f"run {ledger.run_id}",
        f"status: {ledger.status}" + (f" ({ledger.stop_reason})" if ledger.stop_reason else ""),
        f"configuration: {ledger.configuration.get('name', '?')}, {len(ledger.configuration.get('selected', []))} features",
        f"dataset: {ledger.dataset.get('path', '?')} ({ledger.dataset.get('rows', '?')} rows, "
        f"{ledger.dataset.get('hash_algorithm', '?')} {str(ledger.dataset.get('content_hash', ''))[:12]})",
        f"seed: {ledger.seed}",
    ]
    if ledger.error:
        lines.append(f"error: {ledger.error.get('code')}: {ledger.error.get('message')}")
    for r in ledger.assumptions:
        failed = [c["detail"] for c in r["checks"] if not c["holds"]]
        lines.append(f"technique {r['model_id']}: {r['status']}" + (f" ({'; '.join(failed)})" if failed else ""))
    for it in ledger.iterations:
        stop = it["stop"]
        lines.append(f"iteration {it['index']}: {stop['decision']}" + (f" ({stop['reason']})" if stop["reason"] else ""))
        for rev in it["revisions"]:
            for reason in rev["reasons"]:
                lines.append(f"  revise {rev['model_id']}: {reason}")
        for row in it["assessment"]["ranking"]:
            v = "undefined" if row["value"] is None else f"{row['value']:.6g}"
            lines.append(f"  {row['rank']}. {row['model_id']} {it['assessment']['primary_metric']}={v}")
        for c in it["assessment"]["comments"]:
            lines.append(f"  note: {c}")
    lines.append("final ranking:")
    lines.append(ranking_table(ledger))
    return "\n".join(lines)
