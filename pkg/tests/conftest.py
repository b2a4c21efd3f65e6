import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "feature-model oracle equivalence",
    2: "configuration counting",
    3: "built-in model structure",
    4: "metric correctness",
    5: "split properties",
    6: "learner sanity",
    7: "sequential/parallel equivalence",
    8: "end-to-end determinism",
    9: "iteration and stop",
    10: "gap report",
    11: "DSL robustness",
}

_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")
_results: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.failed or report.skipped:
        _results.setdefault(int(m.group(1)), []).append(report.passed and report.when == "call")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        outcomes = _results.get(number)
        if outcomes is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} ({title}): {status}")
