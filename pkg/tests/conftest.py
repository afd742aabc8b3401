import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL/SKIP line per acceptance criterion."""
    rows = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when not in ("call", "setup"):
                continue
            if outcome == "skipped" and rep.when != "setup" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1][len("test_criterion_"):]
            num, _, label = name.partition("_")
            detail = dict(getattr(rep, "user_properties", [])).get("detail", "")
            rows.append((int(num), outcome, label.replace("_", " "), detail))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for num, outcome, label, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num}: {tag[outcome]}  {label}" + (f"  ({detail})" if detail else ""))
