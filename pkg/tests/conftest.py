"""Shared fixtures plus the acceptance-summary reporting hook."""

from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# One line per acceptance criterion, echoed after the pytest summary so the
# pass/fail verdicts are visible even when test stdout is captured.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {number:2d} {verdict}: {title} — {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture()
def tiny_taxonomy():
    from ecgalign.ddp import LabelDef

    return [
        LabelDef("SR", "sinus rhythm", "Rhythm"),
        LabelDef("AFIB", "atrial fibrillation", "Rhythm"),
        LabelDef("NORM", "normal ECG", "Disease"),
        LabelDef("LBBB", "left bundle branch block", "Disease"),
        LabelDef("PVC", "premature ventricular complex", "Form"),
        LabelDef("STD", "ST segment depression", "Form"),
    ]
