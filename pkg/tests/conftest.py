import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("nlap", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nlap")

# Filled by tests/test_acceptance.py; one line per criterion at the end of the run.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.setenv("NLAP_THREADS", os.environ.get("NLAP_THREADS", "1"))
