import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(cid: str, passed: bool, detail: str):
        prev = ACCEPTANCE.get(cid)
        ok = passed and (prev is None or prev[0])
        ACCEPTANCE[cid] = (ok, detail if prev is None else f"{prev[1]}; {detail}")
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: [int(x) if x.isdigit() else x for x in c.replace(".", " ").split()]):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {detail}")
