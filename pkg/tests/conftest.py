import os

import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("WETRACE_FULL_BENCH") == "1":
        return
    skip = pytest.mark.skip(reason="set WETRACE_FULL_BENCH=1 to run full-cost benchmarks")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split("-")[0]), k)):
        ok, title, note = ACCEPTANCE[key]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
