"""Shared fixtures and the acceptance summary printer."""

from pathlib import Path

import numpy as np
import pytest

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

_ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running test (runs in the default suite)")


@pytest.fixture
def report():
    """Record one acceptance check: report("5", "5c", passed, detail)."""

    def _report(criterion: str, part: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {part}: {'PASS' if passed else 'FAIL'} {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        parts = _ACCEPTANCE[key]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name} {'pass' if p else 'FAIL'}: {d}" for name, p, d in parts)
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
