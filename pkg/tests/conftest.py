"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from evoeq.signal import make_grid, signal

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    prev = _ACCEPTANCE.get(number, (title, "PASS"))[1]
    if rep.when == "call" or rep.failed:
        status = "PASS" if rep.passed and prev == "PASS" else "FAIL"
        if rep.skipped:
            status = "SKIP"
        _ACCEPTANCE[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_signal(rng, grid, nu, dim=1):
    """Complex Gaussian samples scaled by ``exp(nu t)`` so weighted entries are O(1)."""
    v = rng.standard_normal((grid.n, dim)) + 1j * rng.standard_normal((grid.n, dim))
    return signal(grid, nu, v * np.exp(nu * grid.times)[:, None])


@pytest.fixture
def grid256():
    return make_grid(0.0, 1.0 / 32, 256)


@pytest.fixture
def make_signal(rng):
    def _make(grid, nu, dim=1):
        return random_signal(rng, grid, nu, dim)

    return _make
