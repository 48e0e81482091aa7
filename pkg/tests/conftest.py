from __future__ import annotations

import numpy as np
import pytest

from symindex.report import Scenario, run_scenario

# filled by test_acceptance.py; echoed in the terminal summary even when output is captured
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


_REPORTS: dict[tuple, tuple] = {}


@pytest.fixture(scope="session")
def preset_report():
    """Memoised full-pipeline runs keyed by (preset, sorted options)."""

    def get(name: str, **options):
        key = (name, tuple(sorted(options.items())))
        if key not in _REPORTS:
            _REPORTS[key] = run_scenario(Scenario(name, options))
        return _REPORTS[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def sign_changing_orbit():
    """Flat-torus data with an indefinite P and a rotating velocity, so kappa changes sign."""
    from symindex.orbit_io import orbit_from_dict, orbit_to_dict
    from symindex.presets import build_preset

    doc = orbit_to_dict(build_preset("flat_torus"))
    grid = np.asarray(doc["grid"])
    doc["P"] = [[[1.0, 0.0], [0.0, -1.0]]] * grid.size
    doc["xprime"] = np.stack([np.cos(2 * np.pi * grid), np.sin(2 * np.pi * grid)], axis=1).tolist()
    return orbit_from_dict(doc)
