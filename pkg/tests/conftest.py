import numpy as np
import pytest

from isochr import backend

# collected by test_acceptance, printed by pytest_terminal_summary
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((number, title, passed, detail))


@pytest.fixture(params=["numba", "numpy"])
def both_backends(request, monkeypatch):
    """Run a test under the jitted path and the fallback path."""
    use = request.param == "numba"
    if use and not backend.NUMBA_AVAILABLE:
        pytest.skip("numba not importable")
    monkeypatch.setattr(backend, "USE_NUMBA", use)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number} [{title}]: {status}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
