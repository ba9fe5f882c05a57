import numpy as np
import pytest

from robust_scatter import RhoFamily, WeightedSample


def axis_design(q: int) -> WeightedSample:
    """The 2q unit-axis points +/-e_i with uniform weights 1/(2q)."""
    X = np.vstack([np.eye(q), -np.eye(q)])
    return WeightedSample.uniform(X)


@pytest.fixture
def axis2() -> WeightedSample:
    return axis_design(2)


@pytest.fixture
def axis3() -> WeightedSample:
    return axis_design(3)


@pytest.fixture
def t_family2() -> RhoFamily:
    return RhoFamily(1.0, 2)


def random_spd(rng: np.random.Generator, q: int, spread: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((q, q)) * spread
    return a @ a.T + 0.5 * np.eye(q)


def random_sym(rng: np.random.Generator, q: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((q, q)) * scale
    return (a + a.T) / 2.0


# ---------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion at the end of the run

_ACCEPTANCE: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): criterion of the acceptance gate"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        label = marker.args[0] if marker.args else item.name
        _ACCEPTANCE[label] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{label}: {_ACCEPTANCE[label]}")
