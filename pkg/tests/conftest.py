import numpy as np
import pytest

from gpdeform.core_types import LandmarkPair, LandmarkSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_landmark_set(pre, post, source="file"):
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    return LandmarkSet(tuple(
        LandmarkPair(i, pre[i], post[i], source) for i in range(pre.shape[0])
    ))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion after the run."""
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, status in test_acceptance.RESULTS:
        terminalreporter.write_line(f"  {status}: {name}")
