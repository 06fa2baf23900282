import numpy as np
import pytest

from trainor.config import SynthConfig
from trainor.dataio import write_dataset
from trainor.evalgen import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_dir(tmp_path):
    """Three users: u1 and u2 pass the activity filter, u3 has only 4 home check-ins."""
    pois = [(f"h{i}", "home", 40.0 + 0.01 * i, 116.3 + 0.01 * i) for i in range(6)]
    pois += [(f"o{i}", "out", 31.2 + 0.005 * i, 121.4 + 0.004 * i) for i in range(5)]
    checkins = []
    for user, home, out in (
        ("u1", ["h0", "h1", "h0", "h2", "h3"], ["o0", "o1", "o1"]),
        ("u2", ["h4", "h5", "h4", "h5", "h1", "h2"], ["o2", "o3", "o4"]),
        ("u3", ["h0", "h1", "h2", "h3"], ["o0", "o2", "o4"]),
    ):
        for t, p in enumerate(home):
            checkins.append((user, 1000 + 10 * t, p))
        for t, p in enumerate(out):
            checkins.append((user, 5000 + 10 * t, p))
    write_dataset(tmp_path / "toy", pois, checkins)
    return tmp_path / "toy"


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth_small")
    generate_synthetic(SynthConfig(n_users=120, n_home_pois=40, n_out_pois=24, k_true=3,
                                   n_home_clusters=3, seed=7), path)
    return path


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the pass flag so the test can assert on it."""
    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
