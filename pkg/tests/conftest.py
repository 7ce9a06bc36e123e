import numpy as np
import pytest
from hypothesis import settings

from sourceshape.mesh import build_square_mesh

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mesh16():
    return build_square_mesh(16)


@pytest.fixture(scope="session")
def mesh71():
    # max edge length ~0.04
    return build_square_mesh(71)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_RUNS = {}


@pytest.fixture(scope="session")
def full_run():
    """Memoised ``run_experiment`` on the default meshes, shared across modules."""
    from sourceshape.harness import get_example
    from sourceshape.harness.runner import run_experiment

    def get(name, seed=0, sigma=0.0):
        key = (name, seed, sigma)
        if key not in _RUNS:
            _RUNS[key] = run_experiment(get_example(name).replace(sigma=sigma), seed=seed)
        return _RUNS[key]

    return get


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record ``(id, ok, detail)`` for the acceptance summary and fail the test if not ok."""

    def record(cid, ok, detail):
        _ACCEPTANCE[cid] = (bool(ok), detail)
        assert ok, f"{cid}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
