import numpy as np
import pytest

from safeguard import _kernels

KERNELS = ("sphere_sphere", "sphere_box", "hildreth", "fk_chain")


@pytest.fixture(params=[m.BACKEND for m in _kernels.backends()])
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    mod = next(m for m in _kernels.backends() if m.BACKEND == request.param)
    for name in KERNELS:
        monkeypatch.setattr(_kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results):
        terminalreporter.write_line(line)
