import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kolmostrip import _backend

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(params=["compiled", "python"])
def backend(request, monkeypatch):
    """Run a test once per prox kernel implementation."""
    if request.param == "compiled":
        if _backend.BACKEND != "cython":
            pytest.skip("compiled kernels not built")
        monkeypatch.setattr(_backend, "kernels", _backend.kernels)
    else:
        monkeypatch.setattr(_backend, "kernels", _backend.python_kernels)
    return request.param


def random_func(rng, m, d, scale=1.0):
    from kolmostrip.polyfun import PolyhedralFunc

    V = rng.normal(size=(m, d))
    V /= np.maximum(1.0, np.linalg.norm(V, axis=1))[:, None]
    return PolyhedralFunc(scale * V, rng.normal(size=m))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
