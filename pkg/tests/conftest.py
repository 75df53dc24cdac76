import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_spd(rng, p, cond=10.0):
    """Random SPD matrix with eigenvalues spread over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    vals = np.geomspace(1.0, cond, p)
    M = (Q * vals) @ Q.T
    return 0.5 * (M + M.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance criterion outcomes, printed in the terminal summary
ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; a test that dies before reporting is a FAIL."""
    key = request.node.name

    def report(label: str, ok: bool | None, detail: str) -> bool | None:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE[key] = (status, f"{label}: {detail}")
        return ok

    yield report
    ACCEPTANCE.setdefault(key, ("FAIL", f"{key}: raised before reporting"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, text in ACCEPTANCE.values():
        terminalreporter.write_line(f"[{status}] {text}")
