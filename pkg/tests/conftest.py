import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_osi():
    from srattack.harness.system import CorpusSpec, SystemSpec, build_system
    return build_system(CorpusSpec(), SystemSpec(task="osi"))


@pytest.fixture(scope="session")
def desk_csi():
    from srattack.harness.system import CorpusSpec, SystemSpec, build_system
    return build_system(CorpusSpec(), SystemSpec(task="csi"))


@pytest.fixture(scope="session")
def desk_sv():
    from srattack.harness.system import CorpusSpec, SystemSpec, build_system
    return build_system(CorpusSpec(), SystemSpec(task="sv"))


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns the flag."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
