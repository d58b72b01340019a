import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmode_ef.synth import synth_dataset

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """20 synthetic patients (14/3/3) with EF in [0.2, 0.8]."""
    out = tmp_path_factory.mktemp("tiny")
    return synth_dataset(20, (0.2, 0.8), seed=3, out_dir=out)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; shown in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
