import numpy as np
import pytest

from rawaug.noise_model import NoiseModel
from rawaug.sensor_sim import SensorSpec

TRUE_MODEL = NoiseModel(1.2, 6.0, 25.0)


@pytest.fixture
def model():
    return TRUE_MODEL


@pytest.fixture
def sensor():
    return SensorSpec(TRUE_MODEL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} {title}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
