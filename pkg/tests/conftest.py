import numpy as np
import pytest

from sepdiar import backends, synth
from sepdiar.core import Annotation, Segment

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def three_speaker_scenario():
    return synth.generate(3, 120.0, 0.2, seed=7)


@pytest.fixture
def vad():
    return backends.EnergyVad(-40.0)


@pytest.fixture
def embedder():
    return backends.MelEmbedder()


def random_annotation(rng: np.random.Generator, n_speakers: int, extent: float = 30.0, prefix: str = "s") -> Annotation:
    """Random segments on a 10 ms grid so a millisecond raster is exact."""
    entries = []
    for k in range(n_speakers):
        for _ in range(int(rng.integers(1, 5))):
            a = int(rng.integers(0, int(extent * 100) - 10))
            b = a + int(rng.integers(1, 800))
            entries.append((Segment(a / 100, min(b, int(extent * 100)) / 100), f"{prefix}{k}"))
    return Annotation(tuple(entries))
