import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def complex_laplace(rng, shape):
    """Circular complex samples with Laplacian radial profile (kurtic)."""
    r = rng.laplace(size=shape)
    return r * np.exp(2j * np.pi * rng.uniform(size=shape))


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, name: str, ok: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(ACCEPTANCE_LINES[number])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
