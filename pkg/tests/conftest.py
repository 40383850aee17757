import contextlib

import numpy as np
import pytest

_ACCEPTANCE = []


class _Record:
    detail = ""


@pytest.fixture
def acceptance():
    """Context manager recording one acceptance criterion as PASS/FAIL."""

    @contextlib.contextmanager
    def run(name):
        rec = _Record()
        try:
            yield rec
        except BaseException as exc:
            first = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            _ACCEPTANCE.append((name, False, rec.detail or first))
            raise
        _ACCEPTANCE.append((name, True, rec.detail))

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dft_rows(N, rows):
    """Entry-wise DFT oracle ``W[i, j] = exp(-2 pi i j / N)`` restricted to ``rows``."""
    rows = np.asarray(rows)
    W = np.empty((len(rows), N), dtype=complex)
    for a, i in enumerate(rows):
        for j in range(N):
            W[a, j] = np.exp(-2j * np.pi * ((int(i) * j) % N) / N)
    return W
