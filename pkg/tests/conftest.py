from functools import lru_cache

import numpy as np
import pytest

from rbmtap import GeneratingFunction, SolverConfig, compute_svd, sample, solve_rs_fixed_point

FIG_ALPHA, FIG_H1, FIG_H2 = 0.5, 2.0, 1.0


@lru_cache(maxsize=4)       # a 4096 x 2048 instance holds ~160 MB
def spectral(model: str, n1: int, n2: int, beta: float, seed: int):
    """Sampled coupling matrix and its SVD, shared across the session."""
    w = sample(model, n1, n2, beta, seed)
    return w, compute_svd(w)


@lru_cache(maxsize=None)
def solved(model: str, beta: float, alpha: float = FIG_ALPHA, h1: float = FIG_H1,
           h2: float = FIG_H2, tol: float = 1e-13):
    gf = GeneratingFunction.for_model(model, alpha, beta)
    return gf, solve_rs_fixed_point(gf, h1, h2, cfg=SolverConfig(tol=tol))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
