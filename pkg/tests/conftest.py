from pathlib import Path

import numpy as np
import pytest

from ptext.corpus import tokenize
from ptext.encoder import PromptBank, init_encoder

DATA = Path(__file__).parent / "data"


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` at every entry of ``x``."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def make_bank(rng, names, n_prompt, dim, bucket_count, std=0.3):
    return PromptBank(
        rng.normal(0, std, (n_prompt, dim)),
        rng.normal(0, std, (n_prompt, dim)),
        tuple(names),
        tuple(tokenize(n, bucket_count) for n in names),
    )


@pytest.fixture(scope="session")
def small_encoder():
    return init_encoder(seed=7, dim=8, bucket_count=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pipeline_dir() -> Path:
    return DATA / "pipeline"


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(RESULTS.items()):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
