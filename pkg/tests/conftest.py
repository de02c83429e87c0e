from dataclasses import dataclass

import numpy as np
import pytest

from gmr.core import GaussianMixture
from gmr.repro import case_study_mixture, test_mixture

ACCEPTANCE_LINES: list[str] = []


@dataclass
class RawMix:
    """Mixture arrays without normalization, for finite differences on raw weights."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def n(self):
        return self.weights.size

    @property
    def d(self):
        return self.means.shape[1]


def random_mixture(rng: np.random.Generator, n: int, d: int = 1, spread: float = 3.0) -> GaussianMixture:
    w = rng.dirichlet(np.ones(n))
    means = rng.normal(0.0, spread, size=(n, d))
    A = rng.normal(size=(n, d, d))
    covs = A @ np.swapaxes(A, 1, 2) / d + rng.uniform(0.1, 1.5, size=(n, 1, 1)) * np.eye(d)
    return GaussianMixture(w, means, covs)


def random_1d(rng: np.random.Generator, n: int, spread: float = 3.0) -> GaussianMixture:
    w = rng.dirichlet(np.ones(n))
    return GaussianMixture(w, rng.normal(0.0, spread, n), rng.uniform(0.1, 3.0, n))


@pytest.fixture
def test_gm():
    return test_mixture()


@pytest.fixture
def case4():
    return case_study_mixture(4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fd_gradient(fun, mix, h: float = 1e-6):
    """Central differences of ``fun(RawMix)`` in raw weights, means and symmetric covariances."""
    base = RawMix(np.array(mix.weights, float), np.array(mix.means, float), np.array(mix.covs, float))

    def shifted(attr, idx, delta):
        arrs = {k: getattr(base, k).copy() for k in ("weights", "means", "covs")}
        arrs[attr][idx] += delta
        if attr == "covs" and idx[1] != idx[2]:
            arrs[attr][idx[0], idx[2], idx[1]] += delta
        return RawMix(**arrs)

    out = {}
    for attr in ("weights", "means", "covs"):
        g = np.zeros_like(getattr(base, attr))
        for idx in np.ndindex(g.shape):
            diff = (fun(shifted(attr, idx, h)) - fun(shifted(attr, idx, -h))) / (2 * h)
            if attr == "covs" and idx[1] != idx[2]:
                diff /= 2.0
            g[idx] = diff
        out[attr] = g
    return out


def nise_fd_target(f, m) -> float:
    """``nise(f, m) - 1`` written as ``-2 Jhr / (Jhh + Jrr)``.

    Same derivative as NISE, but without subtracting from 1: when NISE is
    within ~1e-9 of 1 that subtraction leaves central differences dominated by
    round-off (error ~ eps / h against gradients of size ~1e-8).
    """
    from gmr.dissim import product_integral_matrix, self_likeness

    jhr = float(f.weights @ product_integral_matrix(f, m) @ m.weights)
    jrr = float(m.weights @ product_integral_matrix(m, m) @ m.weights)
    return -2.0 * jhr / (self_likeness(f) + jrr)
