"""Refinement of a reduced mixture by descent on ISE or NISE over all its parameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionMismatchError, GaussianMixture, validate
from .descent import DescentConfig, DescentResult, gradient_descent
from .dissim import Measure, ise, ise_gradient, nise, nise_gradient, self_likeness
from .params import MixtureCoords

__all__ = ["RefineResult", "refine", "ObjectiveFn"]


@dataclass(frozen=True)
class _Raw:
    """Unvalidated mixture arrays; enough for the dissimilarity kernels."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def n(self):
        return self.weights.size

    @property
    def d(self):
        return self.means.shape[1]


class ObjectiveFn:
    """ISE or NISE against a fixed ``original``, as a function of flat coordinates."""

    def __init__(self, original: GaussianMixture, coords: MixtureCoords, measure):
        measure = Measure.parse(measure)
        if measure is Measure.KLD:
            raise ValueError("only ISE and NISE objectives have analytic gradients")
        self.original, self.coords, self.measure = original, coords, measure
        self.Jhh = self_likeness(original)
        self._grad = ise_gradient if measure is Measure.ISE else nise_gradient
        self._value = ise if measure is Measure.ISE else nise

    def raw(self, theta) -> _Raw:
        w, means, covs, _ = self.coords.arrays(theta)
        return _Raw(w, means, covs)

    def __call__(self, theta) -> float:
        try:
            return self._value(self.original, self.raw(theta), Jhh=self.Jhh)
        except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError):
            return np.inf

    def value_and_grad(self, theta):
        G = self._grad(self.original, self.raw(theta), Jhh=self.Jhh)
        return G.value, self.coords.pullback(G, theta)


@dataclass(frozen=True)
class RefineResult:
    mixture: GaussianMixture
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    grad_norm: float = np.nan


def run_descent(original: GaussianMixture, start: GaussianMixture, measure, cfg: DescentConfig):
    coords = MixtureCoords(start.n, start.d)
    obj = ObjectiveFn(original, coords, measure)
    theta0 = coords.pack(start)
    res: DescentResult = gradient_descent(obj.value_and_grad, theta0, cfg, fun=obj)
    return obj, coords, res


def refine(
    original: GaussianMixture,
    start: GaussianMixture,
    measure="ise",
    cfg: DescentConfig | None = None,
) -> RefineResult:
    """Descend on ``D(original || g)`` over every parameter of ``g``, starting at ``start``.

    The size of ``start`` is kept during the run; components whose weight ends
    below the zero-weight threshold are dropped afterwards.
    """
    if original.d != start.d:
        raise DimensionMismatchError(f"cannot refine a {start.d}-d start against a {original.d}-d mixture")
    cfg = cfg or DescentConfig()
    obj, coords, res = run_descent(original, start, measure, cfg)
    initial = obj._value(original, start, Jhh=obj.Jhh)
    if res.iterations == 0:
        return RefineResult(start, initial, initial, 0, res.converged, res.grad_norm)
    mixture = validate(coords.unpack(res.x))
    final = obj._value(original, mixture, Jhh=obj.Jhh)
    if final > initial:
        # the packed start can differ from ``start`` by round-off; never hand back a worse mixture
        return RefineResult(start, initial, initial, res.iterations, res.converged, res.grad_norm)
    return RefineResult(mixture, initial, final, res.iterations, res.converged, res.grad_norm)
