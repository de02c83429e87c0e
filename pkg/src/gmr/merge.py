"""Single-Gaussian replacements for sub-mixtures.

``kld_barycenter`` is the closed-form moment-preserving merge.  ``bsga`` finds
the best single Gaussian approximation of a normalized sub-mixture under ISE
or NISE by descent, and ``barycenter`` minimizes the weighted sum of pairwise
dissimilarities instead.  ``runnalls_bound`` is the classical upper bound on
the KLD increase caused by a pairwise moment-preserving merge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionMismatchError, Gaussian, GaussianMixture, SubMixture, _pooled
from .descent import DescentConfig, gradient_descent
from .dissim import (
    Measure,
    MixtureGradient,
    QuadratureConfig,
    ise,
    ise_gradient,
    kld_gm_numeric,
    nise,
    nise_gradient,
)
from .params import MixtureCoords
from .refine import _Raw, refine

__all__ = [
    "BsgaResult",
    "kld_barycenter",
    "bsga",
    "barycenter",
    "pairwise_barycenter_objective",
    "runnalls_bound",
]


@dataclass(frozen=True)
class BsgaResult:
    gaussian: Gaussian
    objective: float
    iterations: int
    converged: bool
    initial: Gaussian


def _as_sub(sub) -> SubMixture:
    if isinstance(sub, GaussianMixture):
        return SubMixture.whole(sub)
    return sub


def kld_barycenter(sub: SubMixture | GaussianMixture) -> tuple[Gaussian, float]:
    """Moment-matching Gaussian of a sub-mixture and the sub-mixture's total weight."""
    sub = _as_sub(sub)
    w = sub.unnormalized_weights
    if sub.means.shape[0] == 1:
        return Gaussian(sub.means[0], sub.covs[0]), float(w[0])
    mean, cov = _pooled(w, sub.means, sub.covs)
    return Gaussian(mean, cov), float(w.sum())


def _lex_key(g: Gaussian):
    return tuple(g.mean.tolist())


def _starts(sub: SubMixture, init: Gaussian | None, multistart: bool) -> list[Gaussian]:
    bary = kld_barycenter(sub)[0]
    starts = [init if init is not None else bary]
    if multistart:
        if init is not None:
            starts.append(bary)
        starts.extend(Gaussian(m, c) for m, c in zip(sub.means, sub.covs))
    return starts


def _pick(results: list[BsgaResult]) -> BsgaResult:
    # lowest objective, then lexicographically smallest mean
    return min(results, key=lambda r: (r.objective, _lex_key(r.gaussian)))


def bsga(
    sub: SubMixture | GaussianMixture,
    measure="ise",
    cfg: DescentConfig | None = None,
    init: Gaussian | None = None,
    multistart: bool = False,
    quad: QuadratureConfig | None = None,
) -> BsgaResult:
    """Best single Gaussian approximation of the normalized sub-mixture.

    For the KLD the answer is the closed-form barycenter.  For ISE and NISE a
    descent is started from ``init`` (the KLD barycenter by default); with
    ``multistart`` the barycenter and every component of the sub-mixture are
    also tried and the lowest final objective wins.
    """
    sub = _as_sub(sub)
    measure = Measure.parse(measure)
    target = sub.normalized()
    if target.n == 1:
        g = target.component(0)
        return BsgaResult(g, 0.0, 0, True, g)
    if measure is Measure.KLD:
        g = kld_barycenter(sub)[0]
        obj = kld_gm_numeric(target, GaussianMixture.single(g), quad).value
        return BsgaResult(g, obj, 0, True, g)
    if init is not None and init.d != target.d:
        raise DimensionMismatchError("initial Gaussian has the wrong dimension")
    cfg = cfg or DescentConfig()
    results = []
    for start in _starts(sub, init, multistart):
        r = refine(target, GaussianMixture.single(start), measure, cfg)
        results.append(BsgaResult(r.mixture.component(0), r.final_cost, r.iterations, r.converged, start))
    return _pick(results)


def pairwise_barycenter_objective(sub: SubMixture | GaussianMixture, measure, q: Gaussian) -> float:
    """Weighted sum of dissimilarities from each component to ``q``."""
    sub = _as_sub(sub)
    measure = Measure.parse(measure)
    if q.d != sub.parent.d:
        raise DimensionMismatchError("candidate Gaussian has the wrong dimension")
    fn = {Measure.ISE: ise, Measure.NISE: nise}.get(measure)
    if fn is None:
        raise ValueError("pairwise barycenter objective is defined here for ISE and NISE")
    qm = GaussianMixture.single(q)
    wbar = sub.unnormalized_weights / sub.total
    return float(sum(
        wi * fn(GaussianMixture.single(Gaussian(m, c)), qm) for wi, m, c in zip(wbar, sub.means, sub.covs)
    ))


class _PairwiseObjective:
    def __init__(self, sub: SubMixture, measure: Measure):
        self.coords = MixtureCoords(1, sub.parent.d)
        self.parts = [GaussianMixture.single(Gaussian(m, c)) for m, c in zip(sub.means, sub.covs)]
        self.wbar = sub.unnormalized_weights / sub.total
        self.value_fn = ise if measure is Measure.ISE else nise
        self.grad_fn = ise_gradient if measure is Measure.ISE else nise_gradient

    def _raw(self, theta):
        w, m, c, _ = self.coords.arrays(theta)
        return _Raw(w, m, c)

    def __call__(self, theta):
        try:
            q = self._raw(theta)
            return float(sum(wi * self.value_fn(p, q) for wi, p in zip(self.wbar, self.parts)))
        except (np.linalg.LinAlgError, ArithmeticError):
            return np.inf

    def value_and_grad(self, theta):
        q = self._raw(theta)
        grads = [self.grad_fn(p, q) for p in self.parts]
        total = MixtureGradient(
            weights=sum(wi * g.weights for wi, g in zip(self.wbar, grads)),
            means=sum(wi * g.means for wi, g in zip(self.wbar, grads)),
            covs=sum(wi * g.covs for wi, g in zip(self.wbar, grads)),
        )
        value = float(sum(wi * g.value for wi, g in zip(self.wbar, grads)))
        return value, self.coords.pullback(total, theta)


def barycenter(
    sub: SubMixture | GaussianMixture,
    measure="ise",
    cfg: DescentConfig | None = None,
    init: Gaussian | None = None,
    multistart: bool = False,
) -> BsgaResult:
    """Minimizer of :func:`pairwise_barycenter_objective` (closed form for the KLD)."""
    sub = _as_sub(sub)
    measure = Measure.parse(measure)
    if sub.means.shape[0] == 1 or measure is Measure.KLD:
        g = kld_barycenter(sub)[0]
        return BsgaResult(g, 0.0 if sub.means.shape[0] == 1 else np.nan, 0, True, g)
    cfg = cfg or DescentConfig()
    obj = _PairwiseObjective(sub, measure)
    results = []
    for start in _starts(sub, init, multistart):
        res = gradient_descent(obj.value_and_grad, obj.coords.pack(GaussianMixture.single(start)), cfg, fun=obj)
        g = obj.coords.unpack(res.x).component(0)
        results.append(BsgaResult(g, res.value, res.iterations, res.converged, start))
    return _pick(results)


def runnalls_bound(gm: GaussianMixture, i: int, j: int) -> float:
    """Upper bound on the KLD increase from merging components ``i`` and ``j``.

    ``0.5 * [(w_i + w_j) log|S_ij| - w_i log|S_i| - w_j log|S_j|]`` with
    ``S_ij`` the covariance of their moment-preserving merge.
    """
    n = gm.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"component index out of range for a mixture of size {n}")
    if i == j:
        raise ValueError("cannot merge a component with itself")
    idx = [i, j]
    w = gm.weights[idx]
    _, cov = _pooled(w, gm.means[idx], gm.covs[idx])
    ld = np.linalg.slogdet(np.stack([cov, gm.covs[i], gm.covs[j]]))[1]
    value = 0.5 * ((w[0] + w[1]) * ld[0] - w[0] * ld[1] - w[1] * ld[2])
    return max(0.0, float(value))
