"""Greedy pruning and merging pipelines.

Three pipelines are provided:

* ``williams_reduce`` with ``KLD_BARYCENTER`` -- every pair merge and every
  single prune is costed by the ISE against the original mixture, but merges
  use the moment-preserving barycenter.
* ``williams_reduce`` with ``MergeMethod.bsga("ise")`` -- same selection, with
  merges computed as ISE best single Gaussian approximations, so every step
  optimizes the same measure.
* ``runnalls_reduce`` -- merge-only, choosing the pair with the smallest
  Runnalls bound.

Indices are 0-based throughout; :meth:`ReductionTrace.render` prints 1-based.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import Gaussian, GaussianMixture, MixtureError, SubMixture
from .descent import DescentConfig
from .dissim import Measure, QuadratureConfig, dissimilarity, ise, kld_gaussians, nise, self_likeness
from .merge import bsga, kld_barycenter, runnalls_bound

__all__ = [
    "Merge",
    "Prune",
    "Action",
    "ReductionTrace",
    "MergeMethod",
    "KLD_BARYCENTER",
    "TargetError",
    "Threshold",
    "KSmallest",
    "MassBudget",
    "CostBased",
    "apply_action",
    "prune",
    "merge_pair",
    "select_action_global",
    "select_merge_local",
    "williams_reduce",
    "runnalls_reduce",
]


class TargetError(ValueError):
    """Requested reduced size is not in ``[1, N)``."""


@dataclass(frozen=True)
class Merge:
    i: int
    j: int
    cost: float
    merged: Gaussian

    def to_dict(self) -> dict:
        return {
            "type": "merge",
            "i": self.i,
            "j": self.j,
            "cost": float(self.cost),
            "merged": {"mean": self.merged.mean.tolist(), "cov": self.merged.cov.tolist()},
        }


@dataclass(frozen=True)
class Prune:
    index: int
    cost: float

    def to_dict(self) -> dict:
        return {"type": "prune", "i": self.index, "j": None, "cost": float(self.cost)}


Action = Union[Merge, Prune]


def _action_from_dict(d: dict) -> Action:
    if d["type"] == "merge":
        m = d.get("merged")
        if m is None:
            raise MixtureError("merge step without the merged Gaussian cannot be replayed")
        return Merge(int(d["i"]), int(d["j"]), float(d["cost"]), Gaussian(m["mean"], m["cov"]))
    if d["type"] == "prune":
        return Prune(int(d["i"]), float(d["cost"]))
    raise MixtureError(f"unknown trace step type {d['type']!r}")


@dataclass
class ReductionTrace:
    measure: Measure
    steps: list = field(default_factory=list)
    final_cost: float = float("nan")
    cost_label: str | None = None

    def to_dict(self) -> dict:
        out = {
            "measure": self.measure.value,
            "steps": [s.to_dict() for s in self.steps],
            "final_cost": float(self.final_cost),
        }
        if self.cost_label is not None:
            out["cost_label"] = self.cost_label
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionTrace":
        return cls(
            Measure.parse(d["measure"]),
            [_action_from_dict(s) for s in d["steps"]],
            float(d["final_cost"]),
            d.get("cost_label"),
        )

    def replay(self, original: GaussianMixture) -> GaussianMixture:
        gm = original
        for step in self.steps:
            gm = apply_action(gm, step)
        return gm

    def render(self, start_size: int) -> list[str]:
        """Human-readable steps with 1-based indices, e.g. ``merge 3+4 (out of 5)``."""
        lines, n = [], start_size
        label = self.cost_label or self.measure.value
        for s in self.steps:
            if isinstance(s, Merge):
                lines.append(f"merge {s.i + 1}+{s.j + 1} (out of {n})  {label}={s.cost:.7g}")
            else:
                lines.append(f"prune {s.index + 1} (out of {n})  {label}={s.cost:.7g}")
            n -= 1
        return lines

    def signature(self) -> list[tuple]:
        """Compact 1-based step list such as ``[("merge", 3, 4), ("prune", 2)]``."""
        return [("merge", s.i + 1, s.j + 1) if isinstance(s, Merge) else ("prune", s.index + 1) for s in self.steps]


# --- elementary edits -------------------------------------------------------

def _replace_pair(gm: GaussianMixture, i: int, j: int, g: Gaussian) -> GaussianMixture:
    lo, hi = min(i, j), max(i, j)
    keep = [k for k in range(gm.n) if k != hi]
    w = gm.weights.copy()
    means = gm.means.copy()
    covs = gm.covs.copy()
    w[lo] = gm.weights[i] + gm.weights[j]
    means[lo] = g.mean
    covs[lo] = g.cov
    return GaussianMixture(w[keep], means[keep], covs[keep])


def _remove(gm: GaussianMixture, idx) -> GaussianMixture:
    drop = set(int(i) for i in np.atleast_1d(idx))
    keep = [k for k in range(gm.n) if k not in drop]
    if not keep:
        raise MixtureError("pruning would leave an empty mixture")
    w = gm.weights[keep]
    return GaussianMixture(w / w.sum(), gm.means[keep], gm.covs[keep])


def apply_action(gm: GaussianMixture, action: Action) -> GaussianMixture:
    if isinstance(action, Merge):
        return _replace_pair(gm, action.i, action.j, action.merged)
    return _remove(gm, action.index)


# --- merge methods ----------------------------------------------------------

@dataclass(frozen=True)
class MergeMethod:
    """How a selected pair is replaced: moment-preserving barycenter or a BSGA."""

    kind: str = "kld"
    measure: Measure = Measure.KLD
    cfg: DescentConfig = field(default_factory=DescentConfig)
    multistart: bool = True

    @classmethod
    def bsga(cls, measure="ise", cfg: DescentConfig | None = None, multistart: bool = True) -> "MergeMethod":
        return cls("bsga", Measure.parse(measure), cfg or DescentConfig(), multistart)

    @property
    def label(self) -> str:
        return "kld-barycenter" if self.kind == "kld" else f"{self.measure.value}-bsga"


KLD_BARYCENTER = MergeMethod()


class _PairMerger:
    """Memoized pair merges; unchanged pairs recur across greedy steps."""

    def __init__(self, method: MergeMethod):
        self.method = method
        self._cache: dict[bytes, Gaussian] = {}

    def __call__(self, gm: GaussianMixture, i: int, j: int) -> Gaussian:
        if self.method.kind == "kld" or self.method.measure is Measure.KLD:
            return kld_barycenter(SubMixture(gm, (i, j)))[0]
        key = b"".join(
            np.ascontiguousarray(a).tobytes()
            for a in (gm.weights[[i, j]], gm.means[[i, j]], gm.covs[[i, j]])
        )
        g = self._cache.get(key)
        if g is None:
            m = self.method
            g = bsga(SubMixture(gm, (i, j)), m.measure, m.cfg, multistart=m.multistart).gaussian
            self._cache[key] = g
        return g


def merge_pair(gm: GaussianMixture, i: int, j: int, method: MergeMethod = KLD_BARYCENTER) -> GaussianMixture:
    """Replace components ``i`` and ``j`` by one Gaussian of weight ``w_i + w_j``.

    The new component takes position ``min(i, j)``; the others keep their order.
    """
    n = gm.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"component index out of range for a mixture of size {n}")
    if i == j:
        raise ValueError("cannot merge a component with itself")
    return _replace_pair(gm, i, j, _PairMerger(method)(gm, i, j))


# --- pruning ----------------------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("threshold must be nonnegative")


@dataclass(frozen=True)
class KSmallest:
    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")


@dataclass(frozen=True)
class MassBudget:
    rho: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("mass budget must lie in (0, 1)")


@dataclass(frozen=True)
class CostBased:
    measure: Measure = Measure.ISE


PruneCriterion = Union[Threshold, KSmallest, MassBudget, CostBased]


def _weight_prune(gm: GaussianMixture, drop: list[int]) -> tuple[GaussianMixture, list[Prune]]:
    if len(drop) >= gm.n:
        raise MixtureError("pruning criterion would remove every component")
    steps = []
    # remove from the highest index down so recorded indices stay valid on replay
    for idx in sorted(drop, reverse=True):
        steps.append(Prune(idx, float(gm.weights[idx])))
    return (_remove(gm, drop) if drop else gm), steps


def prune(
    gm: GaussianMixture,
    criterion: PruneCriterion,
    original: GaussianMixture | None = None,
    quad: QuadratureConfig | None = None,
) -> tuple[GaussianMixture, list[Prune]]:
    """Remove components according to ``criterion`` and renormalize.

    Weight-based criteria record the removed weight as each step's cost.
    ``CostBased`` removes the one component whose removal gives the smallest
    dissimilarity to ``original`` (defaulting to ``gm`` itself).
    """
    w = gm.weights
    if isinstance(criterion, Threshold):
        return _weight_prune(gm, [int(k) for k in np.flatnonzero(w < criterion.tau)])
    if isinstance(criterion, KSmallest):
        order = np.argsort(w, kind="stable")
        return _weight_prune(gm, [int(k) for k in order[: criterion.k]])
    if isinstance(criterion, MassBudget):
        order = np.argsort(w, kind="stable")
        csum = np.cumsum(w[order])
        return _weight_prune(gm, [int(k) for k in order[csum <= criterion.rho]])
    if isinstance(criterion, CostBased):
        if gm.n < 2:
            raise MixtureError("pruning criterion would remove every component")
        ref = original if original is not None else gm
        measure = Measure.parse(criterion.measure)
        costs = [dissimilarity(ref, _remove(gm, k), measure, quad) for k in range(gm.n)]
        k = int(np.argmin(costs))
        return _remove(gm, k), [Prune(k, float(costs[k]))]
    raise TypeError(f"unknown pruning criterion {criterion!r}")


# --- selection ----------------------------------------------------------------

class _Coster:
    """``D(original || candidate)`` with the original's self-likeness cached."""

    def __init__(self, original: GaussianMixture, measure):
        self.original = original
        self.measure = Measure.parse(measure)
        if self.measure is Measure.KLD:
            raise ValueError("global selection needs a closed-form measure (ISE or NISE)")
        self.Jhh = self_likeness(original)
        self._fn = ise if self.measure is Measure.ISE else nise

    def __call__(self, candidate: GaussianMixture) -> float:
        return self._fn(self.original, candidate, Jhh=self.Jhh)


def _select_global(coster: _Coster, current: GaussianMixture, merger: _PairMerger, allow_prune: bool = True):
    if current.n < 2:
        raise MixtureError("need at least two components to select an action")
    best, best_key = None, None
    for i, j in itertools.combinations(range(current.n), 2):
        g = merger(current, i, j)
        cost = coster(_replace_pair(current, i, j, g))
        key = (cost, 0, i, j)
        if best_key is None or key < best_key:
            best, best_key = Merge(i, j, cost, g), key
    if allow_prune:
        for k in range(current.n):
            cost = coster(_remove(current, k))
            key = (cost, 1, k, -1)
            if key < best_key:
                best, best_key = Prune(k, cost), key
    return best


def select_action_global(
    original: GaussianMixture,
    current: GaussianMixture,
    measure="ise",
    method: MergeMethod = KLD_BARYCENTER,
) -> Action:
    """Cheapest single merge or prune, costed against ``original``.

    Ties go to merges before prunes, then to the smallest indices.
    """
    return _select_global(_Coster(original, measure), current, _PairMerger(method))


def select_merge_local(current: GaussianMixture, pair_measure="kld") -> tuple[int, int]:
    """Pair of components that are least dissimilar to each other.

    The KLD between two components is symmetrized by taking the smaller of
    its two directions.
    """
    if current.n < 2:
        raise MixtureError("need at least two components to select a pair")
    measure = Measure.parse(pair_measure)
    comps = current.components
    best, best_key = None, None
    for i, j in itertools.combinations(range(current.n), 2):
        if measure is Measure.KLD:
            cost = min(kld_gaussians(comps[i], comps[j]), kld_gaussians(comps[j], comps[i]))
        elif measure is Measure.ISE:
            cost = ise(GaussianMixture.single(comps[i]), GaussianMixture.single(comps[j]))
        else:
            cost = nise(GaussianMixture.single(comps[i]), GaussianMixture.single(comps[j]))
        if best_key is None or (cost, i, j) < best_key:
            best, best_key = (i, j), (cost, i, j)
    return best


# --- pipelines ----------------------------------------------------------------

def _check_target(original: GaussianMixture, target: int) -> None:
    if not (1 <= int(target) < original.n):
        raise TargetError(f"target size {target} must lie in [1, {original.n})")


def williams_reduce(
    original: GaussianMixture,
    target: int,
    method: MergeMethod = KLD_BARYCENTER,
    measure="ise",
) -> tuple[GaussianMixture, ReductionTrace]:
    """Greedy merge-or-prune reduction with global ``measure`` costing."""
    _check_target(original, target)
    coster = _Coster(original, measure)
    merger = _PairMerger(method)
    trace = ReductionTrace(coster.measure)
    current = original
    while current.n > target:
        action = _select_global(coster, current, merger)
        current = apply_action(current, action)
        trace.steps.append(action)
    trace.final_cost = coster(current)
    return current, trace


def runnalls_reduce(
    original: GaussianMixture, target: int, quad: QuadratureConfig | None = None
) -> tuple[GaussianMixture, ReductionTrace]:
    """Merge-only reduction picking the pair with the smallest Runnalls bound.

    Step costs are the bounds; ``final_cost`` is the numeric KLD from
    ``original`` to the result.
    """
    _check_target(original, target)
    trace = ReductionTrace(Measure.KLD, cost_label="bound")
    current = original
    while current.n > target:
        best, best_key = None, None
        for i, j in itertools.combinations(range(current.n), 2):
            key = (runnalls_bound(current, i, j), i, j)
            if best_key is None or key < best_key:
                best, best_key = (i, j), key
        i, j = best
        g = kld_barycenter(SubMixture(current, (i, j)))[0]
        action = Merge(i, j, best_key[0], g)
        current = apply_action(current, action)
        trace.steps.append(action)
    trace.final_cost = dissimilarity(original, current, Measure.KLD, quad)
    return current, trace
