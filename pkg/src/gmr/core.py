"""Gaussian and Gaussian-mixture value types.

Mixtures are stored as stacked arrays (``weights`` of shape ``(N,)``,
``means`` of shape ``(N, d)``, ``covs`` of shape ``(N, d, d)``) so the
dissimilarity code can vectorize over components.  All arrays are made
read-only after construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "MixtureError",
    "DimensionMismatchError",
    "Gaussian",
    "GaussianMixture",
    "SubMixture",
    "eval_pdf",
    "dumps17",
    "pooled_moments",
    "validate",
    "load_mixture",
    "save_mixture",
    "mixture_to_dict",
    "WEIGHT_SUM_TOL",
    "ZERO_WEIGHT",
]

LOG_2PI = np.log(2.0 * np.pi)
WEIGHT_SUM_TOL = 1e-6
ZERO_WEIGHT = 1e-12


class MixtureError(ValueError):
    """Invalid mixture parameters."""


class DimensionMismatchError(MixtureError):
    """Operands live in spaces of different dimension."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_cov(cov, d: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape != (d, d):
        raise DimensionMismatchError(f"covariance shape {cov.shape} does not match d={d}")
    return 0.5 * (cov + cov.T)


def _check_spd(cov: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(cov)):
        raise MixtureError("covariance has non-finite entries")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise MixtureError("covariance is not positive definite") from None


@dataclass(frozen=True, eq=False)
class Gaussian:
    """A d-dimensional Gaussian density.

    Scalars are accepted for the 1-d case: ``Gaussian(0.0, 1.0)``.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or mean.size == 0:
            raise MixtureError("mean must be a non-empty vector")
        cov = _as_cov(self.cov, mean.size)
        _check_spd(cov)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def d(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        return GaussianMixture.single(self).logpdf(x)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def __eq__(self, other):
        if not isinstance(other, Gaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __repr__(self):
        if self.d == 1:
            return f"Gaussian(mean={self.mean[0]!r}, var={self.cov[0, 0]!r})"
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Convex combination of Gaussians sharing one dimension.

    The constructor symmetrizes covariances, checks positive definiteness and
    rescales the weights to sum to one if they already do so within
    ``WEIGHT_SUM_TOL``.  It does not drop zero-weight components; use
    :func:`validate` for the tolerant path.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise MixtureError("a mixture needs at least one component")
        n = w.size
        means = np.asarray(self.means, dtype=float)
        if means.ndim <= 1:
            means = means.reshape(n, -1)
        if means.ndim != 2 or means.shape[0] != n:
            raise DimensionMismatchError(f"means shape {means.shape} inconsistent with {n} weights")
        d = means.shape[1]
        if d < 1:
            raise MixtureError("dimension must be at least 1")
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim <= 1 and d == 1:
            covs = covs.reshape(n, 1, 1)
        if covs.shape != (n, d, d):
            raise DimensionMismatchError(f"covs shape {covs.shape} inconsistent with ({n}, {d}, {d})")
        covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(means))):
            raise MixtureError("non-finite weights or means")
        if np.any(w < 0):
            raise MixtureError("negative weight")
        total = w.sum()
        if abs(total - 1.0) >= WEIGHT_SUM_TOL:
            raise MixtureError(f"weights sum to {total!r}, not 1")
        for c in covs:
            _check_spd(c)
        object.__setattr__(self, "weights", _frozen(w / total))
        object.__setattr__(self, "means", _frozen(means))
        object.__setattr__(self, "covs", _frozen(covs))

    @classmethod
    def single(cls, g: Gaussian) -> "GaussianMixture":
        return cls(np.ones(1), g.mean[None, :], g.cov[None, :, :])

    @classmethod
    def from_components(cls, weights, components: Sequence[Gaussian]) -> "GaussianMixture":
        comps = list(components)
        if not comps:
            raise MixtureError("a mixture needs at least one component")
        d = comps[0].d
        if any(c.d != d for c in comps):
            raise DimensionMismatchError("components have different dimensions")
        return cls(weights, np.stack([c.mean for c in comps]), np.stack([c.cov for c in comps]))

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def __len__(self):
        return self.n

    @property
    def components(self) -> list[Gaussian]:
        return [Gaussian(m, c) for m, c in zip(self.means, self.covs)]

    def component(self, i: int) -> Gaussian:
        return Gaussian(self.means[i], self.covs[i])

    def permuted(self, order: Sequence[int]) -> "GaussianMixture":
        order = np.asarray(order)
        return GaussianMixture(self.weights[order], self.means[order], self.covs[order])

    def component_logpdf(self, x) -> np.ndarray:
        """Log-density of every component at the points ``x``, shape ``(m, N)``."""
        x = self._points(x)
        if self.d == 1:
            var = self.covs[:, 0, 0]
            diff = x[:, :1] - self.means[None, :, 0]
            return -0.5 * (LOG_2PI + np.log(var)[None, :] + diff * diff / var[None, :])
        chol = np.linalg.cholesky(self.covs)
        diff = x[:, None, :] - self.means[None, :, :]
        # solve L z = diff for all components at once
        z = np.linalg.solve(chol[None], diff[..., None])[..., 0]
        maha = np.sum(z * z, axis=-1)
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
        return -0.5 * (self.d * LOG_2PI + logdet[None, :] + maha)

    def logpdf(self, x) -> np.ndarray:
        """Log-density evaluated with log-sum-exp, so tails never give ``-inf`` early."""
        lc = self.component_logpdf(x)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logsumexp(lc + logw[None, :], axis=1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        counts = rng.multinomial(size, self.weights)
        chol = np.linalg.cholesky(self.covs)
        out = []
        for k, c in enumerate(counts):
            if c:
                z = rng.standard_normal((c, self.d))
                out.append(self.means[k] + z @ chol[k].T)
        return np.concatenate(out, axis=0)

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1 and x.ndim <= 1:
            return x.reshape(-1, 1)
        x = np.atleast_2d(x)
        if x.shape[-1] != self.d:
            raise DimensionMismatchError(f"points of dimension {x.shape[-1]} for a {self.d}-d mixture")
        return x

    def same_parameters(self, other: "GaussianMixture") -> bool:
        return (
            self.weights.shape == other.weights.shape
            and self.means.shape == other.means.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covs, other.covs)
        )

    def __repr__(self):
        return f"GaussianMixture(n={self.n}, d={self.d}, weights={np.round(self.weights, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class SubMixture:
    """A subset of a mixture's components, keeping the parent weights."""

    parent: GaussianMixture
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise MixtureError("empty sub-mixture")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            idx_sorted = tuple(sorted(set(idx)))
            if len(idx_sorted) != len(idx):
                raise MixtureError("duplicate indices in sub-mixture")
            idx = idx_sorted
        if idx[0] < 0 or idx[-1] >= self.parent.n:
            raise IndexError(f"indices {idx} out of range for a mixture of size {self.parent.n}")
        object.__setattr__(self, "indices", idx)
        if self.total <= 0:
            raise MixtureError("sub-mixture has zero total weight")

    @classmethod
    def whole(cls, gm: GaussianMixture) -> "SubMixture":
        return cls(gm, tuple(range(gm.n)))

    @property
    def unnormalized_weights(self) -> np.ndarray:
        return self.parent.weights[list(self.indices)]

    @property
    def total(self) -> float:
        return float(self.unnormalized_weights.sum())

    @property
    def means(self) -> np.ndarray:
        return self.parent.means[list(self.indices)]

    @property
    def covs(self) -> np.ndarray:
        return self.parent.covs[list(self.indices)]

    def normalized(self) -> GaussianMixture:
        w = self.unnormalized_weights
        return GaussianMixture(w / w.sum(), self.means, self.covs)


def eval_pdf(gm: GaussianMixture, x) -> float:
    """Mixture density at the single point ``x`` (a scalar is fine when d = 1).

    Use :meth:`GaussianMixture.pdf` to evaluate many points at once.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (gm.d,):
        raise DimensionMismatchError(f"point of shape {x.shape} for a {gm.d}-d mixture")
    return float(gm.pdf(x[None, :])[0])


def pooled_moments(gm: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the whole mixture."""
    return _pooled(gm.weights, gm.means, gm.covs)


def _pooled(w: np.ndarray, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # explicit products and numpy's pairwise sum: no fused multiply-add, fixed order
    total = w.sum()
    mean = (w[:, None] * means).sum(axis=0) / total
    diff = means - mean
    cov = (w[:, None, None] * (covs + diff[:, :, None] * diff[:, None, :])).sum(axis=0) / total
    return mean, 0.5 * (cov + cov.T)


def validate(raw) -> GaussianMixture:
    """Build a mixture from raw parameters, enforcing every invariant.

    ``raw`` is either a mapping in the on-disk layout (``weights`` plus
    ``components`` with ``mean``/``cov``, optional ``d``) or an existing
    :class:`GaussianMixture`.  Weights within ``WEIGHT_SUM_TOL`` of summing to
    one are renormalized; components lighter than ``ZERO_WEIGHT`` are dropped.
    """
    if isinstance(raw, GaussianMixture):
        w, means, covs = raw.weights, raw.means, raw.covs
    else:
        try:
            w = np.asarray(raw["weights"], dtype=float)
            comps = raw["components"]
        except (KeyError, TypeError) as exc:
            raise MixtureError(f"malformed mixture: {exc}") from None
        if len(comps) == 0 or w.size == 0:
            raise MixtureError("empty mixture")
        if w.ndim != 1 or len(comps) != w.size:
            raise MixtureError("number of weights and components differ")
        try:
            means = [np.atleast_1d(np.asarray(c["mean"], dtype=float)) for c in comps]
            covs = [np.asarray(c["cov"], dtype=float) for c in comps]
        except (KeyError, TypeError, ValueError) as exc:
            raise MixtureError(f"malformed component: {exc}") from None
        d = means[0].size
        if "d" in raw and int(raw["d"]) != d:
            raise DimensionMismatchError(f"declared d={raw['d']} but means have length {d}")
        if any(m.ndim != 1 or m.size != d for m in means):
            raise DimensionMismatchError("component means have different lengths")
        covs = [_as_cov(c, d) for c in covs]
        means, covs = np.stack(means), np.stack(covs)
    if w.size == 0:
        raise MixtureError("empty mixture")
    if not np.all(np.isfinite(w)):
        raise MixtureError("non-finite weight")
    if np.any(w < 0):
        raise MixtureError("negative weight")
    if abs(w.sum() - 1.0) >= WEIGHT_SUM_TOL:
        raise MixtureError(f"weights sum to {w.sum()!r}, not 1")
    keep = w >= ZERO_WEIGHT
    if not np.any(keep):
        raise MixtureError("all weights are zero")
    w = w[keep]
    return GaussianMixture(w / w.sum(), means[keep], covs[keep])


def mixture_to_dict(gm: GaussianMixture) -> dict:
    return {
        "d": gm.d,
        "weights": [float(v) for v in gm.weights],
        "components": [
            {"mean": [float(v) for v in m], "cov": [[float(v) for v in row] for row in c]}
            for m, c in zip(gm.means, gm.covs)
        ],
    }


def dumps17(obj, indent: int | None = 2) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _render(obj, indent)


def _render(obj, indent, level=0) -> str:
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ","
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not np.isfinite(obj):
            raise ValueError("cannot serialize non-finite float")
        return format(obj, ".17g")
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_render(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_render(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _render(v, indent, level + 1) for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_mixture(gm: GaussianMixture, path) -> None:
    Path(path).write_text(dumps17(mixture_to_dict(gm)) + "\n", encoding="utf-8")


def load_mixture(path) -> GaussianMixture:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MixtureError(f"cannot read mixture file {path}: {exc}") from None
    return validate(raw)


def stack_components(components: Iterable[Gaussian]) -> tuple[np.ndarray, np.ndarray]:
    comps = list(components)
    return np.stack([c.mean for c in comps]), np.stack([c.cov for c in comps])
