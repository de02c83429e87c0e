"""Dissimilarities between Gaussian mixtures.

ISE and NISE are evaluated in closed form from Gram matrices of Gaussian
product integrals (the "likeness" blocks).  Their gradients with respect to
the reduced mixture's weights, means and covariances are analytic.  The KLD is
closed form only between two Gaussians; between mixtures it is integrated
numerically (adaptive quadrature in 1-d, Monte Carlo otherwise).
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .core import LOG_2PI, DimensionMismatchError, Gaussian, GaussianMixture

__all__ = [
    "Measure",
    "LikenessMatrices",
    "QuadratureConfig",
    "KLDEstimate",
    "MixtureGradient",
    "QuadratureError",
    "gaussian_product_integral",
    "product_integral_matrix",
    "likeness",
    "ise",
    "nise",
    "ise_gradient",
    "nise_gradient",
    "kld_gaussians",
    "kld_gm_numeric",
    "dissimilarity",
    "NEG_CLAMP",
]

NEG_CLAMP = 1e-14


class Measure(str, enum.Enum):
    KLD = "kld"
    ISE = "ise"
    NISE = "nise"

    @classmethod
    def parse(cls, value) -> "Measure":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-9
    support_sigmas: float = 12.0
    max_subdivisions: int = 10**6
    mc_samples: int = 200_000
    seed: int = 42

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if not self.support_sigmas >= 6:
            raise ValueError("support_sigmas must be at least 6")
        if self.mc_samples < 1000:
            raise ValueError("mc_samples must be at least 1000")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _check_dims(f: GaussianMixture, g: GaussianMixture) -> None:
    if f.d != g.d:
        raise DimensionMismatchError(f"cannot compare a {f.d}-d and a {g.d}-d mixture")


def _pair_terms(means_a, covs_a, means_b, covs_b):
    """Product integrals between every (a, b) pair plus the pieces the gradients need.

    Returns ``H`` of shape ``(Na, Nb)``, ``u = S^{-1}(mu_a - mu_b)`` of shape
    ``(Na, Nb, d)`` and ``S^{-1}`` of shape ``(Na, Nb, d, d)``.
    """
    d = means_a.shape[1]
    S = covs_a[:, None] + covs_b[None, :]
    delta = means_a[:, None, :] - means_b[None, :, :]
    if d == 1:
        s = S[..., 0, 0]
        Sinv = (1.0 / s)[..., None, None]
        u = delta / s[..., None]
        logdet = np.log(s)
    else:
        Sinv = np.linalg.inv(S)
        Sinv = 0.5 * (Sinv + np.swapaxes(Sinv, -1, -2))
        u = np.einsum("abij,abj->abi", Sinv, delta)
        logdet = np.linalg.slogdet(S)[1]
    quad = np.sum(delta * u, axis=-1)
    H = np.exp(-0.5 * (d * LOG_2PI + logdet + quad))
    return H, u, Sinv


def product_integral_matrix(a: GaussianMixture, b: GaussianMixture) -> np.ndarray:
    """Matrix of component product integrals, ``[H]_ik = N(mu_i | mu_k, S_i + S_k)``."""
    _check_dims(a, b)
    return _pair_terms(a.means, a.covs, b.means, b.covs)[0]


def gaussian_product_integral(a: Gaussian, b: Gaussian) -> float:
    """Integral of the product of two Gaussian densities."""
    if a.d != b.d:
        raise DimensionMismatchError(f"cannot multiply a {a.d}-d and a {b.d}-d Gaussian")
    H, _, _ = _pair_terms(a.mean[None], a.cov[None], b.mean[None], b.cov[None])
    return float(H[0, 0])


@dataclass(frozen=True, eq=False)
class LikenessMatrices:
    """Gram matrices of two mixtures and the self/cross likeness scalars."""

    Hhh: np.ndarray
    Hhr: np.ndarray
    Hrr: np.ndarray
    Jhh: float
    Jhr: float
    Jrr: float


def likeness(f: GaussianMixture, g: GaussianMixture) -> LikenessMatrices:
    _check_dims(f, g)
    Hhh = product_integral_matrix(f, f)
    Hhr = product_integral_matrix(f, g)
    Hrr = product_integral_matrix(g, g)
    return LikenessMatrices(
        Hhh=Hhh,
        Hhr=Hhr,
        Hrr=Hrr,
        Jhh=float(f.weights @ Hhh @ f.weights),
        Jhr=float(f.weights @ Hhr @ g.weights),
        Jrr=float(g.weights @ Hrr @ g.weights),
    )


def self_likeness(f: GaussianMixture) -> float:
    return float(f.weights @ product_integral_matrix(f, f) @ f.weights)


def _ise_from(Jhh: float, Jhr: float, Jrr: float) -> float:
    value = Jhh - 2.0 * Jhr + Jrr
    if value < 0.0:
        if value < -NEG_CLAMP * max(1.0, Jhh + Jrr):
            raise ArithmeticError(f"ISE evaluated to {value!r}, beyond round-off")
        return 0.0
    return value


_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def _nise_from(Jhh: float, Jhr: float, Jrr: float) -> float:
    # Jhr > 0 always, but for far-apart mixtures 1 - ratio rounds up to 1.0
    return min(max(0.0, 1.0 - 2.0 * Jhr / (Jhh + Jrr)), _BELOW_ONE)


def ise(f: GaussianMixture, g: GaussianMixture, *, Jhh: float | None = None) -> float:
    """Integral squared error between ``f`` and ``g``.

    ``Jhh`` may be passed when the self-likeness of ``f`` is already known,
    which saves the ``N^h x N^h`` block in greedy loops.
    """
    _check_dims(f, g)
    if Jhh is None:
        Jhh = self_likeness(f)
    Jhr = float(f.weights @ product_integral_matrix(f, g) @ g.weights)
    return _ise_from(Jhh, Jhr, self_likeness(g))


def nise(f: GaussianMixture, g: GaussianMixture, *, Jhh: float | None = None) -> float:
    """Normalized ISE, ``1 - 2 Jhr / (Jhh + Jrr)``, in ``[0, 1)``."""
    _check_dims(f, g)
    if Jhh is None:
        Jhh = self_likeness(f)
    Jhr = float(f.weights @ product_integral_matrix(f, g) @ g.weights)
    return _nise_from(Jhh, Jhr, self_likeness(g))


@dataclass(frozen=True, eq=False)
class MixtureGradient:
    """Partial derivatives with respect to every parameter of a mixture.

    ``covs`` holds the symmetric matrix gradient ``G`` such that a symmetric
    perturbation ``dS`` changes the objective by ``trace(G dS)``.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    value: float = field(default=np.nan)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.means.ravel(), self.covs.ravel()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def _j_partials(Hw, u, Sinv):
    """Mean and covariance partials of ``sum_i sum_k a_i H_ik b_k`` w.r.t. the b-side.

    ``Hw[i, k] = a_i H_ik b_k`` and ``u``/``Sinv`` come from :func:`_pair_terms`
    with ``a`` as the first argument, so ``u = S^{-1}(mu_a - mu_b)``.
    """
    # d/dmu_b of N(mu_a | mu_b, S) = +H * S^{-1}(mu_a - mu_b)
    dmu = np.einsum("ik,iks->ks", Hw, u)
    # d/dS of N(.) = 0.5 H (S^{-1} delta delta^T S^{-1} - S^{-1})
    outer = u[..., :, None] * u[..., None, :]
    dS = 0.5 * np.einsum("ik,ikst->kst", Hw, outer - Sinv)
    return dmu, dS


def _likeness_grads(f: GaussianMixture, g: GaussianMixture, Jhh: float | None):
    """Values and reduced-side partials of ``Jhr`` and ``Jrr``."""
    _check_dims(f, g)
    if Jhh is None:
        Jhh = self_likeness(f)
    wh, wr = f.weights, g.weights
    Hhr, u_hr, Si_hr = _pair_terms(f.means, f.covs, g.means, g.covs)
    Hrr, u_rr, Si_rr = _pair_terms(g.means, g.covs, g.means, g.covs)
    Jhr = float(wh @ Hhr @ wr)
    Jrr = float(wr @ Hrr @ wr)

    dJhr_w = Hhr.T @ wh
    dJhr_mu, dJhr_S = _j_partials(wh[:, None] * Hhr * wr[None, :], u_hr, Si_hr)

    dJrr_w = 2.0 * (Hrr @ wr)
    # every off-diagonal pair appears twice; the diagonal H_kk depends on 2 S_k
    dJrr_mu, dJrr_S = _j_partials(wr[:, None] * Hrr * wr[None, :], u_rr, Si_rr)
    dJrr_mu = 2.0 * dJrr_mu
    dJrr_S = 2.0 * dJrr_S
    return Jhh, (Jhr, dJhr_w, dJhr_mu, dJhr_S), (Jrr, dJrr_w, dJrr_mu, dJrr_S)


def ise_gradient(f: GaussianMixture, g: GaussianMixture, *, Jhh: float | None = None) -> MixtureGradient:
    """Gradient of ``ise(f, g)`` with respect to the parameters of ``g``."""
    Jhh, hr, rr = _likeness_grads(f, g, Jhh)
    Jhr, dhr_w, dhr_mu, dhr_S = hr
    Jrr, drr_w, drr_mu, drr_S = rr
    covs = drr_S - 2.0 * dhr_S
    return MixtureGradient(
        weights=drr_w - 2.0 * dhr_w,
        means=drr_mu - 2.0 * dhr_mu,
        covs=0.5 * (covs + np.swapaxes(covs, -1, -2)),
        value=_ise_from(Jhh, Jhr, Jrr),
    )


def nise_gradient(f: GaussianMixture, g: GaussianMixture, *, Jhh: float | None = None) -> MixtureGradient:
    """Gradient of ``nise(f, g)`` with respect to the parameters of ``g``."""
    Jhh, hr, rr = _likeness_grads(f, g, Jhh)
    Jhr, dhr_w, dhr_mu, dhr_S = hr
    Jrr, drr_w, drr_mu, drr_S = rr
    den = Jhh + Jrr
    # d(1 - 2 Jhr / den) = -2 (dJhr den - Jhr dJrr) / den^2
    a, b = -2.0 / den, 2.0 * Jhr / den**2
    covs = a * dhr_S + b * drr_S
    return MixtureGradient(
        weights=a * dhr_w + b * drr_w,
        means=a * dhr_mu + b * drr_mu,
        covs=0.5 * (covs + np.swapaxes(covs, -1, -2)),
        value=_nise_from(Jhh, Jhr, Jrr),
    )


def kld_gaussians(a: Gaussian, b: Gaussian) -> float:
    """Closed-form ``KL(a || b)`` between two Gaussians."""
    if a.d != b.d:
        raise DimensionMismatchError(f"cannot compare a {a.d}-d and a {b.d}-d Gaussian")
    chol_b = np.linalg.cholesky(b.cov)
    chol_a = np.linalg.cholesky(a.cov)
    Binv_A = np.linalg.solve(b.cov, a.cov)
    diff = b.mean - a.mean
    z = np.linalg.solve(chol_b, diff)
    logdet = 2.0 * (np.sum(np.log(np.diag(chol_b))) - np.sum(np.log(np.diag(chol_a))))
    value = 0.5 * (np.trace(Binv_A) + logdet + z @ z - a.d)
    return max(0.0, float(value))


@dataclass(frozen=True)
class KLDEstimate:
    """Numeric KLD with its error estimate (quadrature bound or MC standard error)."""

    value: float
    error: float
    method: str

    def __float__(self):
        return self.value


def _support(f: GaussianMixture, g: GaussianMixture, k: float) -> tuple[float, float]:
    sig = np.sqrt(max(f.covs[:, 0, 0].max(), g.covs[:, 0, 0].max()))
    lo = min(f.means[:, 0].min(), g.means[:, 0].min()) - k * sig
    hi = max(f.means[:, 0].max(), g.means[:, 0].max()) + k * sig
    return float(lo), float(hi)


def kld_gm_numeric(f: GaussianMixture, g: GaussianMixture, cfg: QuadratureConfig | None = None) -> KLDEstimate:
    """``KL(f || g)`` between mixtures by numerical integration.

    For d = 1 the integrand ``f (log f - log g)`` is integrated adaptively over
    the means' range widened by ``cfg.support_sigmas`` standard deviations.
    For d >= 2 the expectation ``E_f[log f - log g]`` is estimated from
    ``cfg.mc_samples`` draws of ``f`` seeded by ``cfg.seed``.
    """
    _check_dims(f, g)
    cfg = cfg or QuadratureConfig()
    if f.d == 1:
        return _kld_quad(f, g, cfg)
    return _kld_mc(f, g, cfg)


def _log_density_1d(gm: GaussianMixture):
    """Scalar log-density of a 1-d mixture with its constants hoisted out."""
    var = gm.covs[:, 0, 0]
    with np.errstate(divide="ignore"):
        offset = np.log(gm.weights) - 0.5 * (LOG_2PI + np.log(var))
    mu = gm.means[:, 0]
    half_prec = 0.5 / var

    def logpdf(x: float) -> float:
        a = offset - (x - mu) ** 2 * half_prec
        top = a.max()
        return float(top + np.log(np.exp(a - top).sum()))

    return logpdf


def _kld_quad(f, g, cfg: QuadratureConfig) -> KLDEstimate:
    lo, hi = _support(f, g, cfg.support_sigmas)
    log_f, log_g = _log_density_1d(f), _log_density_1d(g)

    def integrand(x: float) -> float:
        lf = log_f(x)
        return np.exp(lf) * (lf - log_g(x))

    # split at component means so every bump is resolved by its own panel
    pts = np.unique(np.concatenate([f.means[:, 0], g.means[:, 0]]))
    edges = np.concatenate([[lo], pts[(pts > lo) & (pts < hi)], [hi]])
    total, err = 0.0, 0.0
    budget = cfg.max_subdivisions
    for a, b in zip(edges[:-1], edges[1:]):
        limit = int(min(budget, 200))
        while True:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, e = integrate.quad(
                        integrand, a, b, epsabs=cfg.abs_tol / (len(edges) - 1), epsrel=0.0, limit=limit
                    )
                    break
                except integrate.IntegrationWarning:
                    if limit >= budget:
                        raise QuadratureError(
                            f"KLD quadrature did not converge within {budget} subdivisions"
                        ) from None
                    limit = int(min(budget, limit * 10))
        total += val
        err += e
    if total < 0.0:
        if total < -cfg.abs_tol:
            raise QuadratureError(f"KLD quadrature returned {total!r}")
        total = 0.0
    return KLDEstimate(float(total), float(err), "quadrature")


def _kld_mc(f, g, cfg: QuadratureConfig) -> KLDEstimate:
    rng = np.random.default_rng(cfg.seed)
    x = f.sample(cfg.mc_samples, rng)
    terms = f.logpdf(x) - g.logpdf(x)
    mean = float(np.mean(terms))
    se = float(np.std(terms, ddof=1) / np.sqrt(terms.size))
    if mean < 0.0 and mean > -3.0 * se:
        mean = 0.0
    return KLDEstimate(max(mean, 0.0), se, "monte-carlo")


def dissimilarity(f: GaussianMixture, g: GaussianMixture, measure, cfg: QuadratureConfig | None = None) -> float:
    """Dispatch on ``measure``; the KLD goes through :func:`kld_gm_numeric`."""
    m = Measure.parse(measure)
    if m is Measure.ISE:
        return ise(f, g)
    if m is Measure.NISE:
        return nise(f, g)
    if f.n == 1 and g.n == 1:
        return kld_gaussians(f.component(0), g.component(0))
    return kld_gm_numeric(f, g, cfg).value
