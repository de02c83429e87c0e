"""Unconstrained coordinates for mixtures.

Weights are a softmax of ``N`` logits with the last logit pinned to zero, and
each covariance is ``L L^T`` with ``L`` lower triangular, its diagonal stored
as logarithms (log-Cholesky).  Any real vector maps to a valid mixture.
"""
from __future__ import annotations

import numpy as np
from scipy.special import softmax

from .core import GaussianMixture
from .dissim import MixtureGradient

__all__ = ["MixtureCoords"]


class MixtureCoords:
    """Packing/unpacking between a mixture of fixed size and a flat vector."""

    def __init__(self, n: int, d: int):
        self.n, self.d = n, d
        self.rows, self.cols = np.tril_indices(d)
        self.diag = self.rows == self.cols
        self.n_tri = self.rows.size
        self.sizes = (n - 1, n * d, n * self.n_tri)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def _split(self, theta):
        a, b, _ = self.sizes
        return theta[:a], theta[a:a + b].reshape(self.n, self.d), theta[a + b:].reshape(self.n, self.n_tri)

    def pack(self, gm: GaussianMixture) -> np.ndarray:
        if (gm.n, gm.d) != (self.n, self.d):
            raise ValueError(f"expected a mixture of size {self.n} in {self.d}-d")
        with np.errstate(divide="ignore"):
            logw = np.log(gm.weights)
        # zero weights would give -inf logits; keep them tiny but finite
        logw = np.maximum(logw, np.log(1e-300))
        logits = (logw - logw[-1])[:-1]
        chol = np.linalg.cholesky(gm.covs)
        tri = chol[:, self.rows, self.cols].copy()
        tri[:, self.diag] = np.log(tri[:, self.diag])
        return np.concatenate([logits, gm.means.ravel(), tri.ravel()])

    def chol(self, theta) -> np.ndarray:
        _, _, tri = self._split(theta)
        L = np.zeros((self.n, self.d, self.d))
        vals = tri.copy()
        vals[:, self.diag] = np.exp(vals[:, self.diag])
        L[:, self.rows, self.cols] = vals
        return L

    def arrays(self, theta):
        logits, means, _ = self._split(theta)
        w = softmax(np.append(logits, 0.0))
        L = self.chol(theta)
        covs = L @ np.swapaxes(L, -1, -2)
        return w, means.copy(), covs, L

    def unpack(self, theta) -> GaussianMixture:
        w, means, covs, _ = self.arrays(theta)
        return GaussianMixture(w, means, covs)

    def pullback(self, grad: MixtureGradient, theta) -> np.ndarray:
        """Chain rule from a mixture-space gradient to the flat coordinates."""
        w, _, _, L = self.arrays(theta)
        gw = grad.weights
        dlogits = (w * (gw - w @ gw))[:-1]
        # trace(G dS) with S = L L^T gives dF/dL = 2 G L for symmetric G
        dL = 2.0 * grad.covs @ L
        dtri = dL[:, self.rows, self.cols]
        dtri[:, self.diag] *= L[:, self.rows[self.diag], self.cols[self.diag]]
        return np.concatenate([dlogits, grad.means.ravel(), dtri.ravel()])
