"""Steepest descent with Armijo backtracking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["DescentConfig", "DescentResult", "gradient_descent"]


@dataclass(frozen=True)
class DescentConfig:
    grad_tol: float = 1e-8
    max_iters: int = 5000
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    init_step: float = 1.0

    def __post_init__(self):
        for name in ("grad_tol", "max_iters", "armijo_c", "init_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


# below this step length the line search has run out of floating-point room
_MIN_STEP = 1e-20


def gradient_descent(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    cfg: DescentConfig | None = None,
    fun: Callable[[np.ndarray], float] | None = None,
) -> DescentResult:
    """Minimize ``fun_grad`` from ``x0``.

    Each iteration moves along the negative gradient.  The first trial step of
    an iteration is the previous accepted step enlarged by
    ``1 / backtrack_factor`` (``cfg.init_step`` on the first iteration), and is
    shrunk by ``backtrack_factor`` until the Armijo sufficient-decrease test
    passes.  ``fun`` may supply a cheaper value-only evaluation for the line
    search.  The returned point is never worse than ``x0``.
    """
    cfg = cfg or DescentConfig()
    fun = fun or (lambda z: fun_grad(z)[0])
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    history = [f]
    step = cfg.init_step
    gnorm = float(np.linalg.norm(g))
    converged = gnorm < cfg.grad_tol
    it = 0
    while not converged and it < cfg.max_iters:
        slope = -float(g @ g)
        t = step
        while True:
            x_new = x - t * g
            if np.array_equal(x_new, x):
                t = 0.0
                break
            f_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + cfg.armijo_c * t * slope:
                break
            t *= cfg.backtrack_factor
            if t < _MIN_STEP:
                break
        if t < _MIN_STEP:
            break
        it += 1
        x = x_new
        f, g = fun_grad(x)
        history.append(f)
        gnorm = float(np.linalg.norm(g))
        converged = gnorm < cfg.grad_tol
        step = t / cfg.backtrack_factor
    return DescentResult(x=x, value=float(f), grad_norm=gnorm, iterations=it, converged=converged, history=history)
