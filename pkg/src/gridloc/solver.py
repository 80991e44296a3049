"""Small dense Levenberg-Marquardt with box constraints enforced by projection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ResidualFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class NlsProblem:
    fun: ResidualFn
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        lo, hi, x0 = (np.asarray(a, dtype=float) for a in (self.lower, self.upper, self.x0))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "x0", x0)
        if not (lo.shape == hi.shape == x0.shape):
            raise ValueError("bounds and initial guess must have the same shape")
        if np.any(lo >= hi):
            raise ValueError("each lower bound must be below its upper bound")
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("initial guess violates the bounds")


@dataclass(frozen=True)
class NlsSolution:
    params: np.ndarray
    final_cost: float
    iterations: int
    converged: bool
    message: str = ""
    costs: tuple[float, ...] = field(default=(), repr=False)


def _projected_gradient(x, g, lo, hi):
    pg = g.copy()
    pg[(x <= lo) & (g > 0)] = 0.0
    pg[(x >= hi) & (g < 0)] = 0.0
    return pg


def solve(problem: NlsProblem, max_iter: int = 50, tol: float = 1e-10,
          lam0: float = 1e-3, lam_max: float = 1e16) -> NlsSolution:
    """Minimize 0.5*||r(x)||^2 inside the box [lower, upper].

    Marquardt damping (scaled by diag(J^T J)) starts at ``lam0``, grows 10x on
    a rejected step and shrinks 10x on an accepted one.  Every trial point is
    clipped into the box, so returned parameters always satisfy it.
    """
    lo, hi = problem.lower, problem.upper
    x = problem.x0.copy()
    r, J = problem.fun(x)
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(J)):
        raise ValueError("non-finite residuals at the initial guess")
    cost = 0.5 * float(r @ r)
    costs = [cost]
    lam = lam0
    n = x.size

    for it in range(max_iter):
        g = J.T @ r
        if np.max(np.abs(_projected_gradient(x, g, lo, hi)), initial=0.0) < tol:
            return NlsSolution(x, cost, it, True, "gradient", tuple(costs))
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-12)
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = np.full(n, np.nan)
            x_new = np.clip(x + step, lo, hi) if np.all(np.isfinite(step)) else x
            r_new, J_new = problem.fun(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > lam_max:
                # no representable descent left
                return NlsSolution(x, cost, it + 1, True, "stalled", tuple(costs))
        decrease = (cost - cost_new) / max(cost, 1e-300)
        small_step = np.linalg.norm(x_new - x) <= tol * (np.linalg.norm(x) + tol)
        x, r, J, cost = x_new, r_new, J_new, cost_new
        costs.append(cost)
        if cost == 0.0:
            return NlsSolution(x, cost, it + 1, True, "zero cost", tuple(costs))
        if decrease < tol or small_step:
            return NlsSolution(x, cost, it + 1, True, "cost change", tuple(costs))
    return NlsSolution(x, cost, max_iter, False, "max_iter", tuple(costs))
