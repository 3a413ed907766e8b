"""Damped Gauss-Newton (Levenberg-Marquardt) least squares."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    cost: float  # 0.5 * sum(residual**2)
    residuals: np.ndarray
    jacobian: np.ndarray
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)


def numeric_jacobian(fun: Callable, x: np.ndarray, r0: np.ndarray | None = None,
                     rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a residual function."""
    x = np.asarray(x, dtype=float)
    jac = np.empty((len(r0) if r0 is not None else len(fun(x)), len(x)))
    for i in range(len(x)):
        h = rel_step * max(abs(x[i]), 1e-3)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (fun(xp) - fun(xm)) / (2 * h)
    return jac


def levenberg_marquardt(fun: Callable, x0, jac: Callable | None = None, max_iter: int = 200,
                        ftol: float = 1e-12, xtol: float = 1e-10, gtol: float = 1e-12,
                        lam0: float = 1e-3) -> LeastSquaresResult:
    """Minimise 0.5 ||fun(x)||^2.

    Trial steps solve (J^T J + lam diag(J^T J)) dx = -J^T r; a step is taken
    only when it lowers the cost, otherwise the damping grows and the step
    is retried, so accepted costs are monotonically non-increasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = np.asarray(fun(x), dtype=float)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = lam0
    converged = False
    it = 0

    def jacobian(xv, rv):
        return np.asarray(jac(xv), dtype=float) if jac is not None else numeric_jacobian(fun, xv, rv)

    J = jacobian(x, r)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if np.max(np.abs(g)) <= gtol * max(1.0, cost):
            converged = True
            break
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        improved = False
        for _ in range(40):
            try:
                dx = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x + dx
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = cost < np.inf
            break
        step_small = np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol)
        rel_drop = (cost - cost_new) <= ftol * max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        J = jacobian(x, r)
        if step_small or rel_drop:
            converged = True
            break
    return LeastSquaresResult(x, cost, r, J, it, converged, history)
