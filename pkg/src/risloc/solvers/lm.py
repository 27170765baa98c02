"""Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEP_TOL = 1e-10
MAX_ITER = 100


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    history: list


def levenberg_marquardt(residual, jacobian, x0, max_iter: int = MAX_ITER, step_tol: float = STEP_TOL, mu0: float = 1e-3):
    """Minimize ``||residual(x)||^2``.

    Columns are equilibrated before damping so ``mu`` is unit-free. A step is
    accepted only if it lowers the cost, hence ``history`` (accepted costs) is
    non-increasing. Convergence: a proposed step shorter than ``step_tol`` or
    an exactly zero residual. Running out of damping growth without an
    improving step returns ``converged=False``.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = float(r @ r)
    history = [cost]
    mu = mu0
    for it in range(max_iter):
        if cost == 0.0:
            return LMResult(x, cost, it, True, history)
        J = jacobian(x)
        scale = np.linalg.norm(J, axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        Js = J / scale
        A = Js.T @ Js
        g = Js.T @ r
        if np.max(np.abs(g)) <= 1e-15 * max(1.0, np.sqrt(cost)):
            return LMResult(x, cost, it, True, history)
        while True:
            try:
                dz = -np.linalg.solve(A + mu * np.eye(len(g)), g)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(A + mu * np.eye(len(g)), g, rcond=None)[0]
            dx = dz / scale
            step = float(np.linalg.norm(dx))
            x_new = x + dx
            r_new = residual(x_new)
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new < cost:
                x, r, cost = x_new, r_new, c_new
                history.append(cost)
                mu = max(mu / 3.0, 1e-12)
                if step < step_tol:
                    return LMResult(x, cost, it + 1, True, history)
                break
            if step < step_tol:
                return LMResult(x, cost, it + 1, True, history)
            mu *= 4.0
            if mu > 1e16:
                return LMResult(x, cost, it + 1, False, history)
    return LMResult(x, cost, max_iter, False, history)
