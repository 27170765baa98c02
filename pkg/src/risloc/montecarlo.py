"""Monte-Carlo position RMSE against the Cramér-Rao bound."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .identifiability import fim, ident_report, position_crb_rmse
from .measurements import generate
from .scene import Scenario
from .solvers import SolveRequest, SolverError, solve
from .solvers.core import NonIdentifiableWarning

log = logging.getLogger(__name__)

DEFAULT_SCALES = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class McPoint:
    scale: float
    rmse: float
    crb: float
    trials: int
    failures: int

    @property
    def ratio(self) -> float:
        return self.rmse / self.crb


def crb_monte_carlo(s: Scenario, scales=DEFAULT_SCALES, trials: int = 500, seed: int = 0) -> list[McPoint]:
    """Position RMSE of the full solver over seeded noisy trials, per sigma scale.

    Every sigma of the scenario is multiplied by ``scale``. Trial ``i`` at
    level ``k`` draws its noise from a seed derived from ``(seed, k, i)``,
    so results do not depend on execution order. Solver failures count
    against the trial budget and are reported, not silently dropped.
    """
    if s.ue is None:
        raise ValueError(f"{s.name}: Monte-Carlo needs a true UE state in the scenario")
    out = []
    base = s.all_sigmas()
    for k, sc in enumerate(scales):
        sig = {kind: v * sc for kind, v in base.items()}
        crb = position_crb_rmse(ident_report(fim(s, s.ue, sig)))
        states = np.random.SeedSequence([seed, k]).generate_state(trials, dtype=np.uint64)
        err2, fails = [], 0
        for st in states:
            ms = generate(s, s.ue, sig, seed=int(st))
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NonIdentifiableWarning)
                    res = solve(SolveRequest(s, ms, diagnostics=False))
            except SolverError:
                fails += 1
                continue
            err2.append(float(np.sum((res.state.p - s.ue.p) ** 2)))
        rmse = float(np.sqrt(np.mean(err2))) if err2 else float("nan")
        log.info("%s scale %g: rmse %.4g crb %.4g (%d failures)", s.name, sc, rmse, crb, fails)
        out.append(McPoint(float(sc), rmse, crb, trials, fails))
    return out


def loglog_slope(points) -> float:
    """Least-squares slope of log(RMSE) against log(scale)."""
    x = np.log([p.scale for p in points])
    y = np.log([p.rmse for p in points])
    return float(np.polyfit(x, y, 1)[0])


def mc_csv(points, meta: dict | None = None) -> str:
    lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    lines.append("sigma_scale,rmse,crb,ratio,trials,failures")
    for p in points:
        lines.append(f"{float(p.scale)!r},{float(p.rmse)!r},{float(p.crb)!r},{float(p.ratio)!r},{p.trials},{p.failures}")
    return "\n".join(lines) + "\n"
