"""PNG figures written next to the CLI's CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def power_map_png(pm, path, truth=None, estimate=None, anchors=()) -> None:
    """Heatmap of the sweep score with truth, estimate and RIS positions marked."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    dx = (pm.xs[1] - pm.xs[0]) / 2 if len(pm.xs) > 1 else 0.5
    dy = (pm.ys[1] - pm.ys[0]) / 2 if len(pm.ys) > 1 else 0.5
    ext = (pm.xs[0] - dx, pm.xs[-1] + dx, pm.ys[0] - dy, pm.ys[-1] + dy)
    im = ax.imshow(pm.score, origin="lower", extent=ext, cmap="viridis", aspect="equal")
    fig.colorbar(im, ax=ax, label="score (sum of normalized beam power)")
    if truth is not None:
        ax.plot(truth[0], truth[1], "w+", ms=12, mew=2, label="true UE")
        ax.add_patch(plt.Circle(truth[:2], 0.1, fill=False, ec="w", ls="--"))
    if estimate is not None:
        ax.plot(estimate[0], estimate[1], "rx", ms=10, mew=2, label="estimate")
    for name, p in anchors:
        if ext[0] <= p[0] <= ext[1] and ext[2] <= p[1] <= ext[3]:
            ax.plot(p[0], p[1], "ws", ms=6)
            ax.annotate(name, p[:2], color="w", xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def crb_mc_png(points, path, title: str = "") -> None:
    """RMSE and CRB against the sigma scale on log-log axes."""
    sc = np.array([p.scale for p in points])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(sc, [p.crb for p in points], "k-", label="sqrt(trace CRB)")
    ax.loglog(sc, [p.rmse for p in points], "o", label="Monte-Carlo RMSE")
    ax.set_xlabel("sigma scale")
    ax.set_ylabel("position error [m]")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _save(fig, path)


def nearfield_png(points, path, fraunhofer: float | None = None) -> None:
    """Position-FIM rank and singular values across the range ladder."""
    r = np.array([p.range_m for p in points])
    sv = np.array([p.singular_values for p in points])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5.5, 5), sharex=True)
    a1.semilogx(r, [p.position_rank for p in points], "o-")
    a1.set_ylabel("position rank")
    a1.set_yticks(range(4))
    for k in range(sv.shape[1]):
        a2.loglog(r, np.maximum(sv[:, k], 1e-300), label=f"sv {k + 1}")
    a2.set_xlabel("range from RIS [m]")
    a2.set_ylabel("equilibrated EFIM sv")
    a2.legend(fontsize=8)
    if fraunhofer:
        for a in (a1, a2):
            a.axvline(fraunhofer, color="k", ls=":", lw=1)
    _save(fig, path)
