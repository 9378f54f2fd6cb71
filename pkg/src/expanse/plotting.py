"""Static SVG figures of orbits and verdict witnesses."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import SPHERE

_RC = {"svg.hashsalt": "expanse", "svg.fonttype": "none", "path.simplify": False}


def _chart(space, pts: np.ndarray) -> np.ndarray:
    # sphere: longitude against height; everything else: first two coordinates
    if space is not None and space.base.kind == SPHERE:
        return np.column_stack([np.arctan2(pts[:, 1], pts[:, 0]), pts[:, 2]])
    return pts[:, :2]


def _split_jumps(xy: np.ndarray, jump: float) -> list:
    cuts = np.flatnonzero(np.linalg.norm(np.diff(xy, axis=0), axis=1) > jump) + 1
    return np.split(xy, cuts)


def orbit_figure(seg, title: str = ""):
    """Figure with the orbit polyline in the xy-plane (longitude/height for the sphere)."""
    xy = _chart(seg.space, seg.points)
    fig, ax = plt.subplots(figsize=(5, 5))
    for piece in _split_jumps(xy, 0.5):
        ax.plot(piece[:, 0], piece[:, 1], lw=1.0, color="C0")
    ax.plot(*xy[0], "o", color="C1", ms=4, label="start")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title or seg.flow_id)
    ax.legend(loc="upper right", fontsize=8)
    return fig


def verdict_figure(verdict, flow=None):
    """Figure summarising a verdict; efficiency witnesses draw the arc and the ball."""
    fig, ax = plt.subplots(figsize=(5, 5))
    w = verdict.witness or {}
    if flow is not None and "ball_center" in w and "x" in w:
        from .flow import sample_orbit

        t, u = w["t"], w["u"]
        seg = sample_orbit(flow, w["x"], min(t, u, 0.0), max(t, u, 0.0), 801)
        xy = _chart(flow.space, seg.points)
        ax.plot(xy[:, 0], xy[:, 1], lw=1.0, color="C0", label="arc")
        c = _chart(flow.space, np.atleast_2d(w["ball_center"]))[0]
        ax.add_patch(plt.Circle(c, w["ball_radius"], fill=False, color="C3", label="ball"))
        off = _chart(flow.space, np.atleast_2d(w["offending_point"]))[0]
        ax.plot(*off, "x", color="C3", ms=6, label="leaves ball")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(loc="upper right", fontsize=8)
    else:
        lines = [f"{k}: {v}" for k, v in sorted(w.items()) if not isinstance(v, (list, dict))]
        ax.text(0.02, 0.98, "\n".join(lines[:20]) or "(no witness)", va="top", ha="left", fontsize=7, family="monospace")
        ax.axis("off")
    ax.set_title(f"{verdict.property}: {verdict.verdict}")
    return fig


def save_svg(fig, path) -> None:
    """Write `fig` as SVG with byte-stable output."""
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def render_svg(obj, path, flow=None):
    """Render an :class:`OrbitSegment` or a verdict to the SVG file `path`."""
    if hasattr(obj, "points") and hasattr(obj, "times"):
        fig = orbit_figure(obj)
    else:
        fig = verdict_figure(obj, flow)
    save_svg(fig, path)
    return fig
