"""The metric ``<v, w> / |X(p)|^2`` on the regular set of a flow.

Lengths are computed from sampled curves, distances as shortest paths on a
mesh graph (an upper bound for the true distance).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DomainError, NearFixedPointError
from .properties import HOLDS, VIOLATED, PropertyVerdict, constants_BC

METRIC_REGULAR = 1e-10
EXCLUSION = 1e-3
_STENCIL = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2))
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class RescaledCurve:
    samples: np.ndarray
    field: object

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", pts)
        speed = self.field.speed(pts)
        if np.any(speed <= METRIC_REGULAR):
            k = int(np.argmin(speed))
            raise NearFixedPointError(f"sample {pts[k].tolist()} is too close to a fixed point (speed {speed[k]:.3g})")


def rescaled_length(curve: RescaledCurve) -> float:
    """Sum over segments of Euclidean length divided by the midpoint speed."""
    pts = curve.samples
    if len(pts) < 2:
        return 0.0
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    mid = 0.5 * (pts[1:] + pts[:-1])
    speed = curve.field.speed(mid)
    if np.any(speed <= METRIC_REGULAR):
        raise NearFixedPointError("curve passes through the fixed-point set")
    return float(np.sum(seg / speed))


def edge_lengths(field, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rescaled lengths of the straight edges ``a[k] -> b[k]`` (Gauss-Legendre)."""
    u = 0.5 * (_GL_NODES + 1.0)
    pts = a[:, None, :] + u[None, :, None] * (b - a)[:, None, :]
    speed = field.speed(pts)
    with np.errstate(divide="ignore"):
        integrand = np.where(speed > 0, 1.0 / speed, np.inf)
    return np.linalg.norm(b - a, axis=1) * 0.5 * (integrand @ _GL_WEIGHTS)


def grid_mesh(lo, hi, n: int) -> np.ndarray:
    """``n x n`` grid on the box ``[lo, hi]^2`` as an ``(n, n, 2)`` array."""
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    return np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1)


def rescaled_distance_mesh(
    field, region_mesh: np.ndarray, p, q, fixed_points=(), exclusion: float = EXCLUSION
) -> float:
    """Shortest rescaled path from `p` to `q` on a 16-neighbour grid graph.

    `region_mesh` has shape ``(n, m, 2)``.  Grid vertices stand for
    themselves; other `p` and `q` join the graph as extra vertices linked to
    the corners of their cells.  Grid nodes within `exclusion` of a fixed
    point are dropped.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(region_mesh, dtype=float)
    if G.ndim != 3 or G.shape[-1] != 2:
        raise ValueError("region_mesh must be an (n, m, 2) grid")
    for name, z in (("p", p), ("q", q)):
        for s in fixed_points:
            if np.linalg.norm(z - np.asarray(s, dtype=float)) < exclusion:
                raise DomainError(f"{name}={z.tolist()} lies within {exclusion} of the fixed point {list(s)}")
    if np.array_equal(p, q):
        return 0.0
    n, m, _ = G.shape
    flat = G.reshape(-1, 2)
    alive = np.ones(n * m, dtype=bool)
    for s in fixed_points:
        alive &= np.linalg.norm(flat - np.asarray(s, dtype=float), axis=1) >= exclusion
    idx = np.arange(n * m).reshape(n, m)
    src, dst = [], []
    # 16-neighbour stencil: worst-case direction bias about 2.7%
    for di, dj in _STENCIL:
        a = idx[max(0, -di) : n - max(0, di), max(0, -dj) : m - max(0, dj)]
        b = idx[max(0, di) : max(0, di) + a.shape[0], max(0, dj) : max(0, dj) + a.shape[1]]
        src.append(a.ravel())
        dst.append(b.ravel())
    src, dst = np.concatenate(src), np.concatenate(dst)
    keep = alive[src] & alive[dst]
    src, dst = src[keep], dst[keep]
    extra_src, extra_dst = [], []
    extra = np.vstack([p, q])
    ends = []
    for k, z in enumerate(extra):
        v = _grid_vertex(G, z)
        if v is not None and alive[v]:
            ends.append(v)
            continue
        node = n * m + k
        near = [c for c in _cell_corners(G, z) if alive[c]]
        if not near:
            raise DomainError(f"point {z.tolist()} is outside the mesh")
        extra_src += [node] * len(near)
        extra_dst += near
        ends.append(node)
    all_pts = np.vstack([flat, extra])
    src = np.concatenate([src, extra_src]).astype(int)
    dst = np.concatenate([dst, extra_dst]).astype(int)
    w = edge_lengths(field, all_pts[src], all_pts[dst])
    ok = np.isfinite(w) & (w > 0)
    N = n * m + 2
    graph = coo_matrix((w[ok], (src[ok], dst[ok])), shape=(N, N)).tocsr()
    d = dijkstra(graph, directed=False, indices=ends[0])
    return float(d[ends[1]])


def _grid_vertex(G, z) -> Optional[int]:
    n, m, _ = G.shape
    gx, gy = G[:, 0, 0], G[0, :, 1]
    i, j = int(np.argmin(np.abs(gx - z[0]))), int(np.argmin(np.abs(gy - z[1])))
    if abs(gx[i] - z[0]) <= 1e-12 and abs(gy[j] - z[1]) <= 1e-12:
        return i * m + j
    return None


def _cell_corners(G, z) -> list:
    n, m, _ = G.shape
    gx, gy = G[:, 0, 0], G[0, :, 1]
    i = int(np.clip(np.searchsorted(gx, z[0]) - 1, 0, n - 2))
    j = int(np.clip(np.searchsorted(gy, z[1]) - 1, 0, m - 2))
    if not (gx[0] - 1e-12 <= z[0] <= gx[-1] + 1e-12 and gy[0] - 1e-12 <= z[1] <= gy[-1] + 1e-12):
        return []
    return [a * m + b for a in (i, i + 1) for b in (j, j + 1)]


def cylinder_chart(r, theta) -> np.ndarray:
    """``(r, theta) -> e^r (cos theta, sin theta)``."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.exp(r) * np.cos(theta), np.exp(r) * np.sin(theta)], axis=-1)


def cylinder_pushforward(r, theta, v) -> np.ndarray:
    """Differential of :func:`cylinder_chart` applied to ``v = (v_r, v_theta)``."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    e = np.exp(r)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([e * (c * v[..., 0] - s * v[..., 1]), e * (s * v[..., 0] + c * v[..., 1])], axis=-1)


def cylinder_isometry_check(sample_count: int = 1000, seed: int = 0, tol: float = 1e-9) -> PropertyVerdict:
    """Flat cylinder vs the plane with the rotation-rescaled metric.

    Random base points and tangent vectors are pushed forward by the chart;
    the rescaled norm (Euclidean norm over ``|(-y, x)|``) must equal the flat
    norm of the original vector.
    """
    rng = np.random.default_rng(seed)
    r = rng.uniform(-5.0, 2.0, sample_count)
    th = rng.uniform(0.0, 2 * np.pi, sample_count)
    v = rng.normal(size=(sample_count, 2))
    base = cylinder_chart(r, th)
    w = cylinder_pushforward(r, th, v)
    speed = np.hypot(base[:, 0], base[:, 1])
    rel = np.abs(np.linalg.norm(w, axis=1) / speed - np.linalg.norm(v, axis=1)) / np.linalg.norm(v, axis=1)
    k = int(np.argmax(rel))
    witness = {"max_relative_error": float(rel[k]), "r": float(r[k]), "theta": float(th[k]), "v": v[k].tolist()}
    params = {"samples": sample_count, "seed": seed, "tol": tol}
    return PropertyVerdict("isometry", HOLDS if rel[k] <= tol else VIOLATED, witness, params)


def speed_comparison_check(
    flow,
    samples,
    delta: float,
    rho: Optional[float] = None,
    local_n: int = 41,
    seed: int = 0,
    exclusion: float = EXCLUSION,
) -> PropertyVerdict:
    """Check that ``dist(p, q) <= rho |X(p)|`` forces ``dist_r(p, q) <= delta``.

    `rho` defaults to ``0.9`` times the largest value with
    ``B C rho / (1 - rho B) < delta``.  For each sample ``p`` a partner ``q``
    at distance ``rho |X(p)|`` in a random direction is joined by the mesh
    upper bound for ``dist_r`` on a local ``local_n x local_n`` grid.
    """
    fps = flow.fixed_points
    bc = constants_BC(flow)
    B, C = bc.B, bc.C
    if rho is None:
        rho = 0.9 * delta / (B * C + delta * B)
    if not B * C * rho / (1 - rho * B) < delta:
        raise ValueError("rho does not satisfy the speed-comparison hypothesis")
    rng = np.random.default_rng(seed)
    worst, wit = 0.0, {}
    tested = 0
    for p in np.atleast_2d(np.asarray(samples, dtype=float)):
        sp = float(flow.field.speed(p))
        if sp <= METRIC_REGULAR:
            continue
        a = rng.uniform(0, 2 * np.pi)
        q = p + rho * sp * np.array([np.cos(a), np.sin(a)])
        half = 2 * rho * sp
        G = grid_mesh(p - half, p + half, local_n)
        dr = rescaled_distance_mesh(flow.field, G, p, q, fps, exclusion)
        tested += 1
        if dr >= worst:
            worst, wit = dr, {"p": p.tolist(), "q": q.tolist(), "dist_r_upper": dr}
    params = {"delta": delta, "rho": rho, "B": B, "C": C, "tested": tested, "local_grid": local_n}
    wit["max_dist_r"] = worst
    return PropertyVerdict("speed_comparison", HOLDS if worst <= delta else VIOLATED, wit, params)
