"""Orbit integration, orbit sampling, arc diameters and fixed points.

Integration uses an embedded Dormand-Prince 5(4) pair written for batches of
initial conditions sharing one step-size sequence.  After every accepted step
the state is projected back onto the phase space; the torus is integrated in
its universal cover and reduced modulo 1 only when points are reported.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    FLAT_TORUS,
    SPHERE,
    Space,
    VectorField,
    euclidean_region,
    jacobian,
    project,
    space_distance,
    spectrum,
    tangent_basis,
    tangential_jacobian,
    torus_difference,
)

log = logging.getLogger(__name__)

REL_TOL = 1e-10
ABS_TOL = 1e-12
REGULAR_SPEED = 1e-6

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class _RawPath:
    s: np.ndarray  # (n,)
    y: np.ndarray  # (n, N, d)
    stalled: bool


def _dopri(
    rhs: Callable,
    y0: np.ndarray,
    span: float,
    rtol: float = REL_TOL,
    atol: float = ABS_TOL,
    h0: Optional[float] = None,
    max_step: float = np.inf,
    project_fn: Optional[Callable] = None,
    stops: Optional[np.ndarray] = None,
    monitor: Optional[Callable] = None,
    max_steps: int = 2_000_000,
) -> _RawPath:
    """Integrate ``dy/ds = rhs(y)`` for ``s`` in ``[0, span]``.

    If `stops` is given only the states at those ``s`` values are stored and
    the step sequence lands on each of them exactly; otherwise every accepted
    step is stored.  `monitor(s, y)` returning True ends the integration early.
    """
    y = np.array(y0, dtype=float)
    if stops is None:
        targets = np.array([span])
        keep_all = True
    else:
        targets = np.unique(np.append(np.asarray(stops, dtype=float), span))
        targets = targets[targets > 0.0]
        keep_all = False
    out_s, out_y = [0.0], [y.copy()]
    s = 0.0
    if span <= 0.0:
        return _RawPath(np.array(out_s), np.array(out_y), False)

    k1 = rhs(y)
    if h0 is None:
        fy = np.max(np.abs(k1))
        yy = max(np.max(np.abs(y)), 1e-3)
        h0 = 1e-2 * yy / fy if fy > 0 else span
    h = float(min(h0, max_step, span))
    ti = 0
    stalled = False
    steps = 0
    while ti < len(targets):
        target = targets[ti]
        h_use = min(h, max_step, target - s)
        if h_use <= 1e-14 * max(1.0, abs(s)) and target - s > 1e-14 * max(1.0, abs(s)):
            stalled = True
            log.warning("step size underflow at s=%g", s)
            break
        k = [k1]
        for i in range(1, 7):
            yi = y + h_use * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
            k.append(rhs(yi))
        y5 = y + h_use * sum(b * kj for b, kj in zip(_B5, k) if b != 0.0)
        err = h_use * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        en = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        if en <= 1.0:
            landed = h_use >= target - s
            s = float(target) if landed else s + h_use
            if project_fn is not None:
                y = project_fn(y5)
                k1 = rhs(y)
            else:
                y = y5
                k1 = k[6]
            if keep_all or landed:
                out_s.append(s)
                out_y.append(y.copy())
            if landed:
                ti += 1
            grow = 5.0 if en == 0.0 else min(5.0, 0.9 * en ** -0.2)
            if h_use >= h or not landed:
                h = h_use * grow
            if monitor is not None and monitor(s, y):
                break
        else:
            h = h_use * max(0.2, 0.9 * en ** -0.2)
        steps += 1
        if steps > max_steps:
            stalled = True
            log.warning("step budget exhausted at s=%g", s)
            break
    return _RawPath(np.array(out_s), np.array(out_y), stalled)


def _project_for(space: Space) -> Optional[Callable]:
    if space.base.kind == SPHERE:
        return lambda y: project(space, y)
    return None


def _report_points(space: Space, lifted: np.ndarray) -> np.ndarray:
    if space.base.kind == FLAT_TORUS:
        return project(space, lifted)
    return lifted


@dataclass
class OrbitSegment:
    """Time-stamped samples of one trajectory.

    ``velocities[i]`` is the field evaluated at ``points[i]``.  For the torus
    `lift` holds the samples in the universal cover, which dense output uses.
    """

    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    flow_id: str = ""
    space: Optional[Space] = field(default=None, repr=False)
    stalled: bool = False
    lift: Optional[np.ndarray] = field(default=None, repr=False)
    origin_index: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.points.ndim != 2 or len(self.points) != len(self.times):
            raise ValueError("points must be (n, d) with one row per time")
        if self.velocities.shape != self.points.shape:
            raise ValueError("velocities must have the same shape as points")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("segment times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=1)

    def at(self, t) -> np.ndarray:
        """Cubic Hermite dense output at time(s) `t` inside the segment span."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        y = self.lift if self.lift is not None else self.points
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("dense output requested outside the segment span")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, max(len(self.times) - 2, 0))
        if len(self.times) == 1:
            res = np.repeat(y[:1], len(t), axis=0)
        else:
            t0, t1 = self.times[k], self.times[k + 1]
            h = (t1 - t0)[:, None]
            u = ((t - t0) / (t1 - t0))[:, None]
            h00 = 2 * u**3 - 3 * u**2 + 1
            h10 = u**3 - 2 * u**2 + u
            h01 = -2 * u**3 + 3 * u**2
            h11 = u**3 - u**2
            res = (
                h00 * y[k]
                + h10 * h * self.velocities[k]
                + h01 * y[k + 1]
                + h11 * h * self.velocities[k + 1]
            )
        if self.space is not None:
            if self.space.base.kind == SPHERE:
                res = project(self.space, res)
            elif self.space.base.kind == FLAT_TORUS:
                res = project(self.space, res)
        return res

    def subsegment(self, i: int, j: int) -> "OrbitSegment":
        lift = None if self.lift is None else self.lift[i : j + 1]
        return OrbitSegment(
            self.times[i : j + 1],
            self.points[i : j + 1],
            self.velocities[i : j + 1],
            self.flow_id,
            self.space,
            self.stalled,
            lift,
            0,
        )

    def reversed(self) -> "OrbitSegment":
        """Samples in reverse order, with times negated so they stay increasing."""
        lift = None if self.lift is None else self.lift[::-1]
        return OrbitSegment(
            -self.times[::-1],
            self.points[::-1],
            self.velocities[::-1],
            self.flow_id,
            self.space,
            self.stalled,
            lift,
            len(self) - 1 - self.origin_index,
        )


def _segment(flow, times, lifted, stalled=False, origin_index=0) -> OrbitSegment:
    space = flow.space
    pts = _report_points(space, lifted)
    vel = flow.field(pts)
    lift = lifted if space.base.kind == FLAT_TORUS else None
    return OrbitSegment(times, pts, vel, flow.name, space, stalled, lift, origin_index)


def integrate_orbit(
    flow,
    x0,
    t0: float,
    t1: float,
    dt_init: Optional[float] = None,
    rel_tol: float = REL_TOL,
    abs_tol: float = ABS_TOL,
    max_step: float = np.inf,
    t_eval: Optional[Sequence[float]] = None,
) -> OrbitSegment:
    """Numerically integrate the orbit with state `x0` at time `t0` up to `t1`.

    Backward spans (``t1 < t0``) integrate the negated field.  The returned
    segment always has increasing times; `origin_index` locates `x0`.

    Parameters
    ----------
    flow : FlowInstance
        Flow to integrate.
    x0 : array_like
        Initial state on ``flow.space``.
    t0, t1 : float
        Start and end time.
    dt_init, rel_tol, abs_tol, max_step : float
        Step-size controls of the embedded Runge-Kutta pair.
    t_eval : sequence of float, optional
        If given, only these times (between `t0` and `t1`) are stored and they
        are hit exactly by the step sequence.
    """
    space = flow.space
    x0 = space.check(np.asarray(x0, dtype=float))
    sign = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    stops = None
    if t_eval is not None:
        stops = np.sort(np.abs(np.asarray(t_eval, dtype=float) - t0))
    rhs = (lambda y: flow.field(y)) if sign > 0 else (lambda y: -flow.field(y))
    raw = _dopri(
        rhs,
        x0[None, :],
        span,
        rtol=rel_tol,
        atol=abs_tol,
        h0=dt_init,
        max_step=max_step,
        project_fn=_project_for(space),
        stops=stops,
    )
    times = t0 + sign * raw.s
    lifted = raw.y[:, 0, :]
    if t_eval is not None and 0.0 not in stops:
        times, lifted = times[1:], lifted[1:]
    origin = 0
    if sign < 0:
        times, lifted = times[::-1], lifted[::-1]
        origin = len(times) - 1
    if raw.stalled:
        log.warning("orbit of %s from %s stalled", flow.name, x0.tolist())
    return _segment(flow, times, lifted, raw.stalled, origin)


def integrate_batch(flow, X0, t: float, rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> np.ndarray:
    """Endpoints ``phi_t(x)`` for a batch of initial states (shared steps)."""
    X0 = np.asarray(X0, dtype=float)
    if flow.analytic_orbit is not None:
        return np.asarray(flow.analytic_orbit(X0, t), dtype=float)
    sign = 1.0 if t >= 0 else -1.0
    rhs = (lambda y: flow.field(y)) if sign > 0 else (lambda y: -flow.field(y))
    raw = _dopri(rhs, X0, abs(t), rtol=rel_tol, atol=abs_tol, project_fn=_project_for(flow.space))
    return _report_points(flow.space, raw.y[-1])


def orbit_point(flow, x0, t: float) -> np.ndarray:
    """The state ``phi_t(x0)``.

    Uses the flow's closed-form orbit when it has one, otherwise integrates.
    ``t = 0`` returns `x0` itself.
    """
    x0 = np.asarray(x0, dtype=float)
    if t == 0:
        return x0.copy()
    if flow.analytic_orbit is not None:
        return np.asarray(flow.analytic_orbit(x0, t), dtype=float)
    seg = integrate_orbit(flow, x0, 0.0, t)
    return (seg.points[-1] if t > 0 else seg.points[0]).copy()


def sample_orbit(flow, x0, t_start: float, t_end: float, n: int, **opts) -> OrbitSegment:
    """Orbit of `x0` (the state at time 0) at `n` uniform times in ``[t_start, t_end]``.

    The segment's `origin_index` is the sample closest to time 0.
    """
    x0 = flow.space.check(np.asarray(x0, dtype=float))
    times = np.linspace(t_start, t_end, n)
    origin = int(np.argmin(np.abs(times)))
    if flow.analytic_orbit is not None:
        pts = np.asarray(flow.analytic_orbit(x0, times), dtype=float).reshape(n, -1)
        if flow.space.base.kind == FLAT_TORUS:
            lift = pts
            pts = project(flow.space, pts)
        else:
            lift = None
        return OrbitSegment(times, pts, flow.field(pts), flow.name, flow.space, False, lift, origin)
    pieces_t, pieces_y, stalled = [], [], False
    neg = times[times < 0]
    if len(neg):
        b = integrate_orbit(flow, x0, 0.0, float(neg[0]), t_eval=neg, **opts)
        pieces_t.append(b.times)
        pieces_y.append(b.lift if b.lift is not None else b.points)
        stalled |= b.stalled
    nonneg = times[times >= 0]
    if len(nonneg):
        if nonneg[-1] > 0:
            f = integrate_orbit(flow, x0, 0.0, float(nonneg[-1]), t_eval=nonneg, **opts)
            ft, fy = f.times, (f.lift if f.lift is not None else f.points)
            stalled |= f.stalled
        else:
            ft, fy = np.array([0.0]), x0[None, :]
        pieces_t.append(ft)
        pieces_y.append(fy)
    t_all = np.concatenate(pieces_t)
    y_all = np.concatenate(pieces_y)
    origin = int(np.argmin(np.abs(t_all)))
    return _segment(flow, t_all, y_all, stalled, origin)


def _diameter_points(space: Space, pts: np.ndarray, max_points: int = 512) -> float:
    n = len(pts)
    if n <= 1:
        return 0.0
    if n <= max_points:
        D = space_distance(space, pts[:, None, :], pts[None, :, :], check=False)
        return float(D.max())
    idx = np.unique(np.linspace(0, n - 1, max_points).round().astype(int))
    sub = pts[idx]
    D = space_distance(space, sub[:, None, :], sub[None, :, :], check=False)
    a, b = np.unravel_index(np.argmax(D), D.shape)
    a, b = idx[a], idx[b]
    best = float(D.max())
    # farthest-point sweeps over the full sample refine the subsampled argmax
    for _ in range(4):
        da = space_distance(space, pts, pts[a], check=False)
        b_new = int(np.argmax(da))
        db = space_distance(space, pts, pts[b_new], check=False)
        a_new = int(np.argmax(db))
        val = float(db[a_new])
        if val <= best + 1e-15 and b_new == b:
            break
        best = max(best, val, float(da[b_new]))
        a, b = a_new, b_new
    return best


def segment_diameter(seg: OrbitSegment, i: int = 0, j: Optional[int] = None) -> float:
    """Diameter of the sampled arc ``seg.points[i..j]`` (inclusive)."""
    if j is None:
        j = len(seg) - 1
    if i > j:
        raise ValueError("segment_diameter needs i <= j")
    space = seg.space if seg.space is not None else euclidean_region(seg.points.shape[1])
    return _diameter_points(space, seg.points[i : j + 1])


def points_diameter(space: Space, pts) -> float:
    return _diameter_points(space, np.asarray(pts, dtype=float))


@dataclass
class FixedPointInfo:
    location: np.ndarray
    tangential_jacobian: np.ndarray
    eigenvalues: np.ndarray
    min_singular_value: float
    hyperbolic: bool
    jacobian_invertible: bool
    dynamically_isolated: Optional[bool] = None
    isolation_radius: Optional[float] = None


def _newton(flow, p: np.ndarray, max_iter: int = 300) -> Optional[np.ndarray]:
    space = flow.space
    f = flow.field
    fx = f(p)
    nx = np.linalg.norm(fx)
    for _ in range(max_iter):
        if nx == 0.0:
            break
        E = tangent_basis(space, p)
        J = E.T @ jacobian(flow.field, p) @ E
        a, *_ = np.linalg.lstsq(J, -(E.T @ fx), rcond=None)
        step = E @ a
        if not np.all(np.isfinite(step)):
            return None
        alpha = 1.0
        while True:
            q = p + alpha * step
            if space.base.kind == SPHERE:
                q = project(space, q)
            fq = f(q)
            nq = np.linalg.norm(fq)
            if nq < nx or alpha < 1e-6:
                break
            alpha *= 0.5
        if nq >= nx:
            break
        moved = np.linalg.norm(q - p)
        p, fx, nx = q, fq, nq
        if moved < 1e-300:
            break
    if nx > 1e-12:
        return None
    return p


def fixed_set_is_whole_space(flow, mesh=None, resolution: int = 40) -> bool:
    """True when the field vanishes at every mesh point."""
    pts = flow.space.mesh(resolution) if mesh is None else np.asarray(mesh, dtype=float)
    return bool(np.all(flow.field.speed(pts) == 0.0))


def find_fixed_points(
    flow,
    mesh_resolution: Optional[int] = None,
    mesh=None,
    isolation: bool = True,
    isolation_radius: float = 0.1,
) -> list:
    """Locate and classify the zeros of the velocity field.

    Seeds are mesh points where the speed is below ``1e-3`` and not larger
    than at their nearest neighbours; each seed is refined by damped Newton
    iteration (on the tangent plane for the sphere) and kept when the
    residual speed is at most ``1e-12``.  A field vanishing on the whole mesh
    yields an empty list; see :func:`fixed_set_is_whole_space`.
    """
    space = flow.space
    if mesh is None:
        mesh = space.mesh(mesh_resolution or 100)
    pts = np.asarray(mesh, dtype=float)
    speed = flow.field.speed(pts)
    if np.all(speed == 0.0):
        log.info("%s vanishes on the whole mesh; no isolated fixed points reported", flow.name)
        return []
    if space.base.kind == FLAT_TORUS:
        tree = cKDTree(np.mod(pts, 1.0), boxsize=1.0)
    else:
        tree = cKDTree(pts)
    k = min(9, len(pts))
    gap, nb = tree.query(pts if space.base.kind != FLAT_TORUS else np.mod(pts, 1.0), k=k)
    local_min = speed <= speed[nb].min(axis=1)
    # a coarse mesh can miss a zero by one spacing times the local stretch
    stretch = np.linalg.norm(jacobian(flow.field, pts[local_min]), ord=2, axis=(-2, -1))
    reach = np.maximum(1e-3, 2.0 * gap[local_min].max(axis=1) * stretch)
    seeds = pts[local_min][speed[local_min] < reach]
    found: list = []
    for s in seeds:
        p = _newton(flow, s.copy())
        if p is None:
            log.info("Newton iteration from %s did not converge; candidate dropped", s.tolist())
            continue
        if space.base.kind == FLAT_TORUS:
            p = project(space, p)
            # snap coordinates that are 1 - tiny to 0
            p[np.isclose(p, 1.0, atol=1e-12)] = 0.0
        if any(space_distance(space, p, q, check=False) < 1e-6 for q in found):
            continue
        found.append(p)
    infos = [classify_fixed_point(flow, p) for p in found]
    if isolation:
        for info in infos:
            iso, r = isolation_scan(flow, info.location, radius=isolation_radius)
            info.dynamically_isolated = iso
            info.isolation_radius = r if iso else None
    return infos


def classify_fixed_point(flow, p) -> FixedPointInfo:
    J = tangential_jacobian(flow.space, flow.field, p)
    spec = spectrum(J)
    hyperbolic = bool(np.all(np.abs(spec.eigenvalues.real) > 1e-8))
    invertible = spec.min_singular_value > 1e-8
    return FixedPointInfo(np.asarray(p, dtype=float), J, spec.eigenvalues, spec.min_singular_value, hyperbolic, invertible)


def isolation_scan(flow, sigma, radius: float = 0.1, n_seeds: int = 8, horizon: float = 1e3):
    """Check at scale whether `sigma` is dynamically isolated.

    Orbits are seeded at distance between ``radius/4`` and ``3 radius/4`` from
    `sigma` (taken from the space mesh when it has points there, otherwise on
    a tangent circle of radius ``radius/2``).  The fixed point is flagged
    isolated when every seeded orbit leaves ``B(sigma, radius)`` forward or
    backward within `horizon`.

    Returns
    -------
    (isolated, radius)
    """
    space = flow.space
    sigma = np.asarray(sigma, dtype=float)
    seeds = None
    if space.mesher is not None:
        mesh = space.mesh(64)
        d = space_distance(space, mesh, sigma, check=False)
        near = mesh[(d > radius / 4) & (d < 0.75 * radius) & (flow.field.speed(mesh) > 0)]
        if len(near):
            seeds = near[np.linspace(0, len(near) - 1, min(n_seeds, len(near))).round().astype(int)]
    if seeds is None:
        E = tangent_basis(space, sigma)
        ang = 2 * np.pi * (np.arange(n_seeds) + 0.5) / n_seeds
        seeds = sigma + 0.5 * radius * (np.cos(ang)[:, None] * E[:, 0] + np.sin(ang)[:, None] * E[:, 1])
        seeds = project(space, seeds)
    seeds = seeds[flow.field.speed(seeds) > 0]
    if len(seeds) == 0:
        return False, radius
    escaped = np.zeros(len(seeds), dtype=bool)
    for sign in (1.0, -1.0):
        todo = ~escaped
        if not todo.any():
            break
        ys = seeds[todo]
        hit = np.zeros(len(ys), dtype=bool)

        def monitor(s, y, hit=hit):
            pts = _report_points(space, y)
            hit |= space_distance(space, pts, sigma, check=False) >= radius
            return bool(hit.all())

        rhs = (lambda y: flow.field(y)) if sign > 0 else (lambda y: -flow.field(y))
        _dopri(rhs, ys, horizon, rtol=1e-6, atol=1e-9, project_fn=_project_for(space), monitor=monitor)
        escaped[np.flatnonzero(todo)] = hit
    return bool(escaped.all()), radius


def detect_period(flow, x0, horizon: float, rel_tol: float = 1e-8) -> Optional[float]:
    """First return time of `x0` to itself, or None within `horizon`.

    A return is a crossing, from behind to ahead, of the hyperplane through
    `x0` orthogonal to ``X(x0)`` at a point whose distance to `x0` is at most
    `rel_tol` times the largest excursion seen so far.
    """
    if flow.periods_truth is not None:
        return flow.periods_truth(np.asarray(x0, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    v0 = flow.field(x0)
    if np.linalg.norm(v0) == 0.0:
        return None
    seg = integrate_orbit(flow, x0, 0.0, horizon, max_step=horizon / 2000)
    space = flow.space
    if space.base.kind == FLAT_TORUS:
        disp = torus_difference(x0, seg.points)
    else:
        disp = seg.points - x0
    side = disp @ v0
    dist = np.linalg.norm(disp, axis=1)
    excursion = np.maximum.accumulate(dist)
    for k in range(1, len(seg)):
        if side[k - 1] < 0.0 <= side[k]:
            lo, hi = seg.times[k - 1], seg.times[k]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                pm = seg.at(mid)[0]
                dm = torus_difference(x0, pm) if space.base.kind == FLAT_TORUS else pm - x0
                if dm @ v0 < 0:
                    lo = mid
                else:
                    hi = mid
            pm = seg.at(hi)[0]
            if space_distance(space, pm, x0, check=False) <= rel_tol * max(excursion[k], 1e-300):
                return float(hi)
    return None


def beta0_details(flow, orbit_samples, horizon: float = 50.0, n: int = 600):
    """Full-orbit diameter estimate for each sample (see :func:`beta0_estimate`)."""
    rows = []
    for x in np.atleast_2d(np.asarray(orbit_samples, dtype=float)):
        period = detect_period(flow, x, horizon)
        if period is not None:
            # n intervals per period keeps antipodal samples of round orbits
            seg = sample_orbit(flow, x, 0.0, period, n + 1)
        else:
            seg = sample_orbit(flow, x, -horizon, horizon, 2 * n + 1)
        rows.append((x, period, segment_diameter(seg)))
    return rows


def beta0_estimate(flow, orbit_samples, horizon: float = 50.0, floor: float = 1e-6) -> Optional[float]:
    """Smallest full-orbit diameter over the samples, or None if below `floor`.

    Periodic orbits use one period, others the window ``[-horizon, horizon]``.
    """
    rows = beta0_details(flow, orbit_samples, horizon)
    if not rows:
        return None
    m = min(r[2] for r in rows)
    return None if m < floor else m


def xi_estimate(flow, T: float, mesh=None, resolution: int = 100) -> float:
    """``inf dist(phi_T(x), x)`` over regular mesh points (speed above 1e-6)."""
    if T <= 0:
        raise ValueError("xi_estimate needs T > 0")
    pts = flow.space.mesh(resolution) if mesh is None else np.asarray(mesh, dtype=float)
    pts = pts[flow.field.speed(pts) > REGULAR_SPEED]
    if len(pts) == 0:
        return float("inf")
    moved = integrate_batch(flow, pts, T)
    moved = _report_points(flow.space, moved) if flow.analytic_orbit is not None else moved
    return float(np.min(space_distance(flow.space, pts, moved, check=False)))


def write_orbit_csv(seg: OrbitSegment, path) -> None:
    """Write ``t,x1..xd,v1..vd`` rows with 17 significant digits."""
    d = seg.points.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, p, v in zip(seg.times, seg.points, seg.velocities):
            w.writerow([f"{t:.17g}"] + [f"{c:.17g}" for c in p] + [f"{c:.17g}" for c in v])


def read_orbit_csv(path, space: Optional[Space] = None, flow_id: str = "") -> OrbitSegment:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    d = (len(header) - 1) // 2
    return OrbitSegment(body[:, 0], body[:, 1 : 1 + d], body[:, 1 + d :], flow_id, space)
