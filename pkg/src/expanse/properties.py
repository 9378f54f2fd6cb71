"""Desk-scale testers for curvature, efficiency and expansivity-type properties.

Every tester returns a :class:`PropertyVerdict`.  ``holds_at_scale`` only
means that no counterexample was found at the recorded sampling resolution
and horizon; ``violated`` always carries a witness that can be re-evaluated
from scratch.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import ConvexHull, QhullError

from .errors import NearFixedPointError, PipelineUnavailableError
from .flow import (
    REGULAR_SPEED,
    OrbitSegment,
    classify_fixed_point,
    detect_period,
    find_fixed_points,
    fixed_set_is_whole_space,
    integrate_orbit,
    isolation_scan,
    points_diameter,
    sample_orbit,
)
from .geometry import EUCLIDEAN, FLAT_TORUS, SPHERE, SUBSET, jacobian, project, space_distance, tangent_basis
from .matcher import UNIFORM, RESCALED, min_match_delta_two_sided

log = logging.getLogger(__name__)

HOLDS = "holds_at_scale"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"
VERDICTS = (HOLDS, VIOLATED, INCONCLUSIVE)

CURVATURE_REGULAR = 1e-10
CURVATURE_EXCLUSION = 1e-4
FINE_RESOLUTION = 200
DIVERGENCE_FACTOR = 10.0


@dataclass
class PropertyVerdict:
    property: str
    verdict: str
    witness: Optional[dict] = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == VIOLATED and not self.witness:
            raise ValueError("a violated verdict needs a witness")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def violated(self) -> bool:
        return self.verdict == VIOLATED

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EfficiencyParams:
    delta_star: float
    delta: float

    def __post_init__(self):
        if not self.delta_star > 0:
            raise ValueError("delta_star must be positive")
        if not 0 < self.delta < self.delta_star:
            raise ValueError(f"need 0 < delta < delta_star, got delta={self.delta}, delta_star={self.delta_star}")

    @property
    def arc_diam_cap(self) -> float:
        return self.delta_star


def _flt(x) -> float:
    return float(np.asarray(x))


def _pt(p) -> list:
    return [float(c) for c in np.asarray(p, dtype=float).ravel()]


def _trajectory(flow, x, t_lo: float, t_hi: float):
    """Callable ``t -> phi_t(x)`` valid on ``[t_lo, t_hi]`` (arrays of times)."""
    x = np.asarray(x, dtype=float)
    space = flow.space
    if flow.analytic_orbit is not None:

        def f(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            pts = np.asarray(flow.analytic_orbit(x, t), dtype=float).reshape(len(t), -1)
            return project(space, pts) if space.base.kind == FLAT_TORUS else pts

        return f
    fwd = integrate_orbit(flow, x, 0.0, t_hi) if t_hi > 0 else None
    bwd = integrate_orbit(flow, x, 0.0, t_lo) if t_lo < 0 else None

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((len(t), len(x)))
        pos = t >= 0
        out[pos] = fwd.at(t[pos]) if fwd is not None else x
        if (~pos).any():
            out[~pos] = bwd.at(t[~pos])
        return out

    return f


# curvature


def curvature(field, p) -> np.ndarray:
    """Curvature of the trajectory through `p`, from the field and its Jacobian.

    ``kappa = sqrt(|J X|^2 |X|^2 - <J X, X>^2) / |X|^3`` with ``J = d_p X``.
    Broadcasts over leading axes of `p`.

    Raises
    ------
    NearFixedPointError
        If ``|X(p)| <= 1e-10`` at some point.
    """
    p = np.asarray(p, dtype=float)
    X = field(p)
    nx = np.linalg.norm(X, axis=-1)
    if np.any(nx <= CURVATURE_REGULAR):
        bad = p.reshape(-1, p.shape[-1])[np.argmin(nx.reshape(-1))]
        raise NearFixedPointError(f"curvature undefined near the fixed point at {bad.tolist()}")
    J = jacobian(field, p)
    JX = np.einsum("...ij,...j->...i", J, X)
    a = np.sum(JX * JX, axis=-1) * nx**2
    b = np.sum(JX * X, axis=-1) ** 2
    k = np.sqrt(np.clip(a - b, 0.0, None)) / nx**3
    return float(k) if np.ndim(k) == 0 else k


def circumcurvature(a, b, c) -> float:
    """Reciprocal radius of the circle through three points (0 if collinear)."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    u, v, w = b - a, c - b, c - a
    uu, ww, uw = u @ u, w @ w, u @ w
    area2 = max(uu * ww - uw * uw, 0.0)  # (2 * triangle area)^2
    denom = np.sqrt(uu * (v @ v) * ww)
    return 0.0 if denom == 0 else float(2.0 * np.sqrt(area2) / denom)


def osculating_curvature(flow, p, arc: float = 1e-3) -> float:
    """Curvature oracle: circle through ``phi_{-h}(p), p, phi_h(p)``.

    `h` is chosen so the sampled arc has length about `arc`.
    """
    p = np.asarray(p, dtype=float)
    speed = float(np.linalg.norm(flow.field(p)))
    if speed <= CURVATURE_REGULAR:
        raise NearFixedPointError("osculating circle undefined at a fixed point")
    h = arc / speed
    traj = _trajectory(flow, p, -h, h)
    a, c = traj(np.array([-h, h]))
    if flow.space.base.kind == FLAT_TORUS:
        # work in the chart around p
        a = p + (a - p) - np.round(a - p)
        c = p + (c - p) - np.round(c - p)
    return circumcurvature(a, p, c)


# do Carmo curve lemma


def _second_derivatives(s, g):
    # non-uniform three-point stencil at the interior samples
    h1 = (s[1:-1] - s[:-2])[:, None]
    h2 = (s[2:] - s[1:-1])[:, None]
    return 2.0 * (h1 * g[2:] - (h1 + h2) * g[1:-1] + h2 * g[:-2]) / (h1 * h2 * (h1 + h2))


def docarmo_check(s, curve, R: float, tol: float = 1e-4) -> PropertyVerdict:
    """Check both conclusions of the curve lemma on a sampled unit-speed curve.

    Bullet 1: at an interior sample maximising the distance to the start,
    ``|gamma''| * dist(gamma(a), gamma(s)) >= 1``.  Bullet 2: if
    ``|gamma''| <= 1/R`` everywhere and the diameter is below `R`, the
    diameter equals the endpoint distance.  Both are checked to relative
    tolerance `tol`; a bullet whose hypotheses fail is reported as not
    applicable.

    Parameters
    ----------
    s : array_like
        Increasing arc-length parameters.
    curve : array_like
        Samples ``gamma(s)``, shape ``(n, d)``.
    R : float
        Curvature radius bound for bullet 2.
    """
    s = np.asarray(s, dtype=float)
    g = np.asarray(curve, dtype=float)
    if len(s) < 3 or g.shape[0] != len(s):
        raise ValueError("need at least three samples with one parameter each")
    speed = np.linalg.norm(np.diff(g, axis=0), axis=1) / np.diff(s)
    if np.any(np.abs(speed - 1.0) > 1e-3):
        raise ValueError(f"curve is not unit speed (sampled speed in [{speed.min():.6g}, {speed.max():.6g}])")
    d0 = np.linalg.norm(g - g[0], axis=1)
    acc = np.linalg.norm(_second_derivatives(s, g), axis=1)
    params = {"R": R, "tol": tol, "samples": len(s)}
    witness: dict = {}
    ok = True

    k = int(np.argmax(d0))
    if 0 < k < len(s) - 1:
        product = float(acc[k - 1] * d0[k])
        b1 = product >= 1.0 - tol
        witness["bullet1"] = {"applicable": True, "index": k, "s": float(s[k]), "accel_times_dist": product, "holds": b1}
        ok &= b1
    else:
        witness["bullet1"] = {"applicable": False, "reason": "distance to the start is maximal at an endpoint"}

    diam = points_diameter_euclid(g)
    chord = float(np.linalg.norm(g[-1] - g[0]))
    max_acc = float(acc.max())
    if max_acc <= (1.0 + tol) / R and diam < R:
        b2 = abs(diam - chord) <= tol * max(diam, 1e-300)
        witness["bullet2"] = {"applicable": True, "diameter": diam, "endpoint_distance": chord, "holds": b2}
        ok &= b2
    else:
        witness["bullet2"] = {"applicable": False, "max_accel": max_acc, "diameter": diam}
    return PropertyVerdict("docarmo", HOLDS if ok else VIOLATED, witness, params)


def points_diameter_euclid(pts) -> float:
    """Exact Euclidean diameter; the farthest pair lies on the convex hull."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) > 64 and pts.shape[1] in (2, 3):
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # degenerate (collinear or coplanar) input: fall through to the direct sweep
    return float(np.sqrt(_max_sq_distance(np.ascontiguousarray(pts))))


@njit(cache=True)
def _max_sq_distance(pts):
    n, dim = pts.shape
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(dim):
                d = pts[j, c] - pts[i, c]
                acc += d * d
            if acc > best:
                best = acc
    return best


# constants of the speed comparison


def _fix_points(flow, fixed_points=None) -> list:
    if fixed_points is not None:
        return [np.asarray(p, dtype=float) for p in fixed_points]
    return flow.fixed_points


def _dist_to_fix(flow, pts, fps) -> np.ndarray:
    return np.min([space_distance(flow.space, pts, q, check=False) for q in fps], axis=0)


@dataclass
class BCEstimate:
    B: float
    C: float
    coarse_C: float
    growth: float
    diverging: bool
    sandwich_slack: float
    n_points: int
    resolution: int

    def verdict(self) -> PropertyVerdict:
        w = asdict(self)
        return PropertyVerdict("constants", INCONCLUSIVE if self.diverging else HOLDS, w, {"resolution": self.resolution})


def _bc_on(flow, pts, fps, exclusion):
    d = _dist_to_fix(flow, pts, fps)
    speed = flow.field.speed(pts)
    keep = (d > exclusion) & (speed > CURVATURE_REGULAR)
    d, speed = d[keep], speed[keep]
    B = float(np.max(speed / d))
    C = float(np.max(d / speed))
    slack = float(min(np.min(speed - d / C), np.min(B * d - speed)))
    return B, C, slack, int(keep.sum())


def constants_BC(
    flow, mesh=None, resolution: int = FINE_RESOLUTION, fixed_points=None, exclusion: float = 0.0
) -> BCEstimate:
    """Tight constants with ``dist/C <= |X| <= B dist`` to the fixed set.

    The fine estimate uses `mesh` (or the space mesh at `resolution`); a
    second estimate at a ten times coarser mesh drives the divergence test:
    when ``C`` grows by more than a factor ten, an unbounded ``C`` is
    reported (``diverging=True``), the signature of a degenerate fixed point.
    """
    fps = _fix_points(flow, fixed_points)
    if not fps:
        raise PipelineUnavailableError(f"{flow.name} has no fixed points; B and C are undefined")
    fine = flow.space.mesh(resolution) if mesh is None else np.asarray(mesh, dtype=float)
    coarse = flow.space.mesh(max(resolution // 10, 2))
    B, C, slack, n = _bc_on(flow, fine, fps, exclusion)
    _, C0, _, _ = _bc_on(flow, coarse, fps, exclusion)
    growth = C / C0
    return BCEstimate(B, C, C0, growth, bool(growth > DIVERGENCE_FACTOR), slack, n, resolution)


@dataclass
class AEstimate:
    A: float
    A1: float
    C: float
    bound: float
    n_points: int


def constant_A(
    flow, mesh=None, resolution: int = FINE_RESOLUTION, exclusion: float = CURVATURE_EXCLUSION, fixed_points=None
) -> AEstimate:
    """Empirical ``sup kappa(z) dist(z, fix)`` and the bound ``A1 * C``.

    ``A1`` is the largest Jacobian operator norm on the same points and ``C``
    the tight lower speed constant there.
    """
    fps = _fix_points(flow, fixed_points)
    if not fps:
        raise PipelineUnavailableError(f"{flow.name} has no fixed points; A is undefined")
    pts = flow.space.mesh(resolution) if mesh is None else np.asarray(mesh, dtype=float)
    d = _dist_to_fix(flow, pts, fps)
    speed = flow.field.speed(pts)
    keep = (d >= exclusion) & (speed > CURVATURE_REGULAR)
    pts, d, speed = pts[keep], d[keep], speed[keep]
    kappa = curvature(flow.field, pts)
    A = float(np.max(kappa * d))
    A1 = float(np.max(np.linalg.norm(jacobian(flow.field, pts), ord=2, axis=(-2, -1))))
    C = float(np.max(d / speed))
    return AEstimate(A, A1, C, A1 * C, len(pts))


@dataclass
class DeltaStar:
    value: float
    terms: dict
    r2: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def delta_star(
    flow,
    mesh=None,
    r2: Optional[float] = None,
    resolution: int = FINE_RESOLUTION,
    fixed_points=None,
    exclusion: float = CURVATURE_EXCLUSION,
) -> DeltaStar:
    """Arc-diameter cap under which small returning arcs stay in speed balls.

    Without fixed points the cap is ``1/sup kappa``.  Otherwise it is the
    minimum of ``r2/2``, ``1/(B (A + 1))`` and the smallest ``1/kappa`` at
    distance at least ``r2/2`` from the fixed set, where `r2` defaults to the
    isolation radius found by the orbit scan.

    Raises
    ------
    PipelineUnavailableError
        If every point is fixed, a fixed point has a singular linearisation
        or is not dynamically isolated at scale, or the constant ``C``
        diverges under mesh refinement.
    """
    if flow.fix_is_whole_space:
        raise PipelineUnavailableError(f"every point of {flow.name} is fixed")
    pts = flow.space.mesh(resolution) if mesh is None else np.asarray(mesh, dtype=float)
    fps = _fix_points(flow, fixed_points)
    if not fps:
        kappa = curvature(flow.field, pts[flow.field.speed(pts) > CURVATURE_REGULAR])
        sup = float(np.max(kappa))
        value = np.inf if sup == 0 else 1.0 / sup
        return DeltaStar(value, {"inverse_sup_curvature": value}, None)
    for p in fps:
        info = classify_fixed_point(flow, p)
        if not info.jacobian_invertible:
            raise PipelineUnavailableError(
                f"the linearisation at {_pt(p)} is singular (m = {info.min_singular_value:.3g})"
            )
    bc = constants_BC(flow, mesh, resolution, fps)
    if bc.diverging:
        raise PipelineUnavailableError(
            f"C grows by {bc.growth:.3g}x under mesh refinement; the linear part at a fixed point is degenerate"
        )
    if r2 is None:
        radii = []
        for p in fps:
            iso, r = isolation_scan(flow, p)
            if not iso:
                raise PipelineUnavailableError(f"fixed point {_pt(p)} is not dynamically isolated at scale")
            radii.append(r)
        r2 = min(radii)
    a = constant_A(flow, mesh, resolution, exclusion, fps)
    d = _dist_to_fix(flow, pts, fps)
    far = pts[(d >= r2 / 2) & (flow.field.speed(pts) > CURVATURE_REGULAR)]
    kmax = float(np.max(curvature(flow.field, far))) if len(far) else 0.0
    terms = {
        "half_r2": r2 / 2,
        "speed_term": 1.0 / (bc.B * (a.A + 1.0)),
        "far_inverse_curvature": np.inf if kmax == 0 else 1.0 / kmax,
        "A": a.A,
        "B": bc.B,
        "C": bc.C,
    }
    value = min(terms["half_r2"], terms["speed_term"], terms["far_inverse_curvature"])
    return DeltaStar(value, terms, r2)


# efficiency


@njit(cache=True)
def _return_candidates(pts, radii, cap, torus):
    # per start index i: first exit e from the ball, first return index and the
    # closest point of that return run; scanning stops once dist >= cap since
    # no longer arc has diameter below cap
    n, dim = pts.shape
    out = np.full((n, 3), -1, dtype=np.int64)
    for i in range(n - 1):
        r = radii[i]
        if r <= 0:
            continue
        phase, e, start, best, bestd = 0, -1, -1, -1, 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(dim):
                dc = pts[j, c] - pts[i, c]
                if torus:
                    dc -= np.round(dc)
                acc += dc * dc
            d = np.sqrt(acc)
            if d >= cap:
                break
            if phase == 0:
                if d >= r:
                    e, phase = j, 1
            elif phase == 1:
                if d < r:
                    start, best, bestd, phase = j, j, d, 2
            elif d < r:
                if d < bestd:
                    best, bestd = j, d
            else:
                break
        if phase == 2:
            out[i, 0], out[i, 1], out[i, 2] = e, start, best
    return out


def _scan_returns(space, times, pts, speeds, delta, cap):
    torus = space.base.kind == FLAT_TORUS
    cand = _return_candidates(np.ascontiguousarray(pts), np.ascontiguousarray(delta * speeds), float(cap), torus)
    for i in np.flatnonzero(cand[:, 0] >= 0):
        e, start, best = cand[i]
        # diameter grows with the arc, so the first return run is the only candidate
        for j in (best, start):
            diam = points_diameter(space, pts[i : j + 1])
            if diam < cap:
                d = space_distance(space, pts[e:start], pts[i], check=False)
                k = e + int(np.argmax(d))
                return {
                    "t": float(times[i]),
                    "u": float(times[j]),
                    "ball_center": _pt(pts[i]),
                    "ball_radius": float(delta * speeds[i]),
                    "endpoint_distance": _flt(space_distance(space, pts[j], pts[i], check=False)),
                    "arc_diameter": float(diam),
                    "offending_time": float(times[k]),
                    "offending_point": _pt(pts[k]),
                    "offending_distance": float(d[k - e]),
                    "contained": False,
                }
    return None


def efficiency_scan(
    flow,
    samples,
    params: EfficiencyParams,
    horizon: float = 20.0,
    dt: Optional[float] = None,
    periods: float = 2.0,
) -> PropertyVerdict:
    """Search for arcs that return near their start without staying in the speed ball.

    For each sample ``x`` the orbit is sampled on ``[0, T]`` with ``T`` equal to
    `periods` periods for periodic orbits and `horizon` otherwise.  An arc
    ``[t, u]`` is offending when its diameter is below ``delta_star`` and its
    endpoint is within ``delta |X(phi_t x)|`` of ``phi_t x`` although some arc
    point leaves that ball.  Arcs are scanned forward and backward from every
    sample time.  The default time step is ``delta / 20``.
    """
    dt = params.delta / 20 if dt is None else dt
    space = flow.space
    used = {"delta": params.delta, "delta_star": params.delta_star, "dt": dt, "horizon": horizon, "periods": periods}
    scanned = 0
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        if float(np.linalg.norm(flow.field(x))) <= REGULAR_SPEED:
            continue
        period = detect_period(flow, x, horizon)
        T = periods * period if period is not None else horizon
        n = int(np.ceil(T / dt)) + 1
        seg = sample_orbit(flow, x, 0.0, T, n)
        scanned += 1
        speeds = np.linalg.norm(seg.velocities, axis=1)
        for sign, (tt, pp, ss) in ((1, (seg.times, seg.points, speeds)), (-1, (seg.times[::-1], seg.points[::-1], speeds[::-1]))):
            w = _scan_returns(space, tt, pp, ss, params.delta, params.delta_star)
            if w is not None:
                w.update({"x": _pt(x), "delta": params.delta, "delta_star": params.delta_star, "direction": sign})
                used["orbits_scanned"] = scanned
                return PropertyVerdict("efficiency", VIOLATED, w, used)
    used["orbits_scanned"] = scanned
    if scanned == 0:
        return PropertyVerdict("efficiency", INCONCLUSIVE, {"reason": "no regular sample"}, used)
    return PropertyVerdict("efficiency", HOLDS, None, used)


def recheck_efficiency_witness(flow, witness: dict, n: int = 4001) -> dict:
    """Re-evaluate an efficiency witness from the flow alone."""
    x = np.asarray(witness["x"], dtype=float)
    t, u, tk = witness["t"], witness["u"], witness["offending_time"]
    lo, hi = min(t, u, tk), max(t, u, tk)
    traj = _trajectory(flow, x, min(lo, 0.0), max(hi, 0.0))
    grid = np.concatenate([np.linspace(t, u, n), [tk]])
    pts = traj(grid)
    center = traj(np.array([t]))[0]
    radius = witness["delta"] * float(np.linalg.norm(flow.field(center)))
    space = flow.space
    diam = points_diameter(space, pts[:-1])
    end = _flt(space_distance(space, pts[n - 1], center, check=False))
    off = _flt(space_distance(space, pts[-1], center, check=False))
    return {
        "arc_diameter": diam,
        "ball_radius": radius,
        "endpoint_distance": end,
        "offending_distance": off,
        "contained": bool(off < radius),
        "genuine": bool(diam < witness["delta_star"] and end < radius and off >= radius),
    }


# synchronized comparisons


def _two_sided(flow, x, horizon, dt):
    n = 2 * int(np.ceil(horizon / dt)) + 1
    return sample_orbit(flow, x, -horizon, horizon, n)


def separating_margin(
    flow, x, y, horizon: float, dt: float = 1e-2, refine: bool = True, base_orbit: Optional[OrbitSegment] = None
) -> float:
    """``sup dist(phi_t x, phi_t y)`` over a uniform grid on ``[-horizon, horizon]``.

    The grid maximum is polished by a bounded scalar search between its
    neighbours when `refine` is set.  `base_orbit` reuses a precomputed
    two-sided orbit of `x` on the same grid.
    """
    space = flow.space
    x = space.check(np.asarray(x, dtype=float))
    y = space.check(np.asarray(y, dtype=float))
    P = _two_sided(flow, x, horizon, dt) if base_orbit is None else base_orbit
    Q = _two_sided(flow, y, horizon, dt)
    d = space_distance(space, P.points, Q.points, check=False)
    k = int(np.argmax(d))
    best = float(d[k])
    if refine and flow.analytic_orbit is not None and 0 < k < len(d) - 1:
        fx, fy = _trajectory(flow, x, -horizon, horizon), _trajectory(flow, y, -horizon, horizon)
        g = lambda t: -_flt(space_distance(space, fx(t)[0], fy(t)[0], check=False))
        res = minimize_scalar(g, bounds=(P.times[k - 1], P.times[k + 1]), method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def rescaled_sup_ratio(flow, x, y, horizon: float, dt: float = 1e-2) -> float:
    """``sup dist(phi_t x, phi_t y) / |X(phi_t x)|`` over the synchronized grid."""
    space = flow.space
    x = space.check(np.asarray(x, dtype=float))
    if float(np.linalg.norm(flow.field(x))) <= REGULAR_SPEED:
        raise NearFixedPointError("rescaled ratio needs a regular base point")
    P = _two_sided(flow, x, horizon, dt)
    Q = _two_sided(flow, np.asarray(y, dtype=float), horizon, dt)
    d = space_distance(space, P.points, Q.points, check=False)
    speed = np.linalg.norm(P.velocities, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(speed > 0, d / speed, np.where(d == 0, 0.0, np.inf))
    return float(np.max(ratio))


def _normal_direction(flow, x):
    space = flow.space
    v = flow.field(x)
    if space.base.kind == SPHERE:
        if np.linalg.norm(v) > 0:
            n = np.cross(x, v)
        else:
            n = tangent_basis(space, x)[:, 0]
    elif space.dim == 2:
        n = np.array([-v[1], v[0]]) if np.linalg.norm(v) > 0 else np.array([1.0, 0.0])
    else:
        n = tangent_basis(space, x)[:, 0]
    return n / np.linalg.norm(n)


def _on_same_orbit(flow, x, y, horizon: float = 20.0, n: int = 4001) -> bool:
    """Whether `y` lies on the sampled orbit of `x` within a chord-size tolerance."""
    space = flow.space
    seg = sample_orbit(flow, x, -horizon, horizon, n)
    d = space_distance(space, seg.points, y, check=False)
    chord = np.max(space_distance(space, seg.points[1:], seg.points[:-1], check=False)) if len(seg) > 1 else 0.0
    return bool(np.min(d) <= max(chord, 1e-9))


def nearby_partners(flow, x, offsets) -> list:
    """Points near `x` on other orbits, roughly at the given distances.

    Manifolds use offsets orthogonal to the flow direction; labeled subsets
    draw their nearest mesh points that lie on other orbits.
    """
    space = flow.space
    x = np.asarray(x, dtype=float)
    if space.kind == SUBSET:
        mesh = space.mesh(64)
        d = space_distance(space, mesh, x, check=False)
        out = []
        for k in np.argsort(d):
            if d[k] == 0 or len(out) >= len(offsets):
                continue
            if not _on_same_orbit(flow, x, mesh[k], horizon=10.0, n=801):
                out.append(mesh[k])
        return out
    n = _normal_direction(flow, x)
    out = []
    for eps in offsets:
        for sgn in (1.0, -1.0):
            y = project(space, x + sgn * eps * n)
            if _inside(space, y):
                out.append(y)
                break
    return out


def _inside(space, p) -> bool:
    try:
        space.check(p)
    except ValueError:
        return False
    return True


def separating_test(flow, samples, delta: float, horizon: float = 50.0, dt: float = 1e-2, levels: int = 4) -> PropertyVerdict:
    """Look for points on distinct orbits whose synchronized distance stays below `delta`.

    Partners are placed at distances ``delta/2, delta/4, ...`` from each
    sample.
    """
    offsets = [delta / 2 ** (k + 1) for k in range(levels)]
    params = {"delta": delta, "horizon": horizon, "dt": dt, "offsets": offsets}
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        P = None
        for y in nearby_partners(flow, x, offsets):
            P = _two_sided(flow, x, horizon, dt) if P is None else P
            m = separating_margin(flow, x, y, horizon, dt, refine=False, base_orbit=P)
            if m < delta:
                w = {"x": _pt(x), "y": _pt(y), "margin": m, "delta": delta}
                return PropertyVerdict("separating", VIOLATED, w, params)
    return PropertyVerdict("separating", HOLDS, None, params)


def fixed_set_open(flow, fix_info: list, whole: Optional[bool] = None) -> tuple:
    """Whether the fixed-point set is open in the space, with a reason.

    On a connected space the fixed set is open only when it is empty or the
    whole space.  On a disconnected space a fixed point is open when no
    regular mesh point accumulates at it.
    """
    if whole is None:
        whole = flow.fix_is_whole_space or fixed_set_is_whole_space(flow)
    if whole:
        return True, "every point is fixed"
    if not fix_info:
        return True, "no fixed points"
    if flow.space.connected:
        return False, "non-empty fixed set that is not the whole connected space"
    mesh = flow.space.mesh(64)
    moving = mesh[flow.field.speed(mesh) > 0]
    for info in fix_info:
        gap = float(np.min(space_distance(flow.space, moving, info.location, check=False)))
        if gap < 1e-6:
            return False, f"regular points accumulate at the fixed point {_pt(info.location)}"
    return True, "fixed points are isolated points of the space"


def kh_classify(flow, separating_verdict: PropertyVerdict, fix_info: list, fix_everywhere: Optional[bool] = None) -> PropertyVerdict:
    """KH verdict from the characterisation: separating and open fixed set."""
    is_open, why = fixed_set_open(flow, fix_info, fix_everywhere)
    w = {
        "criterion": "KH-expansive iff separating and fix(phi) open",
        "fix_open": is_open,
        "fix_reason": why,
        "separating": separating_verdict.verdict,
        "fixed_points": [_pt(i.location) for i in fix_info],
    }
    params = {"separating": separating_verdict.parameters}
    if not is_open or separating_verdict.violated:
        return PropertyVerdict("kh", VIOLATED, w, params)
    if separating_verdict.holds:
        return PropertyVerdict("kh", HOLDS, w, params)
    return PropertyVerdict("kh", INCONCLUSIVE, w, params)


# ball exit time


def _exit_time(flow, x, radius, t_max, sign, n=601):
    traj = _trajectory(flow, x, min(0.0, sign * t_max), max(0.0, sign * t_max))
    tt = sign * np.linspace(0.0, t_max, n)
    d = space_distance(flow.space, traj(tt), x, check=False)
    out = np.flatnonzero(d >= radius)
    if not len(out):
        return None
    k = out[0]
    g = lambda t: _flt(space_distance(flow.space, traj(np.array([t]))[0], x, check=False)) - radius
    a, b = tt[k - 1], tt[k]
    return abs(brentq(g, min(a, b), max(a, b), xtol=1e-14)) if g(a) * g(b) < 0 else abs(float(tt[k]))


def ball_time_scan(flow, x, delta: float, factor: float = 10.0) -> PropertyVerdict:
    """First exit times from ``B(x, delta |X(x)|)``, forward and backward.

    Violated when either exit time is at least ``3 delta``.  The search runs
    up to ``factor * 3 delta``.
    """
    x = flow.space.check(np.asarray(x, dtype=float))
    speed = float(np.linalg.norm(flow.field(x)))
    params = {"delta": delta, "search_window": factor * 3 * delta}
    if speed <= REGULAR_SPEED:
        return PropertyVerdict("ball_time", INCONCLUSIVE, {"x": _pt(x), "reason": "fixed point"}, params)
    radius = delta * speed
    times = {}
    for sign, key in ((1.0, "forward"), (-1.0, "backward")):
        try:
            times[key] = _exit_time(flow, x, radius, factor * 3 * delta, sign)
        except ValueError as exc:
            return PropertyVerdict("ball_time", INCONCLUSIVE, {"x": _pt(x), "reason": str(exc)}, params)
    w = {"x": _pt(x), "ball_radius": radius, "bound": 3 * delta, "exit_time_forward": times["forward"], "exit_time_backward": times["backward"]}
    if any(t is None or t >= 3 * delta for t in times.values()):
        return PropertyVerdict("ball_time", VIOLATED, w, params)
    return PropertyVerdict("ball_time", HOLDS, w, params)


# speed profile


def default_approach_path(flow, proximities=(0.5, 0.05, 0.005, 0.0005)) -> np.ndarray:
    """Points approaching the first fixed point along one direction."""
    fps = flow.fixed_points
    if not fps:
        raise PipelineUnavailableError(f"{flow.name} has no fixed points to approach")
    sigma = fps[0]
    if flow.space.base.kind == SPHERE:
        z = np.sign(sigma[2]) if sigma[2] != 0 else 1.0
        return np.array([[r, 0.0, z * np.sqrt(1 - r * r)] for r in proximities])
    e = np.zeros(flow.space.dim)
    e[0] = 1.0
    return project(flow.space, np.array([sigma + r * e for r in proximities]))


def speed_profile(flow, path=None) -> PropertyVerdict:
    """Table of ``(proximity, |X|, |X|/proximity)`` along points approaching a fixed point.

    Rows are ordered by decreasing proximity.  The trend flag describes how
    the ratio evolves as the fixed point is approached.
    """
    pts = default_approach_path(flow) if path is None else np.atleast_2d(np.asarray(path, dtype=float))
    prox = np.asarray(flow.fixed_point_proximity(pts), dtype=float)
    order = np.argsort(-prox)
    pts, prox = pts[order], prox[order]
    speed = flow.field.speed(pts)
    ratio = speed / prox
    steps = np.diff(ratio)
    if np.all(np.abs(steps) <= 1e-9 * np.abs(ratio[:-1]).max()):
        trend = "constant"
    elif np.all(steps < 0):
        trend = "decreasing"
    elif np.all(steps > 0):
        trend = "increasing"
    else:
        trend = "mixed"
    rows = [{"proximity": float(a), "speed": float(b), "ratio": float(c)} for a, b, c in zip(prox, speed, ratio)]
    return PropertyVerdict("speed_profile", HOLDS, {"rows": rows, "trend": trend}, {"points": len(rows)})


# expansivity evidence through matching


def match_window(
    flow, x, horizon: float, spacing: float, extent: Optional[float] = None, mode: str = UNIFORM, max_samples: int = 4000
):
    """Orbit of `x` on ``[-horizon, horizon]`` resampled for matching.

    Both matching modes are invariant under increasing time changes, so the
    samples may be placed freely along the orbit: uniformly in arc length
    (step `spacing`) for the uniform mode, uniformly in time (step `spacing`)
    for the rescaled mode, whose arc length in the rescaled metric is elapsed
    time.  On Euclidean regions the window is cut where the orbit leaves
    ``B(x, extent)``.
    """
    space = flow.space
    x = np.asarray(x, dtype=float)
    traj = _trajectory(flow, x, -horizon, horizon)
    tt = np.linspace(-horizon, horizon, 8001)
    pts = traj(tt)
    if extent is not None and space.base.kind == EUCLIDEAN:
        inside = space_distance(space, pts, x, check=False) <= extent
        k0 = len(tt) // 2
        lo = k0 - np.argmin(inside[k0::-1]) + 1 if not inside[: k0 + 1].all() else 0
        hi = k0 + np.argmin(inside[k0:]) - 1 if not inside[k0:].all() else len(tt) - 1
        tt, pts = tt[lo : hi + 1], pts[lo : hi + 1]
    steps = space_distance(space, pts[1:], pts[:-1], check=False)
    arc = np.concatenate([[0.0], np.cumsum(steps)]) if mode == UNIFORM else tt - tt[0]
    times = np.array([0.0])
    if arc[-1] > 0:
        n = int(min(max_samples, np.ceil(arc[-1] / spacing) + 1))
        times = np.unique(np.concatenate([np.interp(np.linspace(0.0, arc[-1], n), arc, tt), [0.0]]))
    pts = traj(times)
    return OrbitSegment(times, pts, flow.field(pts), flow.name, space, False, None, int(np.flatnonzero(times == 0.0)[0]))


def _match_pairs(flow, samples, delta, mode, horizon, levels, extent, skip_fixed):
    offsets = [delta / 2 ** (k + 1) for k in range(levels)]
    spacing = delta / 8
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        if skip_fixed and float(np.linalg.norm(flow.field(x))) <= REGULAR_SPEED:
            continue
        P = match_window(flow, x, horizon, spacing, extent, mode)
        for y in nearby_partners(flow, x, offsets):
            Q = match_window(flow, y, 2 * horizon, spacing, None if extent is None else extent + delta, mode)
            m = min_match_delta_two_sided(P, Q, mode, open_end=True).min_delta
            yield x, y, m, P


def kstar_evidence(
    flow,
    samples,
    delta: float,
    horizon: float = 10.0,
    levels: int = 3,
    extent: float = 2.0,
    shifts=(0.05, 0.1, 0.2),
) -> PropertyVerdict:
    """Near-miss search for orbit-wise expansivity under increasing time changes.

    Distinct-orbit partners at distances ``delta/2, delta/4, ...`` are matched
    against each sample with the two-sided uniform matcher (open ends, the
    partner window twice as long).  A match below `delta` is a violation.
    Same-orbit partners ``phi_u(x)`` give the empirical map from match
    threshold to arc diameter reported in the parameters.
    """
    params: dict = {
        "delta": delta,
        "horizon": horizon,
        "spacing": delta / 8,
        "extent": extent,
        "offsets": [delta / 2 ** (k + 1) for k in range(levels)],
        "beta_map": [],
    }
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    for x in S:
        P = match_window(flow, x, horizon, delta / 8, extent)
        for u in shifts:
            y = _trajectory(flow, x, 0.0, u)(np.array([u]))[0]
            Q = match_window(flow, y, 2 * horizon, delta / 8, extent + delta)
            m = min_match_delta_two_sided(P, Q, UNIFORM, open_end=True).min_delta
            arc = sample_orbit(flow, x, 0.0, u, 101)
            params["beta_map"].append({"x": _pt(x), "u": u, "match_delta": m, "arc_diameter": points_diameter(flow.space, arc.points)})
    tested = 0
    for x, y, m, P in _match_pairs(flow, S, delta, UNIFORM, horizon, levels, extent, skip_fixed=False):
        tested += 1
        if m < delta:
            w = {"x": _pt(x), "y": _pt(y), "match_delta": m, "delta": delta, "mode": UNIFORM}
            params["pairs_tested"] = tested
            return PropertyVerdict("kstar", VIOLATED, w, params)
    params["pairs_tested"] = tested
    if tested == 0:
        return PropertyVerdict("kstar", INCONCLUSIVE, {"reason": "no partner orbits"}, params)
    return PropertyVerdict("kstar", HOLDS, None, params)


def rescaled_violation(
    flow, samples, delta: float, horizon: float = 10.0, levels: int = 3, extent: float = 2.0
) -> PropertyVerdict:
    """Search distinct-orbit pairs whose rescaled two-sided match is below `delta`."""
    params = {
        "delta": delta,
        "horizon": horizon,
        "spacing": delta / 8,
        "extent": extent,
        "offsets": [delta / 2 ** (k + 1) for k in range(levels)],
    }
    tested = 0
    for x, y, m, _ in _match_pairs(flow, samples, delta, RESCALED, horizon, levels, extent, skip_fixed=True):
        tested += 1
        if m < delta:
            w = {"x": _pt(x), "y": _pt(y), "match_delta": m, "delta": delta, "mode": RESCALED}
            params["pairs_tested"] = tested
            return PropertyVerdict("rescaled", VIOLATED, w, params)
    params["pairs_tested"] = tested
    if tested == 0:
        return PropertyVerdict("rescaled", INCONCLUSIVE, {"reason": "no regular sample with partners"}, params)
    return PropertyVerdict("rescaled", HOLDS, None, params)


def forbidden_conjunction(kstar: PropertyVerdict, efficiency: PropertyVerdict, rescaled: PropertyVerdict) -> bool:
    """True when orbit-wise expansivity and efficiency hold yet rescaling expansivity fails."""
    return kstar.holds and efficiency.holds and rescaled.violated


def fixed_point_summary(flow, resolution: Optional[int] = None) -> list:
    return find_fixed_points(flow, resolution or flow.mesh_resolution)
