"""Registry of the named flows used throughout the package.

Each :class:`FlowInstance` bundles a space, a velocity field and whatever
closed-form knowledge is available (orbits, fixed points, periods).  That
knowledge serves as ground truth in tests and as a fast path in scans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .geometry import (
    Space,
    VectorField,
    euclidean_region,
    fibonacci_sphere,
    flat_torus,
    invariant_subset,
    torus_difference,
    unit_sphere,
)

ALL_POINTS = "all"
GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
TORUS_BUMP_SCALE = 0.2
CIRCLES_MAX_N = 20


@dataclass(frozen=True)
class FlowInstance:
    name: str
    space: Space
    field: VectorField
    analytic_orbit: Optional[Callable] = field(default=None, repr=False)
    fixed_points_truth: object = ()
    periods_truth: Optional[Callable] = field(default=None, repr=False)
    notes: str = ""
    sampler: Optional[Callable] = field(default=None, repr=False)
    proximity: Optional[Callable] = field(default=None, repr=False)
    mesh_resolution: int = 100

    @property
    def fixed_points(self) -> list:
        if isinstance(self.fixed_points_truth, str):
            return []
        return [np.asarray(p, dtype=float) for p in self.fixed_points_truth]

    @property
    def fix_is_whole_space(self) -> bool:
        return isinstance(self.fixed_points_truth, str) and self.fixed_points_truth == ALL_POINTS

    def samples(self, n: int, seed: int = 0) -> np.ndarray:
        """`n` regular sample points (all points for a vanishing field)."""
        rng = np.random.default_rng(seed)
        return np.asarray(self.sampler(rng, n), dtype=float)

    def distance_to_fix(self, p) -> np.ndarray:
        """Distance of `p` to the nearest known fixed point (``inf`` if none)."""
        p = np.asarray(p, dtype=float)
        fps = self.fixed_points
        if not fps:
            return np.full(p.shape[:-1], np.inf)
        return np.min([self.space.distance(p, q, check=False) for q in fps], axis=0)

    def fixed_point_proximity(self, p) -> np.ndarray:
        """Distance-like proximity to the fixed set used by speed profiles."""
        if self.proximity is not None:
            return self.proximity(np.asarray(p, dtype=float))
        return self.distance_to_fix(p)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _rotate(x0, angle):
    x0 = np.asarray(x0, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return _stack(c * x0[..., 0] - s * x0[..., 1], s * x0[..., 0] + c * x0[..., 1])


def _disk_mesher(res: int) -> np.ndarray:
    g = np.linspace(-1.0, 1.0, res)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= 1.0 + 1e-12]


def _disk_sampler(rng, n):
    r = np.sqrt(rng.uniform(0.04, 1.0, n))
    a = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def _plane() -> Space:
    return euclidean_region(2, "R^2 (meshed on the unit disk)", mesher=_disk_mesher)


# rotation field (-y, x)


def _rot_value(p):
    return _stack(-p[..., 1], p[..., 0])


def _rot_jac(p):
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    return np.broadcast_to(J, p.shape[:-1] + (2, 2)).copy()


def _rot_period(x0):
    return None if np.hypot(x0[0], x0[1]) == 0.0 else 2 * np.pi


ROTATION = VectorField(_rot_value, 2, _rot_jac, "rotation (-y, x)")


# annulus field (x^2+y^2)(-y, x)


def _ann_value(p):
    q = p[..., 0] ** 2 + p[..., 1] ** 2
    return _stack(-q * p[..., 1], q * p[..., 0])


def _ann_jac(p):
    x, y = p[..., 0], p[..., 1]
    J = np.empty(p.shape[:-1] + (2, 2))
    J[..., 0, 0] = -2 * x * y
    J[..., 0, 1] = -(x * x + 3 * y * y)
    J[..., 1, 0] = 3 * x * x + y * y
    J[..., 1, 1] = 2 * x * y
    return J


def _ann_orbit(x0, t):
    x0 = np.asarray(x0, dtype=float)
    q = x0[..., 0] ** 2 + x0[..., 1] ** 2
    return _rotate(x0, q * np.asarray(t, dtype=float))


def _ann_contains(p, tol):
    r = np.hypot(p[..., 0], p[..., 1])
    return (r >= 1.0 - tol) & (r <= 2.0 + tol)


def _ann_mesher(res):
    radii = np.linspace(1.0, 2.0, max(res // 2, 2))
    ang = np.arange(2 * res) * (np.pi / res)
    rr, aa = np.meshgrid(radii, ang, indexing="ij")
    return np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])


def _ann_sampler(rng, n):
    r = rng.uniform(1.0, 2.0, n)
    a = rng.uniform(0.0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def annulus_periodic() -> FlowInstance:
    space = euclidean_region(2, "annulus 1 <= x^2+y^2 <= 4", contains=_ann_contains, mesher=_ann_mesher)
    return FlowInstance(
        "annulus_periodic",
        space,
        VectorField(_ann_value, 2, _ann_jac, "(x^2+y^2)(-y, x)"),
        analytic_orbit=_ann_orbit,
        fixed_points_truth=(),
        periods_truth=lambda x0: 2 * np.pi / (x0[0] ** 2 + x0[1] ** 2),
        notes="circles of radius r rotate with angular speed r^2; periods differ orbit to orbit",
        sampler=_ann_sampler,
    )


# torus with one index-0 singularity


def _bump_d2(p):
    return (np.sin(np.pi * p[..., 0]) ** 2 + np.sin(np.pi * p[..., 1]) ** 2) / np.pi**2


_X0 = np.array([1.0, GOLDEN]) / np.hypot(1.0, GOLDEN)


def torus_rho(p):
    """Smooth periodic factor vanishing only at the lattice points."""
    p = np.asarray(p, dtype=float)
    return 1.0 - np.exp(-_bump_d2(p) / TORUS_BUMP_SCALE**2)


def _torus_value(p):
    return torus_rho(p)[..., None] * _X0


def _torus_jac(p):
    s2 = TORUS_BUMP_SCALE**2
    g = np.exp(-_bump_d2(p) / s2) / s2
    grad = _stack(g * np.sin(2 * np.pi * p[..., 0]) / np.pi, g * np.sin(2 * np.pi * p[..., 1]) / np.pi)
    return _X0[:, None] * grad[..., None, :]


def _torus_sampler(rng, n):
    out = []
    while len(out) < n:
        p = rng.uniform(0.0, 1.0, 2)
        if np.linalg.norm(torus_difference(p, np.zeros(2))) > 0.05:
            out.append(p)
    return np.array(out)


def torus_irrational_singular() -> FlowInstance:
    space = flat_torus()
    return FlowInstance(
        "torus_irrational_singular",
        space,
        VectorField(_torus_value, 2, _torus_jac, "rho * X0, golden slope"),
        analytic_orbit=None,
        fixed_points_truth=(np.zeros(2),),
        notes="irrational linear flow slowed by a smooth factor vanishing only at (0, 0)",
        sampler=_torus_sampler,
        proximity=lambda p: np.linalg.norm(torus_difference(p, np.zeros(2)), axis=-1),
    )


# concentric circles |p| = e^-n


def _circles_contains(p, tol):
    r = np.hypot(p[..., 0], p[..., 1])
    with np.errstate(divide="ignore"):
        n = np.round(-np.log(np.where(r > 0, r, 1.0)))
    on_circle = (n >= 1) & (np.abs(r * np.exp(n) - 1.0) <= max(tol, 1e-9) * 10)
    return (r <= tol) | on_circle


def _circles_mesher(res):
    ns = np.arange(1, CIRCLES_MAX_N + 1)
    ang = np.arange(max(res, 8)) * (2 * np.pi / max(res, 8))
    r = np.exp(-ns)[:, None]
    pts = np.column_stack([(r * np.cos(ang)).ravel(), (r * np.sin(ang)).ravel()])
    return np.vstack([np.zeros((1, 2)), pts])


def _circles_sampler(rng, n):
    k = rng.integers(1, 7, n)
    a = rng.uniform(0.0, 2 * np.pi, n)
    r = np.exp(-k.astype(float))
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def concentric_circles() -> FlowInstance:
    space = invariant_subset(
        _plane(),
        "circles |p| = e^-n (n >= 1) with the origin",
        _circles_contains,
        mesher=_circles_mesher,
        connected=False,
    )
    return FlowInstance(
        "concentric_circles",
        space,
        ROTATION,
        analytic_orbit=lambda x0, t: _rotate(x0, np.asarray(t, dtype=float)),
        fixed_points_truth=(np.zeros(2),),
        periods_truth=_rot_period,
        notes="rotation restricted to circles accumulating at the origin",
        sampler=_circles_sampler,
    )


# north-south flows on the sphere


def _y_value(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return _stack(x * z, y * z, -(x * x + y * y))


def _y_jac(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    J = np.zeros(p.shape[:-1] + (3, 3))
    J[..., 0, 0] = z
    J[..., 0, 2] = x
    J[..., 1, 1] = z
    J[..., 1, 2] = y
    J[..., 2, 0] = -2 * x
    J[..., 2, 1] = -2 * y
    return J


def _x_value(p):
    q = p[..., 0] ** 2 + p[..., 1] ** 2
    return q[..., None] * _y_value(p)


def _x_jac(p):
    q = p[..., 0] ** 2 + p[..., 1] ** 2
    grad_q = _stack(2 * p[..., 0], 2 * p[..., 1], np.zeros_like(q))
    return q[..., None, None] * _y_jac(p) + _y_value(p)[..., :, None] * grad_q[..., None, :]


def sphere_rho(p):
    """Distance-like proximity to the poles: ``sqrt(x^2 + y^2)``."""
    p = np.asarray(p, dtype=float)
    return np.hypot(p[..., 0], p[..., 1])


def _inverse_cubic_clock(F):
    # solve s/2 + sinh(2 s)/4 = F for s
    F = np.asarray(F, dtype=float)
    s = 0.5 * np.arcsinh(4.0 * F)
    for _ in range(60):
        g = 0.5 * s + 0.25 * np.sinh(2 * s) - F
        ds = g / np.cosh(s) ** 2
        s = s - ds
        if np.all(np.abs(ds) <= 1e-15 * np.maximum(1.0, np.abs(s))):
            break
    return s


def _meridian_orbit(cubic: bool):
    def orbit(x0, t):
        x0 = np.asarray(x0, dtype=float)
        t = np.asarray(t, dtype=float)
        rho = sphere_rho(x0)
        regular = rho > 0
        safe = np.where(regular, rho, 1.0)
        s0 = np.arcsinh(-x0[..., 2] / safe)
        if cubic:
            s = _inverse_cubic_clock(0.5 * s0 + 0.25 * np.sinh(2 * s0) + t)
        else:
            s = s0 + t
        sech = 1.0 / np.cosh(s)
        pts = _stack(sech * x0[..., 0] / safe, sech * x0[..., 1] / safe, -np.tanh(s))
        fixed = np.broadcast_to(x0, pts.shape)
        return np.where(np.broadcast_to(regular, pts.shape[:-1])[..., None], pts, fixed)

    return orbit


def _sphere_sampler(rng, n):
    z = rng.uniform(-0.9, 0.9, n)
    a = rng.uniform(0.0, 2 * np.pi, n)
    r = np.sqrt(1 - z * z)
    return np.column_stack([r * np.cos(a), r * np.sin(a), z])


POLES = (np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))


def sphere_ns_cubic() -> FlowInstance:
    return FlowInstance(
        "sphere_ns_cubic",
        unit_sphere(),
        VectorField(_x_value, 3, _x_jac, "(x^2+y^2)(xz, yz, -x^2-y^2)"),
        analytic_orbit=_meridian_orbit(cubic=True),
        fixed_points_truth=POLES,
        notes="north-south flow with degenerate poles; speed equals rho^3",
        sampler=_sphere_sampler,
        proximity=sphere_rho,
    )


def sphere_ns() -> FlowInstance:
    return FlowInstance(
        "sphere_ns",
        unit_sphere(),
        VectorField(_y_value, 3, _y_jac, "(xz, yz, -x^2-y^2)"),
        analytic_orbit=_meridian_orbit(cubic=False),
        fixed_points_truth=POLES,
        notes="time change of sphere_ns_cubic; speed equals rho",
        sampler=_sphere_sampler,
        proximity=sphere_rho,
    )


def _still(x0, t):
    return np.asarray(x0, dtype=float) + 0.0 * np.asarray(t, dtype=float)[..., None]


def zero_field() -> FlowInstance:
    return FlowInstance(
        "zero_field",
        unit_sphere(),
        VectorField(lambda p: np.zeros_like(p), 3, lambda p: np.zeros(p.shape + (3,)), "0"),
        analytic_orbit=_still,
        fixed_points_truth=ALL_POINTS,
        notes="every point is fixed",
        sampler=lambda rng, n: fibonacci_sphere(max(n, 1))[rng.permutation(max(n, 1))][:n],
    )


def rotation_unit() -> FlowInstance:
    return FlowInstance(
        "rotation_unit",
        _plane(),
        ROTATION,
        analytic_orbit=lambda x0, t: _rotate(x0, np.asarray(t, dtype=float)),
        fixed_points_truth=(np.zeros(2),),
        periods_truth=_rot_period,
        notes="calibration: rigid rotation",
        sampler=_disk_sampler,
    )


def constant_drift() -> FlowInstance:
    return FlowInstance(
        "constant_drift",
        _plane(),
        VectorField(
            lambda p: np.broadcast_to(np.array([1.0, 0.0]), p.shape).copy(),
            2,
            lambda p: np.zeros(p.shape + (2,)),
            "(1, 0)",
        ),
        analytic_orbit=lambda x0, t: _stack(
            np.asarray(x0, dtype=float)[..., 0] + np.asarray(t, dtype=float), np.asarray(x0, dtype=float)[..., 1]
        ),
        fixed_points_truth=(),
        notes="calibration: straight unit-speed trajectories",
        sampler=_disk_sampler,
    )


def _saddle_jac(p):
    J = np.array([[1.0, 0.0], [0.0, -1.0]])
    return np.broadcast_to(J, p.shape[:-1] + (2, 2)).copy()


def linear_saddle() -> FlowInstance:
    return FlowInstance(
        "linear_saddle",
        _plane(),
        VectorField(lambda p: _stack(p[..., 0], -p[..., 1]), 2, _saddle_jac, "(x, -y)"),
        analytic_orbit=lambda x0, t: _stack(
            np.asarray(x0, dtype=float)[..., 0] * np.exp(t), np.asarray(x0, dtype=float)[..., 1] * np.exp(-np.asarray(t))
        ),
        fixed_points_truth=(np.zeros(2),),
        notes="calibration: hyperbolic saddle at the origin",
        sampler=_disk_sampler,
    )


_REGISTRY = {
    "annulus_periodic": annulus_periodic,
    "torus_irrational_singular": torus_irrational_singular,
    "concentric_circles": concentric_circles,
    "sphere_ns_cubic": sphere_ns_cubic,
    "sphere_ns": sphere_ns,
    "zero_field": zero_field,
    "rotation_unit": rotation_unit,
    "constant_drift": constant_drift,
    "linear_saddle": linear_saddle,
}


def names() -> list:
    return list(_REGISTRY)


@lru_cache(maxsize=None)
def get(name: str) -> FlowInstance:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise LookupError(f"unknown flow {name!r}; registered: {', '.join(_REGISTRY)}") from None
