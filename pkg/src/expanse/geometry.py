"""Spaces, distances, vector fields and small linear-algebra helpers.

Three kinds of phase space are supported: Euclidean regions of ``R^d``, the
flat torus ``R^2/Z^2`` (handled intrinsically, in the unit-square chart) and
the unit sphere in ``R^3``.  An invariant subset of any of them can be
attached a label and its own membership predicate.

Every function accepting points broadcasts over leading axes: a point is an
array of shape ``(d,)`` and a batch is ``(..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegeneratePointError, DomainError, NumericError

MEMBERSHIP_TOL = 1e-9
PROJECTION_TOL = 1e-3
FD_STEP = 1e-5

EUCLIDEAN = "euclidean_region"
FLAT_TORUS = "flat_torus_2"
SPHERE = "unit_sphere_2"
SUBSET = "labeled_invariant_subset"


@dataclass(frozen=True)
class Space:
    """A phase space together with its metric.

    Parameters
    ----------
    kind : str
        One of ``euclidean_region``, ``flat_torus_2``, ``unit_sphere_2`` or
        ``labeled_invariant_subset``.
    dim : int
        Number of coordinates of a point.
    description : str
        Human readable description of the point set.
    contains : callable, optional
        Vectorised membership predicate ``contains(points, tol) -> bool array``
        used for Euclidean regions and labeled subsets.
    mesher : callable, optional
        ``mesher(resolution) -> (n, dim) array`` giving sample points of the
        space.  Mesh-based scans use it.
    ambient : Space, optional
        Ambient space of a labeled invariant subset.
    label : str
        Label of an invariant subset.
    connected : bool
        Whether the represented point set is connected.
    """

    kind: str
    dim: int
    description: str = ""
    contains: Optional[Callable] = field(default=None, repr=False, compare=False)
    mesher: Optional[Callable] = field(default=None, repr=False, compare=False)
    ambient: Optional["Space"] = None
    label: str = ""
    connected: bool = True

    @property
    def base(self) -> "Space":
        """The underlying metric space (the ambient one for labeled subsets)."""
        return self.ambient.base if self.kind == SUBSET else self

    def check(self, p, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """Raise :class:`DomainError` unless every point of `p` belongs to the space."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise DomainError(f"expected points with {self.dim} coordinates, got shape {p.shape}")
        if self.kind == FLAT_TORUS:
            bad = (p < -tol) | (p >= 1.0 + tol)
            if bad.any():
                idx = np.argwhere(bad)[0]
                raise DomainError(
                    f"coordinate x{idx[-1] + 1}={p[tuple(idx)]!r} lies outside the "
                    "fundamental domain [0, 1) of the torus"
                )
        elif self.kind == SPHERE:
            r = np.linalg.norm(p, axis=-1)
            bad = np.abs(r - 1.0) > tol
            if bad.any():
                idx = np.argwhere(np.atleast_1d(bad))[0]
                rr = np.atleast_1d(r)[tuple(idx)]
                raise DomainError(f"point has norm {rr!r}; the coordinate norm must be 1 on the unit sphere")
        if self.kind == SUBSET:
            self.ambient.check(p, tol)
        if self.contains is not None:
            ok = np.asarray(self.contains(p, tol))
            if not ok.all():
                bad_pt = p.reshape(-1, self.dim)[np.argmin(ok.reshape(-1))]
                raise DomainError(f"point {bad_pt.tolist()} is not in {self.description or self.kind}")
        return p

    def distance(self, p, q, check: bool = True):
        """Distance between (batches of) points; see :func:`space_distance`."""
        return space_distance(self, p, q, check=check)

    def project(self, p):
        return project(self, p)

    def mesh(self, resolution: int) -> np.ndarray:
        """Sample points covering the space, roughly ``resolution`` per axis.

        The sphere uses ``resolution**2 / 2`` Fibonacci points.
        """
        if self.mesher is not None:
            return np.asarray(self.mesher(resolution), dtype=float)
        if self.kind == FLAT_TORUS:
            g = np.arange(resolution) / resolution
            xx, yy = np.meshgrid(g, g, indexing="ij")
            return np.column_stack([xx.ravel(), yy.ravel()])
        if self.kind == SPHERE:
            return fibonacci_sphere(max(resolution * resolution // 2, 2))
        if self.kind == SUBSET:
            return self.ambient.mesh(resolution)
        raise ValueError(f"no mesher registered for {self.description or self.kind}")


def euclidean_region(dim: int, description: str = "", contains=None, mesher=None) -> Space:
    return Space(EUCLIDEAN, dim, description or f"R^{dim}", contains=contains, mesher=mesher)


def flat_torus() -> Space:
    return Space(FLAT_TORUS, 2, "flat torus R^2/Z^2")


def unit_sphere(mesher=None) -> Space:
    return Space(SPHERE, 3, "unit sphere x^2+y^2+z^2=1", mesher=mesher)


def invariant_subset(ambient: Space, label: str, contains, mesher=None, connected: bool = True) -> Space:
    return Space(
        SUBSET,
        ambient.dim,
        label,
        contains=contains,
        mesher=mesher,
        ambient=ambient,
        label=label,
        connected=connected,
    )


def torus_difference(p, q) -> np.ndarray:
    """Shortest displacement from `p` to `q` on the flat torus."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return d - np.round(d)


def space_distance(space: Space, p, q, check: bool = True):
    """Metric of `space` between `p` and `q`.

    Euclidean and spherical spaces use the chordal distance of the embedding.
    The flat torus uses the quotient distance: the minimum over the integer
    translates of `q`.

    Examples
    --------
    >>> space_distance(euclidean_region(2), (0, 0), (3, 4))
    5.0
    >>> round(float(space_distance(flat_torus(), (0.1, 0.5), (0.9, 0.5))), 12)
    0.2
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if check:
        space.check(p)
        space.check(q)
    if space.base.kind == FLAT_TORUS:
        d = torus_difference(p, q)
    else:
        d = q - p
    out = np.sqrt(np.sum(d * d, axis=-1))
    return float(out) if out.ndim == 0 else out


def pairwise_distance(space: Space, P, Q) -> np.ndarray:
    """Matrix ``D[i, j] = dist(P[i], Q[j])`` (no membership checks)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return space_distance(space, P[:, None, :], Q[None, :, :], check=False)


def project(space: Space, p) -> np.ndarray:
    """Map `p` back onto the space.

    Sphere points are normalised radially, torus coordinates are reduced
    modulo 1 into ``[0, 1)`` and Euclidean points are returned unchanged.
    """
    p = np.array(p, dtype=float)
    kind = space.base.kind
    if kind == SPHERE:
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        if np.any(r == 0.0):
            raise DegeneratePointError("cannot project the origin onto the unit sphere")
        return p / r
    if kind == FLAT_TORUS:
        p = np.mod(p, 1.0)
        # mod can return exactly 1.0 for tiny negative inputs
        p[p >= 1.0] = 0.0
        return p
    return p


def fibonacci_sphere(n: int) -> np.ndarray:
    """`n` nearly uniform points on the unit sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def tangent_basis(space: Space, p) -> np.ndarray:
    """Orthonormal basis of the tangent space at `p`, as the columns of a matrix."""
    p = np.asarray(p, dtype=float)
    if space.base.kind != SPHERE:
        return np.eye(space.dim)
    n = p / np.linalg.norm(p)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.column_stack([e1, e2])


@dataclass(frozen=True)
class VectorField:
    """A velocity field ``X`` with optional analytic Jacobian.

    `value_fn` and `jacobian_fn` take arrays of shape ``(..., d)`` and return
    ``(..., d)`` and ``(..., d, d)`` respectively.
    """

    value_fn: Callable = field(repr=False)
    dim: int
    jacobian_fn: Optional[Callable] = field(default=None, repr=False)
    name: str = ""

    def __call__(self, p) -> np.ndarray:
        return self.value_fn(np.asarray(p, dtype=float))

    def value(self, p) -> np.ndarray:
        return self(p)

    def speed(self, p) -> np.ndarray:
        return np.linalg.norm(self(p), axis=-1)


def fd_jacobian(field: VectorField, p, eta: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of `field` at `p`."""
    p = np.asarray(p, dtype=float)
    d = p.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = eta
        cols.append((field(p + e) - field(p - e)) / (2.0 * eta))
    return np.stack(cols, axis=-1)


def jacobian(field: VectorField, p, eta: float = FD_STEP) -> np.ndarray:
    """Jacobian ``d_p X``; analytic when the field provides it."""
    if field.jacobian_fn is not None:
        return np.asarray(field.jacobian_fn(np.asarray(p, dtype=float)), dtype=float)
    return fd_jacobian(field, p, eta)


def tangential_jacobian(space: Space, field: VectorField, p) -> np.ndarray:
    """Jacobian restricted to the tangent space at `p` (``E^T J E``)."""
    E = tangent_basis(space, p)
    return E.T @ jacobian(field, p) @ E


@dataclass(frozen=True)
class SpectrumSummary:
    entries: np.ndarray
    eigenvalues: np.ndarray
    min_singular_value: float


def spectrum(m) -> SpectrumSummary:
    """Eigenvalues and the minimal stretching ``m(T) = min_{|v|=1} |T v|``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"spectrum needs a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix has non-finite entries")
    eig = np.linalg.eigvals(m)
    sv = np.linalg.svd(m, compute_uv=False)
    return SpectrumSummary(m.copy(), eig, float(sv.min()))
