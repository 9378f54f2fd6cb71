"""Minimal-threshold monotone matching of sampled orbits.

A monotone coupling of two sampled trajectories ``P_0..P_n`` and
``Q_0..Q_m`` is a lattice path from ``(0, 0)`` to ``(n, m)`` whose steps
increase ``i``, ``j`` or both by one.  It is the discrete counterpart of an
increasing reparameterisation ``h`` with ``h(0) = 0``.

Two closeness notions are supported:

``uniform``
    ``dist(P_i, Q_j) <= delta`` along the coupling (anchored discrete Fréchet
    distance).
``rescaled``
    ``dist(P_i, Q_j) <= delta * |X(P_i)|``, the threshold scaling with the
    speed of the first trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DomainError, OracleSizeError
from .geometry import pairwise_distance

UNIFORM = "uniform"
RESCALED = "rescaled"
ORACLE_MAX_CELLS = 64


@dataclass
class MatchResult:
    min_delta: float
    coupling: list = field(repr=False)
    feasible: bool
    mode: str

    def to_dict(self) -> dict:
        return {
            "min_delta": self.min_delta,
            "feasible": self.feasible,
            "mode": self.mode,
            "coupling_length": len(self.coupling),
        }


@njit(cache=True)
def _bottleneck_table(cost, anchored):
    n, m = cost.shape
    T = np.empty((n, m))
    T[0, 0] = cost[0, 0]
    for i in range(1, n):
        T[i, 0] = max(T[i - 1, 0], cost[i, 0]) if anchored else cost[i, 0]
    for j in range(1, m):
        T[0, j] = max(T[0, j - 1], cost[0, j]) if anchored else cost[0, j]
    for i in range(1, n):
        for j in range(1, m):
            best = min(T[i - 1, j - 1], T[i - 1, j], T[i, j - 1])
            T[i, j] = max(best, cost[i, j])
    return T


@njit(cache=True)
def _reachable_table(admissible):
    n, m = admissible.shape
    R = np.zeros((n, m), dtype=np.bool_)
    R[0, 0] = admissible[0, 0]
    for i in range(1, n):
        R[i, 0] = R[i - 1, 0] and admissible[i, 0]
    for j in range(1, m):
        R[0, j] = R[0, j - 1] and admissible[0, j]
    for i in range(1, n):
        for j in range(1, m):
            R[i, j] = admissible[i, j] and (R[i - 1, j - 1] or R[i - 1, j] or R[i, j - 1])
    return R


def _backtrack_min(T):
    # tie-break: diagonal, then i-step, then j-step
    i, j = T.shape[0] - 1, T.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            cands = ((T[i - 1, j - 1], i - 1, j - 1), (T[i - 1, j], i - 1, j), (T[i, j - 1], i, j - 1))
            best = min(c[0] for c in cands)
            for v, a, b in cands:
                if v == best:
                    i, j = a, b
                    break
        path.append((i, j))
    return path[::-1]


def _backtrack_reach(R):
    i, j = R.shape[0] - 1, R.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i > 0 and j > 0 and R[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and R[i - 1, j]:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    return path[::-1]


def _distances(P, Q) -> np.ndarray:
    if P.space is not None and Q.space is not None and P.space.base != Q.space.base:
        raise DomainError("cannot match segments living on different spaces")
    if len(P) == 0 or len(Q) == 0:
        raise ValueError("segments must be non-empty")
    space = P.space if P.space is not None else Q.space
    if space is None:
        diff = P.points[:, None, :] - Q.points[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))
    return pairwise_distance(space, P.points, Q.points)


def _speeds(P) -> np.ndarray:
    # plain sum of squares keeps results bit-identical with the oracle
    v = np.asarray(P.velocities, dtype=float)
    return np.sqrt(np.sum(v * v, axis=1))


def uniform_cost(P, Q) -> np.ndarray:
    return _distances(P, Q)


def rescaled_ratios(P, Q) -> np.ndarray:
    """``dist(P_i, Q_j) / |velocity(P_i)|`` with the zero-speed convention.

    At a zero-speed sample the ratio is 0 if the distance is 0 and ``inf``
    otherwise.
    """
    D = _distances(P, Q)
    w = _speeds(P)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        R = D / w
    R = np.where(w > 0, R, np.where(D == 0, 0.0, np.inf))
    return R


def bottleneck(cost: np.ndarray, anchored: bool = True) -> float:
    """Min over monotone couplings of the max link cost."""
    T = _bottleneck_table(np.ascontiguousarray(cost, dtype=float), anchored)
    return float(T[-1, -1])


def min_match_delta_uniform(P, Q, anchored: bool = True, open_end: bool = False) -> MatchResult:
    """Smallest ``delta`` with a monotone coupling keeping ``dist <= delta``.

    Dynamic programming over the ``(n+1) x (m+1)`` grid; one optimal coupling
    is recovered by backtracking.  With ``anchored=False`` the path may start
    anywhere on the first row or column.  With ``open_end=True`` the path must
    exhaust `P` but may stop anywhere along `Q`.
    """
    D = uniform_cost(P, Q)
    T = _bottleneck_table(np.ascontiguousarray(D), anchored)
    j = int(np.argmin(T[-1])) if open_end else T.shape[1] - 1
    return MatchResult(float(T[-1, j]), _backtrack_min(T[:, : j + 1]), True, UNIFORM)


def rescaled_feasible(P, Q, delta: float):
    """Whether a coupling keeps ``dist(P_i, Q_j) <= delta |X(P_i)|`` throughout.

    Returns
    -------
    (feasible, coupling or None)
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    D = _distances(P, Q)
    w = _speeds(P)[:, None]
    admissible = np.where(w > 0, D <= delta * w, D == 0)
    R = _reachable_table(np.ascontiguousarray(admissible))
    if not R[-1, -1]:
        return False, None
    return True, _backtrack_reach(R)


def min_match_delta_rescaled(P, Q, open_end: bool = False) -> MatchResult:
    """Exact minimal ``delta`` for the speed-rescaled closeness.

    The answer is one of the critical ratios ``dist(P_i, Q_j)/|X(P_i)|``; the
    sorted ratios are binary-searched with the reachability test.
    """
    ratios = rescaled_ratios(P, Q)
    crit = np.unique(ratios[np.isfinite(ratios)])
    # every path visits (0, 0), and (n, m) unless the end is open
    lower = ratios[0, 0] if open_end else max(ratios[0, 0], ratios[-1, -1])
    crit = crit[crit >= lower]

    def end(d):
        R = _reachable_table(np.ascontiguousarray(ratios <= d))
        hits = np.flatnonzero(R[-1]) if open_end else np.flatnonzero(R[-1, -1:]) + R.shape[1] - 1
        return R, hits

    if len(crit) == 0 or len(end(crit[-1])[1]) == 0:
        return MatchResult(float("inf"), [], False, RESCALED)
    lo, hi = 0, len(crit) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if len(end(crit[mid])[1]):
            hi = mid
        else:
            lo = mid + 1
    best = float(crit[lo])
    R, hits = end(best)
    return MatchResult(best, _backtrack_reach(R[:, : hits[0] + 1]), True, RESCALED)


def _split_two_sided(S):
    k = S.origin_index
    return S.subsegment(k, len(S) - 1), S.subsegment(0, k).reversed()


def min_match_delta_two_sided(P, Q, mode: str = UNIFORM, open_end: bool = False) -> MatchResult:
    """Match segments covering negative and positive times.

    The coupling is anchored at the origin samples (``P.origin_index``,
    ``Q.origin_index``); forward and backward halves are matched separately
    and the larger threshold is reported.  `open_end` lets both ends of `P`
    pair with any sample of `Q`, the finite-window stand-in for an increasing
    reparameterisation whose image is not prescribed.
    """
    if mode not in (UNIFORM, RESCALED):
        raise ValueError(f"mode must be {UNIFORM!r} or {RESCALED!r}, got {mode!r}")
    if mode == UNIFORM:
        fn = lambda a, b: min_match_delta_uniform(a, b, open_end=open_end)
    else:
        fn = lambda a, b: min_match_delta_rescaled(a, b, open_end=open_end)
    pf, pb = _split_two_sided(P)
    qf, qb = _split_two_sided(Q)
    fwd, bwd = fn(pf, qf), fn(pb, qb)
    kp, kq = P.origin_index, Q.origin_index
    coupling = [(kp - i, kq - j) for i, j in reversed(bwd.coupling)] + [(kp + i, kq + j) for i, j in fwd.coupling[1:]]
    return MatchResult(max(fwd.min_delta, bwd.min_delta), coupling, fwd.feasible and bwd.feasible, mode)


def brute_force_oracle(P, Q, mode: str = UNIFORM, weights=None) -> float:
    """Enumerate every anchored monotone lattice path; min over paths of max cost.

    Costs are recomputed here from raw coordinates (Euclidean, or the
    quotient metric for torus segments) so the oracle shares no code with
    the dynamic programme.  `weights` overrides the per-row speeds used by
    the rescaled mode.
    """
    P_pts, Q_pts = np.asarray(P.points, dtype=float), np.asarray(Q.points, dtype=float)
    n, m = len(P_pts), len(Q_pts)
    if n * m > ORACLE_MAX_CELLS:
        raise OracleSizeError(f"grid {n}x{m} exceeds {ORACLE_MAX_CELLS} cells")
    torus = P.space is not None and P.space.base.kind == "flat_torus_2"
    cost = [[0.0] * m for _ in range(n)]
    if weights is None and mode == RESCALED:
        weights = [math.sqrt(sum(float(c) * float(c) for c in v)) for v in P.velocities]
    for i in range(n):
        for j in range(m):
            diff = [float(b) - float(a) for a, b in zip(P_pts[i], Q_pts[j])]
            if torus:
                diff = [d - round(d) for d in diff]
            d = math.sqrt(sum(c * c for c in diff))
            if mode == RESCALED:
                w = weights[i]
                d = d / w if w > 0 else (0.0 if d == 0 else float("inf"))
            cost[i][j] = d
    best = float("inf")
    stack = [(0, 0, cost[0][0])]
    while stack:
        i, j, worst = stack.pop()
        if worst >= best:
            continue
        if i == n - 1 and j == m - 1:
            best = worst
            continue
        for a, b in ((i + 1, j + 1), (i + 1, j), (i, j + 1)):
            if a < n and b < m:
                stack.append((a, b, max(worst, cost[a][b])))
    return best
