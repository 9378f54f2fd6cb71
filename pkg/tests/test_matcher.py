import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expanse import zoo
from expanse.errors import DomainError, OracleSizeError
from expanse.flow import OrbitSegment, sample_orbit
from expanse.geometry import euclidean_region, flat_torus, unit_sphere
from expanse.matcher import (
    RESCALED,
    UNIFORM,
    bottleneck,
    brute_force_oracle,
    min_match_delta_rescaled,
    min_match_delta_two_sided,
    min_match_delta_uniform,
    rescaled_feasible,
    rescaled_ratios,
    uniform_cost,
)

PLANE = euclidean_region(2)
TORUS = flat_torus()


def seg(points, velocities=None, space=PLANE, origin=0):
    points = np.asarray(points, dtype=float)
    v = np.ones_like(points) if velocities is None else np.asarray(velocities, dtype=float)
    return OrbitSegment(np.arange(len(points), dtype=float), points, v, "", space, origin_index=origin)


def random_pair(rng, space=PLANE, zero_speed=False):
    n, m = rng.integers(1, 7, 2)
    lo, hi = (0.0, 1.0) if space is TORUS else (-1.0, 1.0)
    P = rng.uniform(lo, hi, (n, 2))
    Q = rng.uniform(lo, hi, (m, 2))
    V = rng.normal(size=(n, 2))
    if zero_speed:
        V[rng.random(n) < 0.3] = 0.0
    return seg(P, V, space), seg(Q, None, space)


def assert_lattice_path(coupling, n, m):
    assert coupling[0] == (0, 0) and coupling[-1] == (n - 1, m - 1)
    for (a, b), (c, d) in zip(coupling, coupling[1:]):
        assert (c - a, d - b) in {(1, 0), (0, 1), (1, 1)}


segments = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=n, max_size=n)
)


class TestUniform:
    def test_identical_segments(self):
        P = seg(np.random.default_rng(0).normal(size=(8, 2)))
        assert min_match_delta_uniform(P, P).min_delta == 0.0

    def test_single_pair(self):
        assert min_match_delta_uniform(seg([(0, 0)]), seg([(3, 4)])).min_delta == 5.0

    def test_equals_oracle_100_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            P, Q = random_pair(rng)
            assert min_match_delta_uniform(P, Q).min_delta == brute_force_oracle(P, Q, UNIFORM)

    def test_equals_oracle_on_torus(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            P, Q = random_pair(rng, TORUS)
            assert min_match_delta_uniform(P, Q).min_delta == brute_force_oracle(P, Q, UNIFORM)

    @given(segments, segments)
    def test_coupling_realises_min(self, p, q):
        P, Q = seg(p), seg(q)
        res = min_match_delta_uniform(P, Q)
        assert_lattice_path(res.coupling, len(P), len(Q))
        D = uniform_cost(P, Q)
        assert max(D[i, j] for i, j in res.coupling) == res.min_delta

    @given(segments, segments)
    def test_symmetric(self, p, q):
        P, Q = seg(p), seg(q)
        assert min_match_delta_uniform(P, Q).min_delta == min_match_delta_uniform(Q, P).min_delta

    @given(segments, segments)
    def test_dropping_anchor_never_increases(self, p, q):
        P, Q = seg(p), seg(q)
        assert min_match_delta_uniform(P, Q, anchored=False).min_delta <= min_match_delta_uniform(P, Q).min_delta

    @given(segments, segments)
    def test_open_end_is_min_over_prefixes(self, p, q):
        P, Q = seg(p), seg(q)
        best = min(min_match_delta_uniform(P, Q.subsegment(0, j)).min_delta for j in range(len(Q)))
        assert min_match_delta_uniform(P, Q, open_end=True).min_delta == best

    def test_mixed_spaces_rejected(self):
        S = unit_sphere()
        with pytest.raises(DomainError):
            min_match_delta_uniform(seg([(0.1, 0.1)]), seg([(1, 0, 0)], space=S))

    def test_refinement_bounded_by_chord_deviation(self):
        flow = zoo.get("annulus_periodic")
        P = sample_orbit(flow, [1.0, 0.0], 0.0, 2.0, 201)
        coarse = sample_orbit(flow, [1.1, 0.0], 0.0, 2.0, 101)
        fine = sample_orbit(flow, [1.1, 0.0], 0.0, 2.0, 201)
        chord = np.linalg.norm(np.diff(coarse.points, axis=0), axis=1).max()
        a = min_match_delta_uniform(P, coarse).min_delta
        b = min_match_delta_uniform(P, fine).min_delta
        assert b <= a + 1e-12
        assert a - b <= chord


class TestRescaled:
    def test_identical_segments(self):
        P = seg(np.random.default_rng(3).normal(size=(8, 2)))
        assert min_match_delta_rescaled(P, P).min_delta == 0.0
        ok, coupling = rescaled_feasible(P, P, 0.0)
        assert ok and coupling == [(i, i) for i in range(8)]

    def test_equals_oracle_100_instances(self):
        rng = np.random.default_rng(4)
        for k in range(100):
            P, Q = random_pair(rng, zero_speed=k % 3 == 0)
            assert min_match_delta_rescaled(P, Q).min_delta == brute_force_oracle(P, Q, RESCALED)

    def test_zero_speed_convention(self):
        P = seg([(0, 0), (1, 0)], [(0, 0), (1, 0)])
        R = rescaled_ratios(P, seg([(0, 0), (2, 0)]))
        assert R[0, 0] == 0.0 and R[0, 1] == np.inf and R[1, 1] == 1.0

    def test_circles_one_period_apart_feasible(self):
        flow = zoo.get("concentric_circles")
        x0 = [np.exp(-1), 0.0]
        P = sample_orbit(flow, x0, 0.0, 2 * np.pi, 401)
        Q = sample_orbit(flow, x0, 2 * np.pi, 4 * np.pi, 401)
        for delta in (1e-12, 1e-6, 0.1):
            assert rescaled_feasible(P, Q, delta)[0]

    def test_sphere_cubic_threshold_grows_with_horizon(self):
        flow = zoo.get("sphere_ns_cubic")
        x, y = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
        vals = []
        for H in (10.0, 50.0):
            P = sample_orbit(flow, x, -H, H, 801)
            Q = sample_orbit(flow, y, -H, H, 801)
            res = min_match_delta_two_sided(P, Q, RESCALED)
            vals.append(res.min_delta)
            pf = P.subsegment(P.origin_index, len(P) - 1)
            qf = Q.subsegment(Q.origin_index, len(Q) - 1)
            assert not rescaled_feasible(pf, qf, 0.99 * min_match_delta_rescaled(pf, qf).min_delta)[0]
        # rho decays like t^(-1/2) near the poles, so the ratio grows about linearly
        assert vals[1] > 4 * vals[0]

    def test_annulus_lower_bound(self):
        flow = zoo.get("annulus_periodic")
        P = sample_orbit(flow, [1.0, 0.0], 0.0, 2 * np.pi, 301)
        Q = sample_orbit(flow, [2.0, 0.0], 0.0, 2 * np.pi / 4, 301)
        assert min_match_delta_rescaled(P, Q).min_delta >= 0.125

    def test_asymmetric_on_annulus(self):
        flow = zoo.get("annulus_periodic")
        P = sample_orbit(flow, [1.0, 0.0], 0.0, 1.0, 51)
        Q = sample_orbit(flow, [1.5, 0.0], 0.0, 1.0, 51)
        assert min_match_delta_rescaled(P, Q).min_delta != min_match_delta_rescaled(Q, P).min_delta

    @given(segments, segments, st.floats(0, 5))
    def test_feasible_iff_threshold(self, p, q, delta):
        rng = np.random.default_rng(len(p) * 7 + len(q))
        P = seg(p, rng.normal(size=(len(p), 2)))
        Q = seg(q)
        best = min_match_delta_rescaled(P, Q).min_delta
        ok, coupling = rescaled_feasible(P, Q, delta)
        assert ok == (delta >= best)
        if ok:
            assert_lattice_path(coupling, len(P), len(Q))

    def test_negative_delta(self):
        with pytest.raises(ValueError):
            rescaled_feasible(seg([(0, 0)]), seg([(0, 0)]), -1.0)

    def test_open_end_is_min_over_prefixes(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            P, Q = random_pair(rng)
            best = min(min_match_delta_rescaled(P, Q.subsegment(0, j)).min_delta for j in range(len(Q)))
            assert min_match_delta_rescaled(P, Q, open_end=True).min_delta == best


class TestTwoSided:
    def test_anchored_at_origin(self):
        flow = zoo.get("annulus_periodic")
        P = sample_orbit(flow, [1.5, 0.0], -1.0, 1.0, 101)
        res = min_match_delta_two_sided(P, P, UNIFORM)
        assert res.min_delta == 0.0
        assert (P.origin_index, P.origin_index) in res.coupling
        assert_lattice_path(res.coupling, len(P), len(P))

    def test_max_of_halves(self):
        rng = np.random.default_rng(6)
        P = seg(rng.normal(size=(7, 2)), origin=3)
        Q = seg(rng.normal(size=(5, 2)), origin=2)
        fwd = min_match_delta_uniform(P.subsegment(3, 6), Q.subsegment(2, 4)).min_delta
        bwd = min_match_delta_uniform(P.subsegment(0, 3).reversed(), Q.subsegment(0, 2).reversed()).min_delta
        assert min_match_delta_two_sided(P, Q).min_delta == max(fwd, bwd)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            min_match_delta_two_sided(seg([(0, 0)]), seg([(0, 0)]), "warp")


class TestOracle:
    def test_single_cell(self):
        assert brute_force_oracle(seg([(0, 0)]), seg([(3, 4)])) == 5.0

    def test_identical_three(self):
        P = seg([(0, 0), (1, 0), (2, 1)])
        assert brute_force_oracle(P, P) == 0.0

    def test_size_limit(self):
        P = seg(np.zeros((9, 2)))
        with pytest.raises(OracleSizeError):
            brute_force_oracle(P, P)

    def test_weights_override(self):
        P, Q = seg([(0, 0), (1, 0)]), seg([(0, 2), (1, 2)])
        assert brute_force_oracle(P, Q, RESCALED, weights=[4.0, 4.0]) == 0.5

    def test_bottleneck_free_start(self):
        cost = np.array([[5.0, 1.0], [1.0, 1.0]])
        assert bottleneck(cost) == 5.0
        assert bottleneck(cost, anchored=False) == 1.0
