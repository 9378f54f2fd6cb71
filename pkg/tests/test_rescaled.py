import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expanse import zoo
from expanse.errors import DomainError, NearFixedPointError
from expanse.geometry import VectorField
from expanse.properties import HOLDS
from expanse.rescaled import (
    RescaledCurve,
    cylinder_chart,
    cylinder_isometry_check,
    cylinder_pushforward,
    edge_lengths,
    grid_mesh,
    rescaled_distance_mesh,
    rescaled_length,
    speed_comparison_check,
)
from expanse.zoo import ROTATION


def constant_field(c):
    return VectorField(lambda p: np.broadcast_to(np.array([c, 0.0]), p.shape).copy(), 2)


def circle(r, n):
    th = np.linspace(0, 2 * np.pi, n + 1)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


class TestLength:
    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_constant_speed_segment(self, c):
        pts = np.linspace([0.0, 0.0], [3.0, 4.0], 11)
        assert rescaled_length(RescaledCurve(pts, constant_field(c))) == pytest.approx(5.0 / c, rel=1e-12)

    @pytest.mark.parametrize("r", [0.1, 1.0, 3.0])
    def test_rotation_circle_has_length_two_pi(self, r):
        # polygon sum is 2 n tan(pi / n), independent of the radius
        n = 20000
        got = rescaled_length(RescaledCurve(circle(r, n), ROTATION))
        assert got == pytest.approx(2 * n * np.tan(np.pi / n), rel=1e-12)
        assert got == pytest.approx(2 * np.pi, rel=1e-7)

    def test_radial_segment_between_log_circles(self):
        s = np.exp(np.linspace(-2.0, -1.0, 4001))
        pts = np.column_stack([s, np.zeros_like(s)])
        assert rescaled_length(RescaledCurve(pts, ROTATION)) == pytest.approx(1.0, rel=1e-6)

    def test_refinement_converges(self):
        a = rescaled_length(RescaledCurve(circle(1.0, 10000), ROTATION))
        b = rescaled_length(RescaledCurve(circle(1.0, 20000), ROTATION))
        assert abs(a - b) <= 1e-6

    def test_additive_under_concatenation(self):
        pts = circle(0.7, 300)[:200] * np.linspace(1.0, 2.0, 200)[:, None]
        whole = rescaled_length(RescaledCurve(pts, ROTATION))
        parts = rescaled_length(RescaledCurve(pts[:80], ROTATION)) + rescaled_length(RescaledCurve(pts[79:], ROTATION))
        assert whole == pytest.approx(parts, abs=1e-12)

    def test_sample_at_fixed_point_refused(self):
        with pytest.raises(NearFixedPointError):
            RescaledCurve(np.array([[0.0, 0.0], [1.0, 0.0]]), ROTATION)

    def test_segment_through_fixed_point_refused(self):
        curve = RescaledCurve(np.array([[-1.0, 0.0], [1.0, 0.0]]), ROTATION)
        with pytest.raises(NearFixedPointError):
            rescaled_length(curve)

    def test_single_sample_has_zero_length(self):
        assert rescaled_length(RescaledCurve(np.array([[1.0, 0.0]]), ROTATION)) == 0.0


class TestEdges:
    def test_gauss_legendre_matches_log_integral(self):
        a = np.array([[0.5, 0.0]])
        b = np.array([[2.0, 0.0]])
        assert edge_lengths(ROTATION, a, b)[0] == pytest.approx(np.log(4.0), rel=1e-6)


class TestMesh:
    def test_constant_speed_within_five_percent(self):
        G = grid_mesh((0.0, 0.0), (1.0, 1.0), 41)
        p, q = [0.1, 0.2], [0.85, 0.6]
        d = rescaled_distance_mesh(constant_field(2.0), G, p, q)
        exact = np.linalg.norm(np.subtract(q, p)) / 2.0
        assert exact <= d + 1e-12
        assert d == pytest.approx(exact, rel=0.05)

    def test_log_circles_at_distance_one(self):
        G = grid_mesh((-0.5, -0.5), (0.5, 0.5), 201)
        d = rescaled_distance_mesh(ROTATION, G, [np.exp(-1), 0.0], [np.exp(-2), 0.0], [(0.0, 0.0)])
        assert d == pytest.approx(1.0, rel=0.05)

    def test_same_point_zero(self):
        G = grid_mesh((0.0, 0.0), (1.0, 1.0), 5)
        assert rescaled_distance_mesh(ROTATION, G, [0.3, 0.4], [0.3, 0.4]) == 0.0

    def test_point_in_exclusion_ball_refused(self):
        G = grid_mesh((-1.0, -1.0), (1.0, 1.0), 21)
        with pytest.raises(DomainError):
            rescaled_distance_mesh(ROTATION, G, [1e-4, 0.0], [0.5, 0.5], [(0.0, 0.0)])

    def test_point_off_mesh_refused(self):
        G = grid_mesh((0.0, 0.0), (1.0, 1.0), 5)
        with pytest.raises(DomainError):
            rescaled_distance_mesh(ROTATION, G, [0.5, 0.5], [2.0, 2.0])

    def test_bad_mesh_shape(self):
        with pytest.raises(ValueError):
            rescaled_distance_mesh(ROTATION, np.zeros((4, 2)), [0, 0], [1, 1])

    def test_symmetric(self):
        G = grid_mesh((0.1, 0.1), (1.0, 1.0), 15)
        p, q = [0.23, 0.31], [0.91, 0.47]
        assert rescaled_distance_mesh(ROTATION, G, p, q) == pytest.approx(rescaled_distance_mesh(ROTATION, G, q, p), rel=1e-12)

    def test_refinement_never_increases(self):
        lo, hi = (0.1, 0.1), (0.9, 0.9)
        p, q = [0.1, 0.1], [0.9, 0.5]
        d = [rescaled_distance_mesh(ROTATION, grid_mesh(lo, hi, n), p, q) for n in (5, 9, 17, 33)]
        for coarse, fine in zip(d, d[1:]):
            assert fine <= coarse + 1e-12

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), min_size=3, max_size=3, unique=True))
    def test_triangle_inequality_on_grid_vertices(self, idx):
        G = grid_mesh((0.2, 0.2), (1.2, 1.2), 11)
        p, q, r = (G[i, j] for i, j in idx)
        d = lambda a, b: rescaled_distance_mesh(ROTATION, G, a, b)
        assert d(p, q) <= d(p, r) + d(r, q) + 1e-12


class TestCylinder:
    def test_radial_unit_vector(self):
        np.testing.assert_allclose(cylinder_pushforward(0.0, 0.0, np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-15)

    def test_angular_unit_vector(self):
        np.testing.assert_allclose(cylinder_pushforward(0.0, 0.0, np.array([0.0, 1.0])), [0.0, 1.0], atol=1e-15)

    def test_angular_direction_is_the_rotation_field(self):
        r, th = 0.3, 1.1
        base = cylinder_chart(r, th)
        np.testing.assert_allclose(cylinder_pushforward(r, th, np.array([0.0, 1.0])), ROTATION(base), rtol=1e-14)

    def test_pushforward_matches_finite_difference(self):
        r, th, v, h = -0.4, 2.0, np.array([0.7, -1.3]), 1e-6
        fd = (cylinder_chart(r + h * v[0], th + h * v[1]) - cylinder_chart(r - h * v[0], th - h * v[1])) / (2 * h)
        np.testing.assert_allclose(cylinder_pushforward(r, th, v), fd, rtol=1e-8)

    def test_isometry_on_random_samples(self):
        v = cylinder_isometry_check(1000, seed=3)
        assert v.verdict == HOLDS
        assert v.witness["max_relative_error"] <= 1e-9


class TestSpeedComparison:
    @pytest.mark.parametrize("name", ["linear_saddle", "rotation_unit"])
    def test_holds_on_calibration_flows(self, name):
        flow = zoo.get(name)
        v = speed_comparison_check(flow, flow.samples(8, seed=1), delta=0.1)
        assert v.verdict == HOLDS
        assert v.witness["max_dist_r"] <= 0.1
        assert v.parameters["tested"] == 8

    def test_rejects_rho_outside_hypothesis(self):
        flow = zoo.get("linear_saddle")
        with pytest.raises(ValueError):
            speed_comparison_check(flow, flow.samples(2), delta=0.1, rho=0.5)
