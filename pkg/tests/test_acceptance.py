"""Acceptance criteria, one test per criterion.

Each test appends a ``criterion N: PASS|FAIL ...`` line to ``RESULTS``; the
conftest prints them at the end of the session.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from expanse import zoo
from expanse.cli import main
from expanse.errors import PipelineUnavailableError
from expanse.flow import OrbitSegment
from expanse.geometry import euclidean_region
from expanse.matcher import RESCALED, UNIFORM, brute_force_oracle, min_match_delta_rescaled, min_match_delta_uniform
from expanse.properties import (
    HOLDS,
    VIOLATED,
    EfficiencyParams,
    ball_time_scan,
    constants_BC,
    curvature,
    delta_star,
    docarmo_check,
    efficiency_scan,
    osculating_curvature,
    recheck_efficiency_witness,
    rescaled_sup_ratio,
    separating_margin,
    speed_profile,
)
from expanse.rescaled import cylinder_isometry_check, grid_mesh, rescaled_distance_mesh
from expanse.zoo import ROTATION

RESULTS: list = []
PLANE = euclidean_region(2)


@contextmanager
def criterion(number: int, label: str):
    info = {"detail": ""}
    try:
        yield info
    except BaseException as exc:
        RESULTS.append(f"criterion {number}: FAIL {label}: {type(exc).__name__}: {exc}".splitlines()[0])
        raise
    RESULTS.append(f"criterion {number}: PASS {label}: {info['detail']}")


def _segment(points, velocities):
    return OrbitSegment(np.arange(len(points), dtype=float), points, velocities, "", PLANE)


def test_criterion_01_matcher_exactness():
    with criterion(1, "matcher equals brute-force oracle") as info:
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        mismatches = 0
        for k in range(200):
            n, m = rng.integers(1, 7, 2)
            V = rng.normal(size=(n, 2))
            if k % 4 == 0:
                V[rng.random(n) < 0.3] = 0.0
            P = _segment(rng.uniform(-1, 1, (n, 2)), V)
            Q = _segment(rng.uniform(-1, 1, (m, 2)), rng.normal(size=(m, 2)))
            mismatches += min_match_delta_uniform(P, Q).min_delta != brute_force_oracle(P, Q, UNIFORM)
            mismatches += min_match_delta_rescaled(P, Q).min_delta != brute_force_oracle(P, Q, RESCALED)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"400 comparisons, {mismatches} mismatches, {elapsed:.2f} s"
        assert mismatches == 0
        assert elapsed < 5.0


def test_criterion_02_curvature_formula():
    with criterion(2, "curvature formula") as info:
        annulus = zoo.get("annulus_periodic")
        worst = 0.0
        for r in (1.0, 1.5, 2.0):
            p = np.array([r * np.cos(0.7), r * np.sin(0.7)])
            kappa = float(curvature(annulus.field, p))
            osc = osculating_curvature(annulus, p)
            worst = max(worst, abs(kappa - 1 / r) * r, abs(osc - 1 / r) * r)
        drift = zoo.get("constant_drift")
        drift_max = float(np.max(np.abs(curvature(drift.field, drift.samples(50, seed=1)))))
        info["detail"] = f"annulus max rel err {worst:.2e}, drift max kappa {drift_max:.1e}"
        assert worst <= 1e-4
        assert drift_max <= 1e-10


def test_criterion_03_sphere_speed_law():
    with criterion(3, "sphere speed law") as info:
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(1000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        x, y, z = pts.T
        rho = np.sqrt(x * x + y * y)
        algebraic_y = np.sqrt((x * z) ** 2 + (y * z) ** 2 + (x * x + y * y) ** 2)
        X, Y = zoo.get("sphere_ns_cubic"), zoo.get("sphere_ns")
        err_x = np.max(np.abs(X.field.speed(pts) - rho**3))
        err_y = np.max(np.abs(Y.field.speed(pts) - rho))
        err_alg = np.max(np.abs(algebraic_y - rho))
        rows = speed_profile(X, np.array([[r, 0.0, np.sqrt(1 - r * r)] for r in (1e-1, 1e-2, 1e-3, 1e-4)])).witness["rows"]
        ratios = np.array([row["ratio"] for row in rows])
        prox = np.array([row["proximity"] for row in rows])
        info["detail"] = f"|X|-rho^3 {err_x:.1e}, |Y|-rho {err_y:.1e}, ratios {ratios.tolist()}"
        assert max(err_x, err_y, err_alg) <= 1e-9
        np.testing.assert_allclose(ratios, prox**2, rtol=1e-9)
        assert np.all(np.diff(ratios) < 0)


def test_criterion_04_rescaled_dichotomy():
    with criterion(4, "rescaled-separation dichotomy") as info:
        x = np.array([1.0, 0.0, 0.0])
        y = np.array([np.cos(0.5), np.sin(0.5), 0.0])
        X, Y = zoo.get("sphere_ns_cubic"), zoo.get("sphere_ns")
        x10, x100 = rescaled_sup_ratio(X, x, y, 10.0), rescaled_sup_ratio(X, x, y, 100.0)
        y10, y100 = rescaled_sup_ratio(Y, x, y, 10.0), rescaled_sup_ratio(Y, x, y, 100.0)
        info["detail"] = f"X growth {x100 / x10:.1f}x, Y change {abs(y100 - y10) / y10:.2%}"
        assert x100 >= 10 * x10
        assert abs(y100 - y10) < 0.2 * y10


def test_criterion_05_non_efficiency_witness():
    with criterion(5, "non-efficiency witness") as info:
        circles = zoo.get("concentric_circles")
        n = 3
        v = efficiency_scan(circles, [[np.exp(-n), 0.0]], EfficiencyParams(1.0, 0.3))
        assert v.verdict == VIOLATED
        w = v.witness
        again = recheck_efficiency_witness(circles, w)
        assert w["arc_diameter"] == pytest.approx(2 * np.exp(-n), rel=1e-4)
        assert again["arc_diameter"] == pytest.approx(2 * np.exp(-n), rel=1e-4)
        assert w["ball_radius"] == pytest.approx(0.3 * np.exp(-n), rel=1e-9)
        assert again["contained"] is False
        annulus = zoo.get("annulus_periodic")
        u = efficiency_scan(annulus, annulus.samples(6, seed=4), EfficiencyParams(1.0, 0.3), dt=1e-3)
        info["detail"] = f"circles diameter {w['arc_diameter']:.6f} (2e^-3 = {2 * np.exp(-3):.6f}); annulus {u.verdict}"
        assert u.verdict == HOLDS


def _arc(R, span, start, n=4001):
    s = np.linspace(0.0, R * span, n)
    a = start + s / R
    return s, np.column_stack([R * np.cos(a), R * np.sin(a)])


def _segment_curve(length, angle, n=2001):
    s = np.linspace(0.0, length, n)
    return s, np.column_stack([s * np.cos(angle), s * np.sin(angle)]) + np.array([0.3, -0.2])


def test_criterion_06_docarmo_suite():
    with criterion(6, "curve lemma suite") as info:
        rng = np.random.default_rng(6)
        failed, applied = [], {"bullet1": 0, "bullet2": 0}
        for k in range(100):
            R = rng.uniform(0.2, 5.0)
            if k % 2 == 0:
                s, g = _arc(R, rng.uniform(0.1, 6.0), rng.uniform(0, 2 * np.pi))
            else:
                s, g = _segment_curve(rng.uniform(0.05, 0.99) * R, rng.uniform(0, 2 * np.pi))
            v = docarmo_check(s, g, R=R, tol=1e-4)
            for key in applied:
                applied[key] += bool(v.witness[key]["applicable"])
            if not v.holds:
                failed.append(k)
        info["detail"] = f"100 curves, failures {failed}, applicable {applied}"
        assert not failed
        assert applied["bullet1"] > 0 and applied["bullet2"] > 0


def test_criterion_07_ball_exit_times():
    with criterion(7, "ball exit time below 3 delta") as info:
        worst = 0.0
        n = 0
        for name in ("rotation_unit", "annulus_periodic", "linear_saddle"):
            flow = zoo.get(name)
            for x in flow.samples(20, seed=7):
                for delta in (0.05, 0.1):
                    v = ball_time_scan(flow, x, delta)
                    assert v.verdict == HOLDS, (name, x.tolist(), delta, v.witness)
                    worst = max(worst, v.witness["exit_time_forward"] / delta, v.witness["exit_time_backward"] / delta)
                    n += 1
        info["detail"] = f"{n} scans, max exit time / delta {worst:.4f}"
        assert worst < 3.0


def test_criterion_08_constants_pipeline():
    with criterion(8, "constants pipeline") as info:
        bc = constants_BC(zoo.get("linear_saddle"))
        assert bc.B == pytest.approx(1.0, abs=1e-9) and bc.C == pytest.approx(1.0, abs=1e-9)
        assert bc.sandwich_slack >= -1e-12
        cubic = zoo.get("sphere_ns_cubic")
        bx = constants_BC(cubic)
        assert bx.diverging and bx.growth > 10
        with pytest.raises(PipelineUnavailableError):
            delta_star(cubic)
        info["detail"] = f"saddle B={bc.B!r} C={bc.C!r}; sphere X C growth {bx.growth:.1f}x per decade, delta_star refused"


def test_criterion_09_cylinder_isometry():
    with criterion(9, "cylinder isometry") as info:
        v = cylinder_isometry_check(1000, seed=0)
        G = grid_mesh((-0.5, -0.5), (0.5, 0.5), 201)
        d = rescaled_distance_mesh(ROTATION, G, [np.exp(-1), 0.0], [np.exp(-2), 0.0], [(0.0, 0.0)])
        info["detail"] = f"max pushforward error {v.witness['max_relative_error']:.1e}, mesh dist_r {d:.6f}"
        assert v.witness["max_relative_error"] <= 1e-9
        assert abs(d - 1.0) <= 0.05


@pytest.fixture(scope="module")
def zoo_reports(tmp_path_factory):
    """``report --all`` for every registered flow: (exit code, parsed report.json)."""
    out = {}
    for name in zoo.names():
        d = tmp_path_factory.mktemp(name)
        code = main(["report", "--all", "--flow", name, "--out", str(d)])
        out[name] = (code, json.loads((d / "report.json").read_text()))
    return out


def _check(report: dict, prop: str) -> dict:
    (rec,) = [c for c in report["checks"] if c["property"] == prop]
    return rec


def test_criterion_10_kh_classifier(zoo_reports):
    with criterion(10, "KH classifier") as info:
        annulus = _check(zoo_reports["annulus_periodic"][1], "kh")
        torus = _check(zoo_reports["torus_irrational_singular"][1], "kh")
        zero = _check(zoo_reports["zero_field"][1], "kh")
        info["detail"] = f"annulus {annulus['verdict']}, torus {torus['verdict']}, zero_field {zero['verdict']}"
        assert annulus["verdict"] == HOLDS
        assert torus["verdict"] == VIOLATED and torus["witness"]["fix_open"] is False
        assert zero["verdict"] == VIOLATED and zero["witness"]["separating"] == VIOLATED


def test_criterion_11_separating_closed_forms():
    with criterion(11, "separating margin closed forms") as info:
        annulus = zoo.get("annulus_periodic")
        anti = separating_margin(annulus, [1.0, 0.0], [2.0, 0.0], np.pi / 3 + 0.1)
        same = separating_margin(annulus, [1.0, 0.0], [np.cos(0.1), np.sin(0.1)], 10.0)
        info["detail"] = f"pair margin {anti:.6f} (3), same-orbit {same:.9f} ({2 * np.sin(0.05):.9f})"
        assert abs(anti - 3.0) <= 1e-3
        assert abs(same - 2 * np.sin(0.05)) <= 1e-6


def test_criterion_12_consistency_flag(zoo_reports):
    with criterion(12, "forbidden conjunction never raised") as info:
        flagged = []
        for name, (code, report) in zoo_reports.items():
            assert code in (0, 2, 3), (name, code)
            rec = _check(report, "main_theorem_consistency")
            if rec["verdict"] != HOLDS or rec["witness"]["flag"]:
                flagged.append(name)
        info["detail"] = f"{len(zoo_reports)} flows, flagged {flagged}"
        assert not flagged
