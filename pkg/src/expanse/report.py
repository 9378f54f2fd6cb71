"""Running named checks on a flow and writing the JSON, CSV and SVG outputs."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, zoo
from .errors import NearFixedPointError, PipelineUnavailableError
from .flow import beta0_details, find_fixed_points, xi_estimate
from .properties import (
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    EfficiencyParams,
    PropertyVerdict,
    ball_time_scan,
    constant_A,
    constants_BC,
    curvature,
    delta_star,
    efficiency_scan,
    forbidden_conjunction,
    kh_classify,
    kstar_evidence,
    nearby_partners,
    osculating_curvature,
    rescaled_sup_ratio,
    rescaled_violation,
    separating_test,
    speed_profile,
)
from .rescaled import cylinder_isometry_check, grid_mesh, rescaled_distance_mesh
from .zoo import ROTATION

SEED_ENV = "EXPANSE_SEED"

CHECKS = (
    "separating",
    "kh",
    "efficiency",
    "curvature",
    "constants",
    "delta-star",
    "rescaled-ratio",
    "ball-time",
    "beta0",
    "xi",
    "speed-profile",
    "isometry",
)
SUITE_EXTRA = ("kstar", "rescaled-match")
ROTATION_FLOWS = ("concentric_circles", "rotation_unit")


@dataclass
class CheckOptions:
    delta: Optional[float] = None
    delta_star: Optional[float] = None
    horizon: Optional[float] = None
    mesh: int = 200
    time: float = 1.0
    samples: int = 6
    seed: int = 0
    x: Optional[list] = None
    y: Optional[list] = None

    def effective(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _coerce(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(CheckOptions)}
    if name not in kinds:
        raise KeyError(name)
    if name in ("x", "y"):
        return parse_point(raw)
    if name in ("mesh", "samples", "seed"):
        return int(raw)
    return float(raw)


def parse_point(text: str) -> list:
    try:
        return [float(c) for c in text.split(",")]
    except ValueError:
        raise ValueError(f"cannot parse point {text!r}; expected comma-separated numbers") from None


def load_config(path) -> dict:
    """Read ``key = value`` lines (``#`` starts a comment; dashes in keys allowed)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = _coerce(key, value)
        except KeyError:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {key}: {exc}") from None
    return out


def resolve_options(config: Optional[dict] = None, overrides: Optional[dict] = None) -> CheckOptions:
    """Defaults, then the config file, then ``EXPANSE_SEED``, then explicit flags."""
    opts = CheckOptions(**(config or {}))
    if SEED_ENV in os.environ:
        try:
            opts = replace(opts, seed=int(os.environ[SEED_ENV]))
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}") from None
    return replace(opts, **{k: v for k, v in (overrides or {}).items() if v is not None})


# individual checks


def _samples(flow, opts: CheckOptions) -> np.ndarray:
    if opts.x is not None:
        return np.atleast_2d(np.asarray(opts.x, dtype=float))
    return flow.samples(opts.samples, opts.seed)


SEPARATING_SAMPLES = 3


def _check_separating(flow, opts, memo=None):
    if memo is not None and "separating" in memo:
        return memo["separating"]
    pts = _samples(flow, replace(opts, samples=min(opts.samples, SEPARATING_SAMPLES)))
    v = separating_test(flow, pts, opts.delta or 0.1, opts.horizon or 50.0)
    if memo is not None:
        memo["separating"] = v
    return v


def _check_kh(flow, opts, memo=None):
    fix = find_fixed_points(flow, 60, isolation=False)
    return kh_classify(flow, _check_separating(flow, opts, memo), fix)


def _resolve_delta_star(flow, opts) -> float:
    if opts.delta_star is not None:
        return opts.delta_star
    return delta_star(flow, resolution=opts.mesh).value


def _check_efficiency(flow, opts):
    ds = _resolve_delta_star(flow, opts)
    delta = opts.delta if opts.delta is not None else (min(ds / 2, 0.3) if math.isfinite(ds) else 0.3)
    v = efficiency_scan(flow, _samples(flow, opts), EfficiencyParams(ds, delta), horizon=opts.horizon or 20.0)
    return v


def _check_curvature(flow, opts):
    pts = _samples(flow, replace(opts, samples=max(opts.samples, 20)))
    pts = pts[flow.field.speed(pts) > 1e-6]
    if not len(pts):
        return PropertyVerdict("curvature", INCONCLUSIVE, {"reason": "no regular sample"}, {})
    kappa = curvature(flow.field, pts)
    oracle = np.array([osculating_curvature(flow, p) for p in pts])
    err = np.abs(kappa - oracle)
    # straight orbits: the three-point oracle on integrated arcs carries ~1e-5 noise
    bad = err > 1e-4 * np.maximum(np.abs(oracle), 1.0)
    k = int(np.argmax(err))
    w = {"max_abs_error": float(err[k]), "at": pts[k].tolist(), "curvature": float(kappa[k]), "oracle": float(oracle[k]), "sup_curvature": float(kappa.max())}
    return PropertyVerdict("curvature", VIOLATED if bad.any() else HOLDS, w, {"points": len(pts), "rel_tol": 1e-4})


def _check_constants(flow, opts):
    bc = constants_BC(flow, resolution=opts.mesh)
    a = constant_A(flow, resolution=opts.mesh)
    w = {**asdict(bc), "A": a.A, "A1": a.A1, "A_bound": a.bound}
    ok = a.A <= a.bound + 1e-12
    verdict = INCONCLUSIVE if bc.diverging else (HOLDS if ok else VIOLATED)
    return PropertyVerdict("constants", verdict, w, {"resolution": opts.mesh})


def _check_delta_star(flow, opts):
    ds = delta_star(flow, resolution=opts.mesh)
    return PropertyVerdict("delta_star", HOLDS, ds.to_dict(), {"resolution": opts.mesh})


def _default_pair(flow, opts):
    if opts.x is not None and opts.y is not None:
        return np.asarray(opts.x, dtype=float), np.asarray(opts.y, dtype=float)
    if flow.space.base.kind == "unit_sphere_2":
        return np.array([1.0, 0.0, 0.0]), np.array([np.cos(0.5), np.sin(0.5), 0.0])
    x = _samples(flow, opts)[0]
    ys = nearby_partners(flow, x, [0.05])
    if not ys:
        raise PipelineUnavailableError("no partner point found")
    return x, ys[0]


def _check_rescaled_ratio(flow, opts):
    x, y = _default_pair(flow, opts)
    H = opts.horizon or 10.0
    delta = opts.delta or 0.1
    r1 = rescaled_sup_ratio(flow, x, y, H)
    r2 = rescaled_sup_ratio(flow, x, y, 10 * H)
    w = {"x": x.tolist(), "y": y.tolist(), "horizon": H, "ratio": r1, "ratio_10x": r2, "growth": r2 / r1 if r1 else math.inf}
    verdict = VIOLATED if max(r1, r2) <= delta else HOLDS
    return PropertyVerdict("rescaled_ratio", verdict, w, {"delta": delta, "horizons": [H, 10 * H]})


def _check_ball_time(flow, opts):
    delta = opts.delta or 0.1
    pts = _samples(flow, replace(opts, samples=max(opts.samples, 20)))
    worst = None
    for p in pts:
        v = ball_time_scan(flow, p, delta)
        if v.violated:
            return v
        if v.verdict == INCONCLUSIVE:
            worst = v
    if worst is not None:
        return worst
    return PropertyVerdict("ball_time", HOLDS, {"points": len(pts), "bound": 3 * delta}, {"delta": delta})


def _check_beta0(flow, opts):
    rows = beta0_details(flow, _samples(flow, opts), opts.horizon or 50.0)
    k = int(np.argmin([r[2] for r in rows]))
    x, period, diam = rows[k]
    w = {"x": np.asarray(x).tolist(), "period": period, "min_orbit_diameter": diam, "floor": 1e-6}
    return PropertyVerdict("beta0", HOLDS if diam >= 1e-6 else VIOLATED, w, {"horizon": opts.horizon or 50.0})


def _check_xi(flow, opts):
    coarse = xi_estimate(flow, opts.time, resolution=max(opts.mesh // 2, 4))
    fine = xi_estimate(flow, opts.time, resolution=opts.mesh)
    w = {"xi": fine, "xi_coarse": coarse, "T": opts.time}
    if not math.isfinite(fine):
        return PropertyVerdict("xi", INCONCLUSIVE, dict(w, reason="no regular mesh point"), {})
    # a value that keeps shrinking with the mesh signals no uniform lower bound
    verdict = VIOLATED if fine < 0.5 * coarse else HOLDS
    return PropertyVerdict("xi", verdict, w, {"resolutions": [max(opts.mesh // 2, 4), opts.mesh]})


def _check_speed_profile(flow, opts):
    return speed_profile(flow)


def _check_isometry(flow, opts):
    v = cylinder_isometry_check(1000, opts.seed)
    G = grid_mesh((-0.5, -0.5), (0.5, 0.5), 201)
    d = rescaled_distance_mesh(ROTATION, G, [math.exp(-1), 0.0], [math.exp(-2), 0.0], [(0.0, 0.0)])
    v.witness["circle_gap_dist_r"] = d
    if abs(d - 1.0) > 0.05:
        v.verdict = VIOLATED
    return v


def _check_kstar(flow, opts):
    return kstar_evidence(flow, _samples(flow, replace(opts, samples=2)), opts.delta or 0.1, opts.horizon or 10.0)


def _check_rescaled_match(flow, opts):
    return rescaled_violation(flow, _samples(flow, replace(opts, samples=2)), opts.delta or 0.1, opts.horizon or 10.0)


_RUNNERS = {
    "separating": _check_separating,
    "kh": _check_kh,
    "efficiency": _check_efficiency,
    "curvature": _check_curvature,
    "constants": _check_constants,
    "delta-star": _check_delta_star,
    "rescaled-ratio": _check_rescaled_ratio,
    "ball-time": _check_ball_time,
    "beta0": _check_beta0,
    "xi": _check_xi,
    "speed-profile": _check_speed_profile,
    "isometry": _check_isometry,
    "kstar": _check_kstar,
    "rescaled-match": _check_rescaled_match,
}


_SHARED = ("separating", "kh")


def _run(name: str, flow, opts: CheckOptions, memo: Optional[dict] = None):
    if name not in _RUNNERS:
        raise KeyError(f"unknown check {name!r}; choose from {', '.join(_RUNNERS)}")
    try:
        if name in _SHARED:
            v = _RUNNERS[name](flow, opts, memo)
        else:
            v = _RUNNERS[name](flow, opts)
        reason = None
    except (PipelineUnavailableError, NearFixedPointError) as exc:
        reason = str(exc)
        v = PropertyVerdict(name.replace("-", "_"), INCONCLUSIVE, {"reason": reason}, {})
    v.parameters = dict(v.parameters, **opts.effective())
    return v, reason


def run_check(name: str, flow, opts: Optional[CheckOptions] = None) -> PropertyVerdict:
    """Run the check `name`; unmet preconditions give an inconclusive verdict."""
    return _run(name, flow, opts or CheckOptions())[0]


# reports


@dataclass
class CheckRecord:
    verdict: PropertyVerdict
    millis: float

    def to_dict(self) -> dict:
        return dict(self.verdict.to_dict(), millis=self.millis)


@dataclass
class Report:
    flow: str
    seed: int
    checks: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "flow": self.flow,
            "seed": self.seed,
            "environment": self.environment,
            "checks": [c.to_dict() for c in self.checks],
            "skipped": self.skipped,
        }

    @property
    def exit_code(self) -> int:
        return exit_code([c.verdict for c in self.checks])


def exit_code(verdicts) -> int:
    """0 when everything holds, 2 if anything is violated, 3 if anything is inconclusive."""
    states = {v.verdict for v in verdicts}
    if VIOLATED in states:
        return 2
    if INCONCLUSIVE in states:
        return 3
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_report(report: Report) -> str:
    return json.dumps(_jsonable(report.to_dict()), sort_keys=True, indent=2) + "\n"


def write_report(report: Report, path) -> None:
    """Write `report` as JSON with sorted keys; non-finite numbers become strings."""
    Path(path).write_text(dumps_report(report))


def write_summary_csv(report: Report, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["property", "verdict", "millis"])
        for c in report.checks:
            w.writerow([c.verdict.property, c.verdict.verdict, f"{c.millis:.3f}"])


def timed_check(name: str, flow, opts: CheckOptions, memo: Optional[dict] = None):
    """:class:`CheckRecord` for `name` and the reason it was not applicable, if any.

    `memo` shares intermediate verdicts between checks of one run.
    """
    t0 = time.perf_counter()
    v, reason = _run(name, flow, opts, memo)
    return CheckRecord(v, 1000.0 * (time.perf_counter() - t0)), reason


def suite_for(flow) -> list:
    names = [c for c in CHECKS if c != "isometry" or flow.name in ROTATION_FLOWS]
    return names + list(SUITE_EXTRA)


def run_all(flow_name: str, opts: Optional[CheckOptions] = None, out_dir=None) -> Report:
    """Full suite on one flow; writes report.json, summary.csv and SVGs to `out_dir`.

    Checks whose preconditions fail for the flow go to ``skipped``.  The
    forbidden conjunction (orbit-wise expansive, efficient, yet not rescaling
    expansive) is recorded as its own check.
    """
    from .plotting import render_svg
    from .flow import sample_orbit

    opts = opts or CheckOptions()
    flow = zoo.get(flow_name)
    report = Report(flow_name, opts.seed, environment=opts.effective())
    by_name, memo = {}, {}
    for name in suite_for(flow):
        rec, reason = timed_check(name, flow, opts, memo)
        by_name[name] = rec.verdict
        if reason is not None:
            report.skipped.append({"property": rec.verdict.property, "reason": reason})
        else:
            report.checks.append(rec)
    flag = forbidden_conjunction(by_name["kstar"], by_name["efficiency"], by_name["rescaled-match"])
    consistency = PropertyVerdict(
        "main_theorem_consistency",
        VIOLATED if flag else HOLDS,
        {"kstar": by_name["kstar"].verdict, "efficiency": by_name["efficiency"].verdict, "rescaled": by_name["rescaled-match"].verdict, "flag": flag},
        {},
    )
    report.checks.append(CheckRecord(consistency, 0.0))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out / "report.json")
        write_summary_csv(report, out / "summary.csv")
        x0 = _samples(flow, opts)[0]
        render_svg(sample_orbit(flow, x0, 0.0, 2 * np.pi, 800), out / "orbit.svg")
        for rec in report.checks:
            if rec.verdict.violated:
                render_svg(rec.verdict, out / f"{rec.verdict.property}.svg", flow)
    return report
