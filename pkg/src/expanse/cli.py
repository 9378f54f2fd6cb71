"""Command-line front end.

Exit codes: 0 when every verdict holds at scale, 2 when any is violated,
3 when any is inconclusive (and none violated), 1 for usage or config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, zoo
from .flow import sample_orbit, write_orbit_csv
from .matcher import RESCALED, UNIFORM, min_match_delta_two_sided
from .properties import match_window
from .report import (
    CHECKS,
    Report,
    dumps_report,
    exit_code,
    load_config,
    parse_point,
    resolve_options,
    run_all,
    timed_check,
)

USAGE_ERROR = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _point(flag: str):
    def parse(text: str):
        try:
            return parse_point(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: cannot parse {text!r} as a comma-separated point")

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="expanse", description="Expansivity experiments on smooth flows.")
    p.add_argument("--version", action="version", version=f"expanse {__version__}")
    p.add_argument("--config", help="key=value file with default options")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    z = sub.add_parser("zoo", help="registered flows")
    z.add_argument("action", choices=["list"])

    s = sub.add_parser("simulate", help="integrate an orbit and write it as CSV")
    s.add_argument("--flow", required=True)
    s.add_argument("--x0", required=True, type=_point("--x0"))
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--t1", type=float, required=True)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--out", required=True)

    m = sub.add_parser("match", help="two-sided matching threshold of two orbits")
    m.add_argument("--flow", required=True)
    m.add_argument("--x", required=True, type=_point("--x"))
    m.add_argument("--y", required=True, type=_point("--y"))
    m.add_argument("--horizon", type=float, default=5.0)
    m.add_argument("--mode", choices=[UNIFORM, RESCALED], default=UNIFORM)
    m.add_argument("--spacing", type=float, default=0.01)
    m.add_argument("--json", dest="json_out")

    c = sub.add_parser("check", help="run one property check")
    c.add_argument("prop", choices=CHECKS)
    _common(c)
    c.add_argument("--json", dest="json_out")
    c.add_argument("--plot", help="SVG of the verdict")

    r = sub.add_parser("report", help="run the full suite")
    _common(r)
    r.add_argument("--all", action="store_true", help="run every applicable check (the default)")
    r.add_argument("--out", required=True)
    return p


def _common(p):
    p.add_argument("--flow", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--delta-star", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--mesh", type=int)
    p.add_argument("--time", type=float, help="flow time for the xi check")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--x", type=_point("--x"))
    p.add_argument("--y", type=_point("--y"))


def _options(args):
    config = load_config(args.config) if args.config else {}
    keys = ("delta", "delta_star", "horizon", "mesh", "time", "samples", "seed", "x", "y")
    return resolve_options(config, {k: getattr(args, k) for k in keys})


def _flow(name: str):
    try:
        return zoo.get(name)
    except LookupError as exc:
        raise UsageError(f"--flow: {exc}") from None


def _cmd_zoo(args) -> int:
    for name in zoo.names():
        print(name)
    return 0


def _cmd_simulate(args) -> int:
    flow = _flow(args.flow)
    if args.dt <= 0:
        raise UsageError("--dt: must be positive")
    n = max(int(round(abs(args.t1 - args.t0) / args.dt)) + 1, 2)
    seg = sample_orbit(flow, args.x0, args.t0, args.t1, n)
    write_orbit_csv(seg, args.out)
    return 0


def _cmd_match(args) -> int:
    flow = _flow(args.flow)
    P = match_window(flow, args.x, args.horizon, args.spacing, mode=args.mode)
    Q = match_window(flow, args.y, args.horizon, args.spacing, mode=args.mode)
    res = min_match_delta_two_sided(P, Q, args.mode)
    out = dict(res.to_dict(), flow=flow.name, x=args.x, y=args.y, horizon=args.horizon)
    text = json.dumps(out, sort_keys=True, indent=2, default=str)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_check(args) -> int:
    from .plotting import render_svg

    flow = _flow(args.flow)
    opts = _options(args)
    rec, _ = timed_check(args.prop, flow, opts)
    report = Report(flow.name, opts.seed, [rec], environment=opts.effective())
    text = dumps_report(report)
    if args.json_out:
        Path(args.json_out).write_text(text)
    print(f"{rec.verdict.property}: {rec.verdict.verdict}")
    if args.plot:
        render_svg(rec.verdict, args.plot, flow)
    return report.exit_code


def _cmd_report(args) -> int:
    flow = _flow(args.flow)
    report = run_all(flow.name, _options(args), args.out)
    for rec in report.checks:
        print(f"{rec.verdict.property}: {rec.verdict.verdict}")
    for s in report.skipped:
        print(f"{s['property']}: skipped ({s['reason']})")
    return exit_code([c.verdict for c in report.checks])


_COMMANDS = {
    "zoo": _cmd_zoo,
    "simulate": _cmd_simulate,
    "match": _cmd_match,
    "check": _cmd_check,
    "report": _cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        # ValueError covers malformed config values and out-of-range parameters
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
