"""Command-line interface: ``cachedof analyze | sweep | simulate | verify``.

Exit codes: 0 ok, 2 invalid parameters, 3 infeasible instance,
4 simulation/decoding failure, 5 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from .converse import bounds_report, f_min
from .model import (
    CacheDofError,
    DegenerateAllCached,
    Infeasible,
    InfeasibleDelivery,
    InfeasibleFronthaul,
    InvalidMultiplicity,
    InvalidParams,
    NonIntegerRegime,
    SystemParams,
    require_valid,
)
from .ndt import delta_up, memshare_breakdown

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_DECODE, EXIT_VERIFY = 0, 2, 3, 4, 5

CSV_COLUMNS = ["mu_t_kt", "mu_r_kr", "n_t", "r", "m", "delta_f", "delta_e", "delta_up", "f_min", "delta_lb_prime", "gap"]
AXES = ("mu_r_kr", "mu_t_kt", "r", "n_t")
SNAP_TOL = 1e-3

PRESETS = {
    "fig2": {
        "base": {"kt": 12, "kr": 24, "r": Fraction(4)},
        "axis": "mu_r_kr",
        "values": [Fraction(k, 2) for k in range(49)],
        "series": [{"nt": nt, "t_units": t} for nt in (1, 2, 4) for t in (2, 4, 6)],
    },
    "fig3": {
        "base": {"kt": 12, "kr": 24, "nt": 4, "t_units": Fraction(4)},
        "axis": "mu_r_kr",
        "values": [Fraction(k) for k in range(25)],
        "series": [{"r": Fraction(r)} for r in (1, 2, 4, 8, 16, 32)],
    },
}


class UsageError(CacheDofError):
    pass


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (InfeasibleDelivery, InfeasibleFronthaul, Infeasible, DegenerateAllCached)):
        return EXIT_INFEASIBLE
    return EXIT_INVALID


def parse_rational(text) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidParams(f"not a number: {text!r}") from exc


def _snap_units(frac: Fraction, count: int) -> Fraction:
    """mu * K as cache units, snapped to an integer when within 1e-3 (``0.3333`` -> 1/3)."""
    units = frac * count
    nearest = round(units)
    if abs(float(units) - nearest) <= SNAP_TOL:
        return Fraction(nearest)
    return units


def _merged_options(args: argparse.Namespace) -> Dict:
    opts: Dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParams(f"cannot read config {args.config}: {exc}") from exc
        opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    for key, value in vars(args).items():
        if value is not None and key not in ("func", "config"):
            opts[key] = value
    return opts


def params_from_options(opts: Dict, warn=None) -> SystemParams:
    warn = warn or (lambda msg: print(f"warning: {msg}", file=sys.stderr))
    missing = [k for k in ("kt", "kr", "nt", "r") if opts.get(k) is None]
    if missing:
        raise InvalidParams("missing required parameter(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    kt, kr, nt = int(opts["kt"]), int(opts["kr"]), int(opts["nt"])

    def units(frac_key, unit_key, count):
        frac = opts.get(frac_key)
        unit = opts.get(unit_key)
        from_frac = _snap_units(parse_rational(frac), count) if frac is not None else None
        if unit is not None:
            unit = parse_rational(unit)
            if from_frac is not None and from_frac != unit:
                warn(f"--{frac_key.replace('_', '-')} and --{unit_key.replace('_', '-')} disagree; using units {unit}")
            return unit
        return from_frac if from_frac is not None else Fraction(0)

    t_units = units("mu_t", "mt_units", kt)
    a_units = units("mu_r", "mr_units", kr)
    params = SystemParams.from_units(
        kt, nt, kr, t_units, a_units, parse_rational(opts["r"]),
        n_files=int(opts.get("n_files") or kr),
        f_packets=int(opts.get("f_packets") or 1),
    )
    require_valid(params)
    return params


def analyze_row(params: SystemParams) -> Dict:
    """Everything analyze/sweep report for one point; NaN where not defined."""
    row = {
        "mu_t_kt": params.t_units,
        "mu_r_kr": params.a_units,
        "n_t": params.nt,
        "r": params.r,
        "m": None,
        "delta_f": None,
        "delta_e": None,
        "delta_up": None,
        "f_min": None,
        "delta_lb_prime": None,
        "gap": None,
        "branch_tags": [],
    }
    if params.integer_regime:
        brk = delta_up(params)
        rep = bounds_report(params)
        row.update(
            m=brk.m_used,
            delta_f=brk.delta_f,
            delta_e=brk.delta_e,
            delta_up=brk.delta_total,
            f_min=rep.f_min,
            delta_lb_prime=rep.delta_lb_prime,
            gap=rep.gap,
            branch_tags=rep.branch_tags,
        )
    else:
        d_f, d_e = memshare_breakdown(params)
        row.update(delta_f=d_f, delta_e=d_e, delta_up=d_f + d_e, f_min=f_min(params), branch_tags=["memshare"])
    return row


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, int):
        return str(x)
    v = float(x)
    if math.isnan(v):
        return "nan"
    return f"{v:.12g}"


def _json_row(row: Dict) -> Dict:
    out = {}
    exact = {}
    for key in CSV_COLUMNS:
        val = row[key]
        if val is None:
            out[key] = None
        elif isinstance(val, Fraction):
            out[key] = float(val)
            exact[key] = str(val)
        else:
            out[key] = val
    out["branch_tags"] = row["branch_tags"]
    out["exact"] = exact
    return out


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(rows: Sequence[Dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _threads() -> int:
    raw = os.environ.get("CACHEDOF_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            return max(1, min(int(raw), cap))
        except ValueError:
            pass
    return cap


def cmd_analyze(args) -> int:
    params = params_from_options(_merged_options(args))
    row = analyze_row(params)
    if args.format == "csv":
        _emit(_csv_text([row]), args.out)
    else:
        doc = _json_row(row)
        doc["params"] = params.to_dict()
        _emit(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _axis_values(opts: Dict) -> List[Fraction]:
    if opts.get("values"):
        return [parse_rational(v) for v in str(opts["values"]).split(",") if v.strip()]
    if opts.get("start") is None or opts.get("stop") is None:
        raise InvalidParams("sweep needs --values or --start/--stop[/--step]")
    start, stop = parse_rational(opts["start"]), parse_rational(opts["stop"])
    step = parse_rational(opts.get("step") or 1)
    if step <= 0:
        raise InvalidParams("--step must be positive")
    out, v = [], start
    while v <= stop:
        out.append(v)
        v += step
    return out


def _point(base: Dict, axis: str, value: Fraction) -> SystemParams:
    cfg = dict(base)
    key = {"mu_r_kr": "a_units", "mu_t_kt": "t_units", "r": "r", "n_t": "nt"}[axis]
    cfg[key] = value
    if axis == "n_t":
        if value.denominator != 1:
            raise InvalidParams("n_t values must be integers")
        cfg[key] = int(value)
    params = SystemParams.from_units(
        cfg["kt"], cfg["nt"], cfg["kr"], cfg.get("t_units", 0), cfg.get("a_units", 0), cfg["r"],
        n_files=cfg.get("n_files"), f_packets=cfg.get("f_packets", 1),
    )
    require_valid(params)
    return params


def _safe_row(params: SystemParams) -> Dict:
    try:
        return analyze_row(params)
    except (InfeasibleDelivery, InfeasibleFronthaul) as exc:
        print(f"warning: {exc}; row left as nan", file=sys.stderr)
        return {**{c: None for c in CSV_COLUMNS}, "mu_t_kt": params.t_units, "mu_r_kr": params.a_units,
                "n_t": params.nt, "r": params.r, "branch_tags": ["infeasible"]}


def sweep_points(opts: Dict) -> List[SystemParams]:
    preset = opts.get("preset")
    if preset:
        spec = PRESETS[preset]
        points = []
        for series in spec["series"]:
            base = {**spec["base"], **series}
            points.extend(_point(base, spec["axis"], v) for v in spec["values"])
        return points
    axis = opts.get("axis")
    if axis not in AXES:
        raise UsageError(f"--axis must be one of {', '.join(AXES)}")
    params = params_from_options(opts)
    base = {
        "kt": params.kt, "kr": params.kr, "nt": params.nt, "r": params.r,
        "t_units": params.t_units, "a_units": params.a_units,
        "n_files": params.n_files, "f_packets": params.f_packets,
    }
    return [_point(base, axis, v) for v in _axis_values(opts)]


def cmd_sweep(args) -> int:
    opts = _merged_options(args)
    points = sweep_points(opts)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(_safe_row, points))
    if args.format == "json":
        _emit(json.dumps([_json_row(r) for r in rows], sort_keys=True) + "\n", args.out)
    else:
        _emit(_csv_text(rows), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .delivery import RankDeficientChannel, simulate
    from .placement import placement_json

    opts = _merged_options(args)
    params = params_from_options(opts)
    seed = int(opts.get("seed") or 0)
    m = opts.get("m_override")
    try:
        report, placement, plan, schedule = simulate(params, seed, m=None if m is None else int(m),
                                                     awgn_snr_db=opts.get("awgn_snr_db"))
    except RankDeficientChannel as exc:
        print(f"error: {exc} (seed {seed})", file=sys.stderr)
        return EXIT_DECODE
    if opts.get("dump_placement"):
        with open(opts["dump_placement"], "w") as fh:
            fh.write(placement_json(placement, plan) + "\n")
    if opts.get("dump_slots"):
        with open(opts["dump_slots"], "w") as fh:
            fh.write(schedule.trace() + "\n")
    doc = report.to_dict()
    doc["params"] = params.to_dict()
    doc["delta_total_emp"] = {"value": float(report.delta_e_emp + report.delta_f_emp),
                              "exact": str(report.delta_e_emp + report.delta_f_emp)}
    _emit(json.dumps(doc, sort_keys=True) + "\n", args.out)
    if not report.all_decoded or not report.matches_analytic:
        print(f"error: simulation failed for seed {seed}: {report.failures[:3]}", file=sys.stderr)
        return EXIT_DECODE
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import MUTANTS, run_all

    if args.inject_mutant and args.inject_mutant not in MUTANTS:
        raise UsageError(f"unknown mutant {args.inject_mutant!r}; choose from {sorted(MUTANTS)}")
    results = run_all(
        quick=args.quick,
        mutant=args.inject_mutant,
        mu_r_kr=args.mu_r_kr,
        seeds=args.seeds,
        samples=args.samples,
    )
    lines = [r.line() for r in results]
    failing = [r for r in results if not r.passed and (args.strict or not r.known)]
    gap = next((r for r in results if r.name == "gap certificate"), None)
    if gap is not None:
        lines.append(f"max gap observed: {gap.stats.get('max_gap', float('nan')):.12g}")
    known = [r for r in results if not r.passed and r.known]
    lines.append(f"{len(results) - len(failing) - (0 if args.strict else len(known))} passed, "
                 f"{len(known)} known deviations, {len(failing)} failed")
    _emit("\n".join(lines) + "\n", args.out)
    if failing:
        print(f"first failing check: {failing[0].name}: {failing[0].first_failure}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kt", type=int, help="number of edge nodes K_T")
    p.add_argument("--kr", type=int, help="number of users K_R")
    p.add_argument("--nt", type=int, help="antennas per edge node n_T")
    p.add_argument("--mu-t", help="EN cache fraction mu_T")
    p.add_argument("--mu-r", help="user cache fraction mu_R")
    p.add_argument("--mt-units", help="EN cache in units, mu_T*K_T (wins over --mu-t)")
    p.add_argument("--mr-units", help="user cache in units, mu_R*K_R (wins over --mu-r)")
    p.add_argument("--r", help="fronthaul rate exponent r")
    p.add_argument("--n-files", type=int, help="library size N (default K_R)")
    p.add_argument("--f-packets", type=int, help="packets per file F (raised to a valid multiple)")
    p.add_argument("--config", help="JSON file with the same keys as the flags")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--out", help="write output to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachedof", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="achievable NDT and bounds at one point")
    _add_instance_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="one row per axis value (CSV or JSON)")
    _add_instance_flags(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--start")
    p.add_argument("--stop")
    p.add_argument("--step")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="placement, fronthaul, ZF delivery and decoding")
    _add_instance_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--m-override", type=int, help="run the scheme at this multiplicity")
    p.add_argument("--dump-placement", metavar="PATH", help="write placement and fronthaul plan as JSON")
    p.add_argument("--dump-slots", metavar="PATH", help="write a human-readable slot trace")
    p.add_argument("--awgn-snr-db", type=float, help="add noise (smoke test only)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="gap certificate and property suites")
    p.add_argument("--quick", action="store_true", help="smaller grid and fewer samples")
    p.add_argument("--strict", action="store_true", help="treat known deviations as failures")
    p.add_argument("--mu-r-kr", type=int, help="restrict the grid to this mu_R*K_R")
    p.add_argument("--seeds", type=int, help="channel seeds per simulation instance")
    p.add_argument("--samples", type=int, help="allocations per converse-chain config")
    p.add_argument("--inject-mutant", help="replace delta_up by a known-wrong variant (harness self-test)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", None) is None and args.command in ("analyze", "sweep"):
        args.format = "json" if args.command == "analyze" else "csv"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidParams, NonIntegerRegime, InvalidMultiplicity) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CacheDofError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
