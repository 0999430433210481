"""Verification suites behind ``cachedof verify`` and the acceptance tests.

Each suite returns a ``CheckResult``.  A result marked ``known`` records a
property that is stated for the scheme but does not hold for it everywhere;
such rows are always printed and counted, and ``--strict`` turns them into
failures.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .converse import (
    delta_lb_prime,
    delta_lb_prime_detail,
    endpoint_gap,
    f_min,
    zf_overshoot,
)
from .model import SystemParams
from .ndt import (
    HALF_DOWN,
    HALF_UP,
    delta_edge,
    delta_for_m,
    delta_up,
    delta_up_memshare,
    m_max,
    m_opt,
    m_zero_en_cache,
    r_threshold,
    rounded_m0,
)

R_GRID = (Fraction(1, 4), Fraction(1, 2), 1, 2, 4, 8, 16, 32)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    first_failure: Optional[str] = None
    known: bool = False
    stats: Dict[str, float] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else ("KNOWN-FAIL" if self.known else "FAIL")
        text = f"{status:10s} {self.name}: {self.detail}"
        if not self.passed and self.first_failure:
            text += f" | first failure: {self.first_failure}"
        return text


def _describe(p: SystemParams) -> str:
    return f"kt={p.kt} nt={p.nt} kr={p.kr} mu_t*kt={p.t_units} mu_r*kr={p.a_units} r={p.r}"


def acceptance_grid(
    kt_max: int = 8,
    nt_max: int = 4,
    kr_max: int = 12,
    r_values: Sequence = R_GRID,
    mu_r_kr: Optional[int] = None,
) -> Iterator[SystemParams]:
    """Integer-regime points of the certification grid."""
    for kt in range(1, kt_max + 1):
        for nt in range(1, nt_max + 1):
            for kr in range(1, kr_max + 1):
                a_values = range(kr + 1) if mu_r_kr is None else [mu_r_kr] if mu_r_kr <= kr else []
                for t in range(kt + 1):
                    for a in a_values:
                        for r in r_values:
                            yield SystemParams.from_units(kt, nt, kr, t, a, r)


DeltaUp = Callable[[SystemParams], Fraction]


def _default_delta_up(p: SystemParams) -> Fraction:
    return delta_up(p).delta_total


def mutant_drop_mu_r(p: SystemParams) -> Fraction:
    """delta_up with the receive-cache term removed from the served-user count."""
    m = m_opt(p).m_final
    base = delta_for_m(m, p) - delta_edge(m, p)
    u = min(p.kr, p.nt * m)
    edge = Fraction(0) if p.mu_r == 1 else p.kr * (1 - p.mu_r) / max(u, 1)
    return base + edge


MUTANTS = {"drop_mu_r": mutant_drop_mu_r}


def gap_certificate(
    points: Iterable[SystemParams],
    delta_up_fn: DeltaUp = _default_delta_up,
    tol: float = 1e-9,
) -> Tuple[CheckResult, CheckResult, Dict[tuple, Fraction]]:
    """Gap 1 <= delta_up / delta_lb' <= 3/2 and delta_lb' <= f_min <= delta_up.

    Also returns the table of delta_up values for the monotonicity suite.
    """
    table: Dict[tuple, Fraction] = {}
    n = gap_bad = sand_bad = 0
    worst = 0.0
    gap_first = sand_first = None
    for p in points:
        n += 1
        up_exact = delta_up_fn(p)
        table[(p.kt, p.nt, p.kr, p.t_units, p.a_units, p.r)] = up_exact
        up = float(up_exact)
        lb = delta_lb_prime(p)
        fm = f_min(p)
        gap = 1.0 if up == 0 and lb == 0 else (math.inf if lb == 0 else up / lb)
        worst = max(worst, gap)
        if not (1 - tol <= gap <= 1.5 + tol):
            gap_bad += 1
            gap_first = gap_first or f"{_describe(p)} gap={gap:.6g}"
        if not (lb <= fm + tol and fm <= up + tol):
            sand_bad += 1
            sand_first = sand_first or f"{_describe(p)} lb={lb:.6g} f_min={fm:.6g} up={up:.6g}"
    gap_res = CheckResult(
        "gap certificate",
        gap_bad == 0,
        f"{n} points, {gap_bad} outside [1, 1.5], max gap {worst:.12g}",
        gap_first,
        stats={"points": n, "violations": gap_bad, "max_gap": worst},
    )
    sand_res = CheckResult(
        "sandwich lb' <= f_min <= delta_up",
        sand_bad == 0,
        f"{n} points, {sand_bad} violations",
        sand_first,
        stats={"points": n, "violations": sand_bad},
    )
    return gap_res, sand_res, table


def gap_half_down(points: Iterable[SystemParams], tol: float = 1e-9) -> CheckResult:
    """Gap certificate with half-down rounding, evaluated where the rounding matters."""
    n = bad = 0
    first = None
    for p in points:
        if p.mu_r == 1 or p.r == 0 or p.r >= r_threshold(p):
            continue
        if rounded_m0(p, HALF_UP) == rounded_m0(p, HALF_DOWN):
            continue
        n += 1
        up = float(delta_up(p, HALF_DOWN).delta_total)
        lb = delta_lb_prime(p, HALF_DOWN)
        gap = up / lb
        if not (1 - tol <= gap <= 1.5 + tol):
            bad += 1
            first = first or f"{_describe(p)} gap={gap:.6g}"
    return CheckResult("gap certificate (half-down rounding)", bad == 0, f"{n} tie points, {bad} violations", first)


def monotonicity(table: Dict[tuple, Fraction], r_values: Sequence = R_GRID) -> List[CheckResult]:
    r_values = [Fraction(r) for r in r_values]
    out = []
    for axis in ("mu_t", "mu_r", "r"):
        n = bad = bad_main = 0
        first = None
        for (kt, nt, kr, t, a, r), val in table.items():
            if axis == "mu_t":
                nxt = (kt, nt, kr, t + 1, a, r)
            elif axis == "mu_r":
                nxt = (kt, nt, kr, t, a + 1, r)
            else:
                idx = r_values.index(r)
                if idx + 1 == len(r_values):
                    continue
                nxt = (kt, nt, kr, t, a, r_values[idx + 1])
            if nxt not in table:
                continue
            n += 1
            if table[nxt] > val:
                bad += 1
                p = SystemParams.from_units(kt, nt, kr, t, a, r)
                if not zf_overshoot(p):
                    bad_main += 1
                first = first or f"{_describe(p)}: {float(val):.6g} -> {float(table[nxt]):.6g} at next {axis}"
        out.append(
            CheckResult(
                f"delta_up non-increasing in {axis}",
                bad == 0,
                f"{n} neighbour pairs, {bad} increases ({bad_main} outside the ceil-overshoot regime)",
                first,
                known=(axis == "r"),
                stats={"pairs": n, "violations": bad, "violations_main_regime": bad_main},
            )
        )
    return out


def memshare_continuity(tol: float = 1e-9) -> CheckResult:
    """Jump of memory-shared delta_up across integer cache sizes (K_T=12, K_R=24)."""
    eps = Fraction(1, 10**12)
    cases = []
    for nt, r in itertools.product((1, 2, 4), (1, 4, 16)):
        for t in (Fraction(0), Fraction(5, 2), Fraction(6)):
            cases.extend(((nt, r), (t, Fraction(a)), (0, eps)) for a in range(1, 24))
        for a in (Fraction(0), Fraction(13, 2), Fraction(12)):
            cases.extend(((nt, r), (Fraction(t), a), (eps, 0)) for t in range(1, 12))
    worst = 0.0
    bad = 0
    first = None
    for (nt, r), (t, a), (dt, da) in cases:
        mid = SystemParams.from_units(12, nt, 24, t, a, r)
        left = SystemParams.from_units(12, nt, 24, t - dt, a - da, r)
        right = SystemParams.from_units(12, nt, 24, t + dt, a + da, r)
        jump = _jump(mid, left, right)
        worst = max(worst, jump)
        if jump >= tol:
            bad += 1
            first = first or f"{_describe(mid)} jump={jump:.3g}"
    return CheckResult("memory-shared delta_up continuity", bad == 0, f"{len(cases)} boundaries, max jump {worst:.3g}", first)


def _jump(mid, left, right) -> float:
    v = delta_up_memshare(mid)
    return float(max(abs(delta_up_memshare(left) - v), abs(delta_up_memshare(right) - v)))


def lb_prime_continuity(points: Iterable[SystemParams], tol: float = 1e-9) -> Tuple[CheckResult, CheckResult]:
    """delta_lb' at interior integer endpoints: left-limit collapse and jump size."""
    eps = Fraction(1, 10**12)
    n = bad = collapse_bad = 0
    worst = 0.0
    first = collapse_first = None
    for p in points:
        if p.t_units != 0 or p.mu_r == 1 or zf_overshoot(p):
            continue
        mm = m_max(p)
        big_m = m_zero_en_cache(p)
        for i in range(max(big_m, 0), mm - 1):
            at = p.with_(mu_t=Fraction(i + 1, p.kt))
            left = p.with_(mu_t=(i + 1 - eps) / p.kt)
            lim = delta_lb_prime(left)
            val = delta_lb_prime(at)
            target = float(p.kr * (1 - p.mu_r) / ((i + 1) * p.nt + p.a_units))
            n += 1
            if abs(lim - target) > 1e-9:
                collapse_bad += 1
                collapse_first = collapse_first or f"{_describe(at)} left={lim:.12g} expected={target:.12g}"
            jump = abs(lim - val)
            worst = max(worst, jump)
            if jump >= tol:
                bad += 1
                first = first or f"{_describe(at)} left={lim:.9g} value={val:.9g}"
    collapse = CheckResult(
        "delta_lb' left limit at i+1 equals edge term",
        collapse_bad == 0,
        f"{n} endpoints, {collapse_bad} mismatches",
        collapse_first,
    )
    jumps = CheckResult(
        "delta_lb' continuity at interval endpoints",
        bad == 0,
        f"{n} endpoints, {bad} jumps >= {tol:g}, max jump {worst:.3g}",
        first,
        known=True,
        stats={"endpoints": n, "violations": bad, "max_jump": worst},
    )
    return collapse, jumps


def convexity(points: Iterable[SystemParams], tol: float = 1e-9) -> CheckResult:
    """Second differences of m -> delta_F(m) + delta_E(m) over 1..m_max."""
    n = bad = 0
    first = None
    for p in points:
        if p.mu_r == 1 or p.r == 0:
            continue
        vals = [float(delta_for_m(m, p)) for m in range(1, m_max(p) + 1)]
        for k in range(1, len(vals) - 1):
            n += 1
            if vals[k - 1] - 2 * vals[k] + vals[k + 1] < -tol:
                bad += 1
                first = first or f"{_describe(p)} m={k + 1}"
    return CheckResult("convexity of delta(m)", bad == 0, f"{n} second differences, {bad} negative", first)


def point_values() -> CheckResult:
    checks = []
    base = dict(kt=12, nt=4, kr=24)
    for a in range(0, 25):
        p = SystemParams.from_units(base["kt"], base["nt"], base["kr"], 6, a, 4)
        checks.append((f"t=6 a={a}", delta_up(p).delta_total, 1 - Fraction(a, 24)))
    checks.append(("t=0 a=0", delta_up(SystemParams.from_units(12, 4, 24, 0, 0, 4)).delta_total, Fraction(7, 2)))
    checks.append(
        ("3x3 example", delta_up(SystemParams.from_units(3, 1, 3, 1, 1, Fraction(9, 2))).delta_total, Fraction(8, 9))
    )
    bad = [f"{name}: {float(got)} != {float(want)}" for name, got, want in checks if abs(float(got - want)) > 1e-12]
    return CheckResult("point values", not bad, f"{len(checks)} values", bad[0] if bad else None)


def fig3_shape(r_values: Sequence = (1, 2, 4, 8, 16, 32)) -> CheckResult:
    series = {}
    for r in r_values:
        series[r] = [m_opt(SystemParams.from_units(12, 4, 24, 4, a, r)).m_final for a in range(25)]
    problems = []
    for r, ms in series.items():
        if any(b > a for a, b in zip(ms, ms[1:])):
            problems.append(f"m increases along mu_r*kr for r={r}: {ms}")
    if 4 in series and series[4][0] != 4:
        problems.append(f"m(r=4, 0) = {series[4][0]}")
    if 16 in series and series[16][0] != 6:
        problems.append(f"m(r=16, 0) = {series[16][0]}")
    at12 = {series[r][12] for r in series}
    if at12 != {3}:
        problems.append(f"m at mu_r*kr=12: {sorted(at12)}")
    return CheckResult("fig3 multiplicity shape", not problems, f"{len(series)} series", problems[0] if problems else None)


CHAIN_CONFIGS = (
    SystemParams(2, 1, 2, 2, 4, Fraction(1, 2), Fraction(1, 2), 2),
    SystemParams(3, 1, 3, 3, 9, Fraction(1, 3), Fraction(1, 3), Fraction(9, 2)),
    SystemParams(2, 1, 3, 3, 6, Fraction(1, 2), Fraction(0), Fraction(1, 4)),
    SystemParams(3, 1, 3, 3, 3, Fraction(0), Fraction(0), 1),
    SystemParams(2, 1, 2, 3, 4, Fraction(1, 2), Fraction(0), 1),
)


def converse_chain_check(samples: int = 1000, configs: Sequence[SystemParams] = CHAIN_CONFIGS) -> CheckResult:
    from .converse_chain import averaged_objective_bound, sample_feasible_allocation

    n = bad = 0
    min_slack = None
    first = None
    for p in configs:
        for seed in range(samples):
            alloc = sample_feasible_allocation(p, seed=seed)
            rep = averaged_objective_bound(alloc)
            n += 1
            slack = rep.cs_slack
            min_slack = slack if min_slack is None else min(min_slack, slack)
            if not (rep.steps["final"] and rep.sum_b == rep.nf and slack >= 0 and rep.ok):
                bad += 1
                failed = [k for k, v in rep.steps.items() if not v]
                first = first or f"{_describe(p)} seed={seed} failed steps {failed}"
    return CheckResult(
        "converse inequality chain",
        bad == 0,
        f"{n} allocations over {len(configs)} configs, {bad} failures, min Cauchy-Schwarz slack {float(min_slack or 0):.3g}",
        first,
    )


SIM_INSTANCES = (
    SystemParams.from_units(3, 1, 3, 1, 1, Fraction(9, 2), f_packets=9),
    SystemParams.from_units(2, 2, 4, 1, 2, 2, f_packets=12),
    SystemParams.from_units(4, 1, 4, 1, 1, 4, f_packets=32),
)


def simulation_agreement(seeds: int = 100, instances: Sequence[SystemParams] = SIM_INSTANCES) -> CheckResult:
    from .delivery import ZF_TOL, serving_bound_check, simulate

    runs = fails = 0
    worst_res = 0.0
    first = None
    for p in instances:
        for seed in range(seeds):
            rep, _, _, sched = simulate(p, seed)
            runs += 1
            worst_res = max(worst_res, rep.max_zf_residual)
            ok = rep.all_decoded and rep.matches_analytic and rep.max_zf_residual <= ZF_TOL and serving_bound_check(sched)
            if not ok:
                fails += 1
                first = first or f"{_describe(p)} seed={seed} failures={rep.failures[:1]}"
    return CheckResult(
        "simulation vs analytic NDT",
        fails == 0,
        f"{runs} runs, {fails} failures, max ZF residual {worst_res:.3g}",
        first,
    )


def serving_bound_negative(seeds: int = 20) -> CheckResult:
    from .delivery import (
        DeliverySchedule,
        RankDeficientChannel,
        draw_channels,
        effective_gain,
        overloaded_batch,
        serving_bound_check,
        zf_beamformers,
    )

    p = SystemParams.from_units(3, 1, 4, 1, 1, 1)
    batch = overloaded_batch(p, m=2)
    sched = DeliverySchedule(p, 2, len(batch.active_users), 1, [batch])
    sched.availability = {s: s.tau_t for msg in batch.messages for _, s in msg.constituents}
    flagged = 0
    for seed in range(seeds):
        ch = draw_channels(p, seed)
        try:
            beams = zf_beamformers(batch, ch)
        except RankDeficientChannel:
            flagged += 1
            continue
        worst = max(
            abs(effective_gain(ch, j, msg.group, beams[i]))
            for i, msg in enumerate(batch.messages)
            for j in batch.zf_targets(msg)
        )
        flagged += worst >= 1e-3
    bound_ok = not serving_bound_check(sched)
    return CheckResult(
        "serving-bound negative test",
        flagged == seeds and bound_ok,
        f"{flagged}/{seeds} seeds rejected, serving bound flags slot: {bound_ok}",
    )


def endpoint_gap_check(points: Iterable[SystemParams]) -> CheckResult:
    """Closed-form endpoint gap versus the directly evaluated ratio."""
    n = bad = 0
    first = None
    for p in points:
        if p.mu_r == 1 or zf_overshoot(p) or p.r == 0:
            continue
        i = int(p.t_units)
        if delta_lb_prime_detail(p).branch != "interval":
            continue
        n += 1
        direct = float(delta_up(p).delta_total) / delta_lb_prime(p)
        if abs(direct - endpoint_gap(i, p)) > 1e-9:
            bad += 1
            first = first or f"{_describe(p)} direct={direct:.9g} formula={endpoint_gap(i, p):.9g}"
    return CheckResult("endpoint gap formula", bad == 0, f"{n} endpoints, {bad} mismatches", first)


def run_all(
    quick: bool = False,
    mutant: Optional[str] = None,
    mu_r_kr: Optional[int] = None,
    seeds: Optional[int] = None,
    samples: Optional[int] = None,
) -> List[CheckResult]:
    """Full verification table; ``quick`` shrinks the grid and sample counts."""
    grid_kw = dict(kt_max=4, nt_max=2, kr_max=6) if quick else {}
    fn = MUTANTS[mutant] if mutant else _default_delta_up
    points = list(acceptance_grid(mu_r_kr=mu_r_kr, **grid_kw))
    gap_res, sand_res, table = gap_certificate(points, fn)
    results = [gap_res, sand_res, gap_half_down(points), endpoint_gap_check(points)]
    results.append(point_values())
    results.append(fig3_shape())
    results.extend(monotonicity(table))
    results.append(memshare_continuity())
    results.extend(lb_prime_continuity(points))
    results.append(convexity(points))
    results.append(converse_chain_check(samples if samples is not None else (50 if quick else 1000)))
    results.append(simulation_agreement(seeds if seeds is not None else (10 if quick else 100)))
    results.append(serving_bound_negative())
    return results
