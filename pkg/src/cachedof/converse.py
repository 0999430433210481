"""Lower bounds on the minimum NDT and the 3/2 gap certificate.

``f_lower`` is the relaxed converse objective as a function of the average
transmit-side multiplicity ``x``; ``f_min`` minimises it over the feasible
range of ``x``; ``delta_lb_prime`` is the piecewise under-approximation of
``f_min`` used to certify ``delta_up / delta_lb_prime <= 3/2``.

The piecewise construction presumes that ``nt * m_max + mu_r*kr <= kr``
(zero-forcing never asks for more users than exist).  When the ceiling in
``m_max`` overshoots, or the fronthaul is absent, the bound falls back to the
minimised objective with the served-user count capped at ``kr``, which is a
valid converse because no slot can serve more than ``kr`` users.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

from .model import NonIntegerRegime, SystemParams, require_integer_regime, require_valid
from .ndt import delta_up, m_max, m_stationary, m_zero_en_cache, r_threshold, HALF_UP

INF = math.inf


def f_lower(x, params: SystemParams, cap_users: bool = False) -> float:
    """Relaxed converse objective at average multiplicity x.

    With ``cap_users`` the edge term uses min(kr, nt*x + mu_r*kr) users.
    """
    x = float(x)
    t = float(params.t_units)
    a = float(params.a_units)
    kr, kt = params.kr, params.kt
    served = params.nt * x + a
    if cap_users:
        served = min(kr, served)
    if served <= 0:
        raise ValueError("f_lower needs x > 0 or mu_r*kr > 0")
    edge = kr * (1 - float(params.mu_r)) / served
    if params.r == 0:
        return edge if x <= t else INF
    return kr / (kt * float(params.r)) * (x - t) + edge


def x_domain(params: SystemParams) -> Tuple[Fraction, Fraction]:
    t = params.t_units
    return max(t, Fraction(1)), max(Fraction(m_max(params)), t)


def m_star(params: SystemParams) -> float:
    """Real-valued minimiser of f over x >= 1 ignoring the EN cache."""
    if params.r >= r_threshold(params):
        return float(m_max(params))
    return max(m_stationary(params), 1.0)


def f_min(params: SystemParams, cap_users: bool = True) -> float:
    require_valid(params)
    if params.mu_r == 1:
        return 0.0
    lo, hi = (float(v) for v in x_domain(params))
    if not cap_users:
        m0 = m_stationary(params)
        if lo <= m0 <= hi and params.r > 0:
            return f_lower(m0, params)
        return min(f_lower(lo, params), f_lower(hi, params))
    # f is convex; its minimiser is an endpoint, m_0, or the point where the user cap bites
    kink = float((params.kr - params.a_units) / params.nt)
    candidates = [lo, hi, kink]
    if params.r > 0:
        candidates.append(m_stationary(params))
    return min(f_lower(min(max(c, lo), hi), params, cap_users=True) for c in candidates)


def zf_overshoot(params: SystemParams) -> bool:
    """True when nt * m_max + mu_r*kr exceeds kr (ceil in m_max rounds past kr)."""
    return params.nt * m_max(params) + params.a_units > params.kr


def _interval_bound(t: float, i: int, params: SystemParams) -> float:
    """Chord of the edge term through i+1 and i+2, evaluated at t in [i, i+1)."""
    n, a = params.nt, float(params.a_units)
    scale = params.kr * (1 - float(params.mu_r))
    return scale * ((i + 2 - t) / ((i + 1) * n + a) + (t - i - 1) / ((i + 2) * n + a))


def _m0_sign(params: SystemParams, k: int) -> int:
    """Exact sign of m_0 - k."""
    shift = k + params.a_units / params.nt
    x = params.kt * (1 - params.mu_r) * params.r / params.nt
    if shift < 0:
        return 1
    lhs, rhs = x, shift * shift
    return (lhs > rhs) - (lhs < rhs)


@dataclass(frozen=True)
class LowerBound:
    value: float
    branch: str
    alternative: Optional[float] = None


def delta_lb_prime_detail(params: SystemParams, rounding: str = HALF_UP) -> LowerBound:
    require_valid(params)
    if params.a_units.denominator != 1:
        raise NonIntegerRegime("delta_lb_prime needs integer mu_r*kr")
    if params.mu_r == 1:
        return LowerBound(0.0, "all_cached")
    if params.r == 0:
        return LowerBound(f_min(params), "no_fronthaul")
    if zf_overshoot(params):
        return LowerBound(f_min(params), "user_cap")

    kr, kt, n = params.kr, params.kt, params.nt
    a = float(params.a_units)
    r = float(params.r)
    t = float(params.t_units)
    edge_scale = kr * (1 - float(params.mu_r))
    mm = m_max(params)
    big_m = m_zero_en_cache(params, rounding)
    ms = m_star(params)

    if t <= big_m:
        case1 = kr * (ms - t) / (kt * r) + edge_scale / (ms * n + a)
        case2 = None
        if big_m <= mm - 1:
            case2 = kr * (big_m - t) / (kt * r) + _interval_bound(big_m, big_m, params)
        if params.r >= r_threshold(params) or _m0_sign(params, 1) <= 0:
            order = 0  # m* == m(r, mu_r)
        else:
            order = _m0_sign(params, big_m)
        if case2 is None or order < 0:
            return LowerBound(case1, "below_m_case1")
        if order > 0:
            return LowerBound(case2, "below_m_case2")
        # m* sits exactly on m(r, mu_r): both regimes apply, keep the smaller
        lo, hi = sorted((case1, case2))
        return LowerBound(lo, "below_m_tie", alternative=hi)
    if t < mm:
        return LowerBound(_interval_bound(t, math.floor(t), params), "interval")
    return LowerBound(edge_scale / min(kr, n * t + a), "beyond_m_max")


def delta_lb_prime(params: SystemParams, rounding: str = HALF_UP) -> float:
    return delta_lb_prime_detail(params, rounding).value


def gap_ratio(params: SystemParams, rounding: str = HALF_UP) -> float:
    require_integer_regime(params)
    up = float(delta_up(params, rounding).delta_total)
    lb = delta_lb_prime(params, rounding)
    if up == 0 and lb == 0:
        return 1.0
    return up / lb


def endpoint_gap(i: int, params: SystemParams) -> float:
    """Ratio delta_up / delta_lb_prime at the left end mu_t*kt = i of an interval.

    Equals 1 + 2 nt^2 / (p (p + 3 nt)) with p = i*nt + mu_r*kr.
    """
    n = params.nt
    p = i * n + float(params.a_units)
    return 1 + 2 * n * n / (p * (p + 3 * n))


@dataclass
class BoundsReport:
    delta_up: float
    f_min: float
    delta_lb_prime: float
    gap: float
    branch_tags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def bounds_report(params: SystemParams, rounding: str = HALF_UP) -> BoundsReport:
    from .ndt import m_opt

    require_integer_regime(params)
    up = float(delta_up(params, rounding).delta_total)
    lb = delta_lb_prime_detail(params, rounding)
    tags = [f"m:{m_opt(params, rounding).branch}", f"lb:{lb.branch}"]
    if lb.alternative is not None and lb.alternative != lb.value:
        tags.append("lb:tie_branches_differ")
    gap = 1.0 if up == 0 and lb.value == 0 else up / lb.value
    return BoundsReport(delta_up=up, f_min=f_min(params), delta_lb_prime=lb.value, gap=gap, branch_tags=tags)
