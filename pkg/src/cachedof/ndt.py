"""Achievable NDT: multiplicity selection, fronthaul and edge latency.

Every decision (thresholds, rounding, branch selection) is taken in exact
rational arithmetic; only the stationary point ``m_0`` itself is reported as a
float.  NDT values are returned as ``Fraction``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

from .model import (
    DegenerateAllCached,
    InfeasibleDelivery,
    InfeasibleFronthaul,
    NdtBreakdown,
    NonIntegerRegime,
    SystemParams,
    require_integer_regime,
    require_valid,
)

HALF_UP = "half_up"
HALF_DOWN = "half_down"


@dataclass(frozen=True)
class MultiplicityDecision:
    m_max: int
    r_th: Optional[Fraction]
    m_0: float
    m_zero_cache: int
    m_final: int
    branch: str
    flags: Tuple[str, ...] = ()


def _all_cached(params: SystemParams) -> bool:
    return params.mu_r == 1


def m_max(params: SystemParams) -> int:
    if _all_cached(params):
        return 0
    need = (params.kr - params.a_units) / params.nt
    return min(params.kt, math.ceil(need))


def r_threshold(params: SystemParams) -> Fraction:
    if _all_cached(params):
        raise DegenerateAllCached("r_th undefined for mu_r = 1")
    a = params.a_units
    return Fraction(params.nt) / (params.kt * (1 - params.mu_r)) * (m_max(params) + a / params.nt) ** 2


def _sqrt_arg(params: SystemParams) -> Fraction:
    return params.kt * (1 - params.mu_r) * params.r / params.nt


def m_stationary(params: SystemParams) -> float:
    """Continuous minimiser of the mu_t = 0 total NDT; 0.0 when r = 0."""
    if _all_cached(params):
        raise DegenerateAllCached("m_0 undefined for mu_r = 1")
    if params.r == 0:
        return 0.0
    return math.sqrt(_sqrt_arg(params)) - float(params.a_units / params.nt)


def _floor_sqrt_minus(x: Fraction, y: Fraction) -> int:
    """Exact floor(sqrt(x) - y) for rational x >= 0 and y."""

    def below(k):  # k <= sqrt(x) - y
        s = k + y
        return s <= 0 or s * s <= x

    k = math.floor(math.sqrt(x) - y)
    while not below(k):
        k -= 1
    while below(k + 1):
        k += 1
    return k


def _ceil_sqrt_minus(x: Fraction, y: Fraction) -> int:
    """Exact ceil(sqrt(x) - y)."""

    def above(k):  # k >= sqrt(x) - y
        s = k + y
        return s >= 0 and s * s >= x

    k = math.ceil(math.sqrt(x) - y)
    while not above(k):
        k += 1
    while above(k - 1):
        k -= 1
    return k


def rounded_m0(params: SystemParams, rounding: str = HALF_UP) -> int:
    """Nearest integer to m_0, ties broken by ``rounding``."""
    x = _sqrt_arg(params)
    shift = params.a_units / params.nt
    if rounding == HALF_UP:
        return _floor_sqrt_minus(x, shift - Fraction(1, 2))
    if rounding == HALF_DOWN:
        return _ceil_sqrt_minus(x, shift + Fraction(1, 2))
    raise ValueError(f"unknown rounding {rounding!r}")


def m_zero_en_cache(params: SystemParams, rounding: str = HALF_UP) -> int:
    """Integer multiplicity m(r, mu_r) chosen as if ENs cached nothing."""
    if _all_cached(params):
        return 0
    mm = m_max(params)
    if params.r >= r_threshold(params):
        return mm
    return min(max(rounded_m0(params, rounding), 1), mm)


def m_opt(params: SystemParams, rounding: str = HALF_UP) -> MultiplicityDecision:
    require_valid(params)
    t = params.t_units
    if t.denominator != 1:
        raise NonIntegerRegime("m_opt needs integer mu_t*kt; use delta_up_memshare")
    t = int(t)
    if _all_cached(params):
        return MultiplicityDecision(0, None, 0.0, 0, 0, "all_cached", ("degenerate_all_cached",))
    mm = m_max(params)
    m_r = m_zero_en_cache(params, rounding)
    flags = []
    if t < m_r:
        m, branch = m_r, "fronthaul"
    elif t <= mm:
        m, branch = t, "cache_only"
    else:
        m, branch = mm, "m_max"
    if params.r == 0:
        flags.append("no_fronthaul")
        if m > t:
            if t == 0:
                raise InfeasibleDelivery("r = 0 and no EN cache: nothing can reach the users")
            m = t
    return MultiplicityDecision(
        m_max=mm,
        r_th=r_threshold(params),
        m_0=m_stationary(params),
        m_zero_cache=m_r,
        m_final=m,
        branch=branch,
        flags=tuple(flags),
    )


def users_served(m_t: int, m_r, params: SystemParams) -> int:
    """Users served per slot with transmit/receive multiplicities m_t, m_r."""
    return min(params.kr, params.nt * m_t + int(m_r))


def delta_fronthaul(m: int, params: SystemParams) -> Fraction:
    extra = max(Fraction(m) - params.t_units, 0)
    if extra == 0:
        return Fraction(0)
    if params.r == 0:
        raise InfeasibleFronthaul(f"m={m} exceeds cached multiplicity {params.t_units} with r = 0")
    return params.kr * extra / (params.kt * params.r)


def delta_edge(m: int, params: SystemParams) -> Fraction:
    if _all_cached(params):
        return Fraction(0)
    u = users_served(m, params.a_units, params)
    if u < 1:
        raise InfeasibleDelivery("no user can be served (m = 0 and mu_r*kr = 0)")
    return (params.kr - params.a_units) / u


def delta_for_m(m: int, params: SystemParams) -> Fraction:
    """Total NDT of the scheme run at multiplicity m."""
    return delta_fronthaul(m, params) + delta_edge(m, params)


def delta_up(params: SystemParams, rounding: str = HALF_UP) -> NdtBreakdown:
    require_integer_regime(params)
    m = m_opt(params, rounding).m_final
    return NdtBreakdown(delta_fronthaul(m, params), delta_edge(m, params), m)


def _corners(units: Fraction):
    lo, hi = math.floor(units), math.ceil(units)
    if lo == hi:
        return [(lo, Fraction(1))]
    w_lo = hi - units
    return [(lo, w_lo), (hi, 1 - w_lo)]


def memshare_breakdown(params: SystemParams, rounding: str = HALF_UP) -> Tuple[Fraction, Fraction]:
    """(delta_F, delta_E) of the memory-shared scheme for fractional cache sizes.

    Receive and transmit sides are interpolated independently between the
    neighbouring integer cache sizes; integer inputs reproduce delta_up.
    """
    require_valid(params)
    d_f = d_e = Fraction(0)
    for a, wa in _corners(params.a_units):
        for t, wt in _corners(params.t_units):
            corner = params.with_(mu_r=Fraction(a, params.kr), mu_t=Fraction(t, params.kt))
            part = delta_up(corner, rounding)
            d_f += wa * wt * part.delta_f
            d_e += wa * wt * part.delta_e
    return d_f, d_e


def delta_up_memshare(params: SystemParams, rounding: str = HALF_UP) -> Fraction:
    """Achievable NDT for fractional cache sizes by memory sharing."""
    d_f, d_e = memshare_breakdown(params, rounding)
    return d_f + d_e
