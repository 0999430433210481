"""Instance definition, validation and demand generation.

All cache fractions and the fronthaul exponent are stored as exact
``Fraction`` values so that integer-regime checks and NDT identities can be
evaluated without rounding.  File size ``L`` never appears: every latency in
this package is in NDT units.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from numbers import Rational, Real
from typing import Tuple


class CacheDofError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParams(CacheDofError):
    pass


class NonIntegerRegime(CacheDofError):
    pass


class DegenerateAllCached(CacheDofError):
    pass


class InfeasibleFronthaul(CacheDofError):
    pass


class InfeasibleDelivery(CacheDofError):
    pass


class InvalidMultiplicity(CacheDofError):
    pass


class Infeasible(CacheDofError):
    pass


def as_fraction(value) -> Fraction:
    """Convert ints, Fractions, decimal strings and floats to a Fraction.

    Floats are snapped to the nearest fraction with a denominator below 1e9,
    which turns ``1/3`` computed in floating point back into ``Fraction(1, 3)``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, Real):
        return Fraction(float(value)).limit_denominator(10**9)
    raise TypeError(f"cannot interpret {value!r} as a rational number")


@dataclass(frozen=True)
class SystemParams:
    """One cache-aided cloud-RAN instance.

    ``mu_t`` and ``mu_r`` are cache sizes as fractions of the library,
    ``r`` is the fronthaul rate exponent (C_F = r log SNR).
    """

    kt: int
    nt: int
    kr: int
    n_files: int
    f_packets: int
    mu_t: Fraction
    mu_r: Fraction
    r: Fraction

    def __post_init__(self):
        for name in ("mu_t", "mu_r", "r"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        for name in ("kt", "nt", "kr", "n_files", "f_packets"):
            value = getattr(self, name)
            if isinstance(value, float) and value.is_integer():
                object.__setattr__(self, name, int(value))

    @classmethod
    def from_units(cls, kt, nt, kr, t_units, a_units, r, n_files=None, f_packets=1):
        """Build from cache sizes in units (mu_t*kt, mu_r*kr) instead of fractions."""
        return cls(
            kt=kt,
            nt=nt,
            kr=kr,
            n_files=kr if n_files is None else n_files,
            f_packets=f_packets,
            mu_t=as_fraction(t_units) / kt,
            mu_r=as_fraction(a_units) / kr,
            r=r,
        )

    @property
    def t_units(self) -> Fraction:
        """Transmit-side cached multiplicity mu_t * kt."""
        return self.mu_t * self.kt

    @property
    def a_units(self) -> Fraction:
        """Receive-side multiplicity mu_r * kr."""
        return self.mu_r * self.kr

    @property
    def integer_regime(self) -> bool:
        return self.t_units.denominator == 1 and self.a_units.denominator == 1

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("mu_t", "mu_r", "r"):
            d[key] = str(d[key])
        return d


@dataclass(frozen=True)
class DemandVector:
    d: Tuple[int, ...]

    def __iter__(self):
        return iter(self.d)

    def __len__(self):
        return len(self.d)

    def __getitem__(self, k):
        return self.d[k]


@dataclass(frozen=True)
class NdtBreakdown:
    """Fronthaul and edge NDT plus the transmit-side multiplicity used."""

    delta_f: Fraction
    delta_e: Fraction
    m_used: int
    delta_total: Fraction = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta_total", self.delta_f + self.delta_e)

    def to_dict(self) -> dict:
        return {
            "m": self.m_used,
            "delta_f": float(self.delta_f),
            "delta_e": float(self.delta_e),
            "delta_up": float(self.delta_total),
        }


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: Tuple[str, ...]
    integer_regime: bool


def validate(params: SystemParams) -> ValidationReport:
    violations = []
    counts = {
        "kt": params.kt,
        "nt": params.nt,
        "kr": params.kr,
        "n_files": params.n_files,
        "f_packets": params.f_packets,
    }
    for name, value in counts.items():
        if not isinstance(value, int) or isinstance(value, bool):
            violations.append(f"{name} must be an integer")
        elif value < 1:
            violations.append(f"{name} >= 1")
    if not violations and params.n_files < params.kr:
        violations.append("n_files >= kr")
    if not 0 <= params.mu_t <= 1:
        violations.append("0 <= mu_t <= 1")
    if not 0 <= params.mu_r <= 1:
        violations.append("0 <= mu_r <= 1")
    if params.r < 0:
        violations.append("r >= 0")
    return ValidationReport(
        ok=not violations,
        violations=tuple(violations),
        integer_regime=params.integer_regime,
    )


def require_valid(params: SystemParams) -> None:
    report = validate(params)
    if not report.ok:
        raise InvalidParams("; ".join(report.violations))


def require_integer_regime(params: SystemParams) -> None:
    require_valid(params)
    if not params.integer_regime:
        raise NonIntegerRegime(
            f"mu_t*kt={params.t_units} and mu_r*kr={params.a_units} must both be integers"
        )


def worst_case_demand(params: SystemParams) -> DemandVector:
    """Distinct requests (1, 2, ..., kr); the stress case for every bound."""
    if params.n_files < params.kr:
        raise InvalidParams("n_files >= kr")
    return DemandVector(tuple(range(1, params.kr + 1)))
