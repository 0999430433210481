from fractions import Fraction

import pytest

from cachedof.model import (
    InvalidParams,
    NonIntegerRegime,
    SystemParams,
    as_fraction,
    require_integer_regime,
    require_valid,
    validate,
    worst_case_demand,
)


def test_valid_small_instance():
    p = SystemParams(kt=3, nt=1, kr=3, n_files=3, f_packets=9, mu_t=Fraction(1, 3), mu_r=Fraction(1, 3), r=4.5)
    rep = validate(p)
    assert rep.ok and rep.integer_regime
    assert p.t_units == 1 and p.a_units == 1
    assert p.r == Fraction(9, 2)


def test_too_few_files():
    p = SystemParams(kt=3, nt=1, kr=3, n_files=2, f_packets=1, mu_t=0, mu_r=0, r=1)
    rep = validate(p)
    assert not rep.ok
    assert "n_files >= kr" in rep.violations
    with pytest.raises(InvalidParams):
        require_valid(p)


def test_non_integer_regime():
    p = SystemParams(kt=12, nt=4, kr=24, n_files=24, f_packets=1, mu_t=Fraction(3, 10), mu_r=0, r=4)
    rep = validate(p)
    assert rep.ok and not rep.integer_regime
    assert p.t_units == Fraction(18, 5)
    with pytest.raises(NonIntegerRegime):
        require_integer_regime(p)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(mu_t=Fraction(3, 2)), "0 <= mu_t <= 1"),
        (dict(mu_r=-1), "0 <= mu_r <= 1"),
        (dict(r=-1), "r >= 0"),
        (dict(kt=0), "kt >= 1"),
    ],
)
def test_violations(kwargs, message):
    base = dict(kt=2, nt=1, kr=2, n_files=2, f_packets=1, mu_t=0, mu_r=0, r=1)
    base.update(kwargs)
    assert message in validate(SystemParams(**base)).violations


def test_from_units_matches_fractions():
    p = SystemParams.from_units(12, 4, 24, 6, 0, 4)
    assert p.mu_t == Fraction(1, 2) and p.mu_r == 0 and p.n_files == 24


def test_as_fraction_is_exact_for_decimal_strings():
    assert as_fraction("0.25") == Fraction(1, 4)
    assert as_fraction(4.5) == Fraction(9, 2)


@pytest.mark.parametrize("kr, n, expected", [(3, 3, (1, 2, 3)), (1, 5, (1,)), (24, 24, tuple(range(1, 25)))])
def test_worst_case_demand(kr, n, expected):
    p = SystemParams(kt=1, nt=1, kr=kr, n_files=n, f_packets=1, mu_t=0, mu_r=0, r=1)
    assert worst_case_demand(p).d == expected
