import json
from collections import Counter
from fractions import Fraction

import pytest

from cachedof.model import InvalidMultiplicity, SystemParams, worst_case_demand
from cachedof.ndt import delta_fronthaul
from cachedof.placement import (
    build_placement,
    empirical_fronthaul_ndt,
    placement_json,
    plan_fronthaul,
    split_library,
)

U = SystemParams.from_units
SMALL = U(3, 1, 3, 1, 1, Fraction(9, 2), f_packets=9)


def test_cell_counts():
    assert split_library(SMALL).cells == 9
    assert split_library(U(3, 1, 3, 3, 0, 1)).cells == 1
    assert split_library(U(4, 1, 2, 2, 1, 1)).cells == 12


def test_packet_is_cached_exactly_where_its_cell_says():
    pl = build_placement(SMALL)
    for i, cache in enumerate(pl.en_cache):
        assert all(i in sub.tau_t for sub in cache)
    for k, cache in enumerate(pl.user_cache):
        assert all(k in sub.tau_r for sub in cache)


def test_cache_budgets_are_met_exactly():
    pl = build_placement(SMALL)
    f = pl.split.f_eff
    for cache in pl.en_cache:
        assert len(cache) == SMALL.mu_t * SMALL.n_files * f
        # EN holds 3 of the 9 cells of every file
        assert len({(s.tau_t, s.tau_r) for s in cache if s.n == 1}) == 3
    for cache in pl.user_cache:
        assert len(cache) == SMALL.mu_r * SMALL.n_files * f


def test_no_en_cache():
    pl = build_placement(U(2, 1, 2, 0, 0, 1, f_packets=2))
    assert all(not c for c in pl.en_cache)


def test_f_is_raised_to_a_valid_multiple():
    split = split_library(U(3, 1, 3, 1, 1, Fraction(9, 2), f_packets=10))
    assert split.adjusted and split.f_eff % (split.cells * split.s * split.q) == 0
    assert split.f_eff >= 10


def test_fronthaul_plan_is_balanced():
    pl = build_placement(SMALL, m=2)
    plan = plan_fronthaul(pl, worst_case_demand(SMALL))
    assert plan.push_counts() == [9, 9, 9]
    assert empirical_fronthaul_ndt(plan, SMALL) == Fraction(2, 9) == delta_fronthaul(2, SMALL)
    for sub in pl.split.subfiles(1):
        ens = plan.availability_of(sub)
        assert len(ens) == 2 and set(sub.tau_t) <= set(ens)


def test_no_pushes_at_cached_multiplicity():
    p = U(3, 1, 3, 1, 1, 1, f_packets=9)
    pl = build_placement(p, m=1)
    plan = plan_fronthaul(pl, worst_case_demand(p))
    assert plan.push_counts() == [0, 0, 0]
    assert empirical_fronthaul_ndt(plan, p) == 0


def test_full_replication_without_en_cache():
    p = U(2, 1, 2, 0, 0, 1, f_packets=2)
    pl = build_placement(p, m=2)
    plan = plan_fronthaul(pl, worst_case_demand(p))
    pushed = [Counter(s.n for s in pushes) for pushes in plan.pushes]
    assert pushed == [Counter({1: 2, 2: 2})] * 2


@pytest.mark.parametrize("kt, nt, kr, t, a, r", [(4, 1, 4, 1, 1, 4), (2, 2, 4, 1, 2, 2), (5, 1, 5, 1, 0, 1), (4, 2, 6, 2, 1, 1)])
def test_fronthaul_load_matches_closed_form(kt, nt, kr, t, a, r):
    p = U(kt, nt, kr, t, a, r)
    for m in range(t, kt + 1):
        pl = build_placement(p, m=m)
        plan = plan_fronthaul(pl, worst_case_demand(p), m)
        assert len(set(plan.push_counts())) == 1
        assert empirical_fronthaul_ndt(plan, p) == delta_fronthaul(m, p)


def test_plan_rejects_bad_multiplicity():
    pl = build_placement(SMALL, m=2)
    with pytest.raises(InvalidMultiplicity):
        plan_fronthaul(pl, worst_case_demand(SMALL), m=4)
    with pytest.raises(InvalidMultiplicity):
        plan_fronthaul(pl, worst_case_demand(SMALL), m=3)


def test_placement_json_roundtrip():
    pl = build_placement(SMALL)
    plan = plan_fronthaul(pl, worst_case_demand(SMALL))
    doc = json.loads(placement_json(pl, plan))
    assert doc["split"]["cells"] == 9
    assert doc["fronthaul"]["push_counts"] == [9, 9, 9]
    assert placement_json(pl, plan) == placement_json(build_placement(SMALL), plan)
