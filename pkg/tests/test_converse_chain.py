from fractions import Fraction

import numpy as np
import pytest

from cachedof.converse_chain import (
    ConverseAllocation,
    InfeasibleAllocation,
    all_demands,
    averaged_objective_bound,
    check_constraints,
    sample_feasible_allocation,
    verify_converse_chain,
)
from cachedof.model import Infeasible, InvalidParams, SystemParams


def full_en_cache():
    return SystemParams(kt=2, nt=1, kr=2, n_files=2, f_packets=2, mu_t=1, mu_r=0, r=1)


def test_all_demands_are_distinct_permutations():
    assert all_demands(3, 2) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]


def test_full_en_cache_point():
    p = full_en_cache()
    alloc = sample_feasible_allocation(p, steps=0)
    full = alloc.tsets.index(frozenset({0, 1}))
    empty_r = alloc.rsets.index(frozenset())
    assert (alloc.c[:, full, empty_r] == 2).all()
    assert alloc.c.sum() == 4 and not alloc.f.any()
    rep = averaged_objective_bound(alloc)
    assert rep.x == 2
    assert rep.f_x == pytest.approx(2 * 1 / (1 * 2))
    assert float(rep.objective) == pytest.approx(rep.f_x, abs=1e-12)
    assert verify_converse_chain(alloc)


def test_full_user_cache_is_tight():
    p = SystemParams(kt=2, nt=1, kr=2, n_files=2, f_packets=2, mu_t=Fraction(1, 2), mu_r=1, r=1)
    alloc = sample_feasible_allocation(p, steps=0)
    every = alloc.rsets.index(frozenset({0, 1}))
    assert alloc.c[:, :, every].sum() == alloc.c.sum()
    assert check_constraints(alloc).ok


def test_perturbed_point_is_checked_exactly():
    p = SystemParams(kt=2, nt=1, kr=2, n_files=2, f_packets=4, mu_t=Fraction(1, 2), mu_r=Fraction(1, 2), r=2)
    alloc = sample_feasible_allocation(p, seed=7, steps=60)
    assert check_constraints(alloc).ok
    rep = averaged_objective_bound(alloc)
    assert rep.sum_b == rep.nf == 8
    assert rep.cs_slack >= 0
    assert rep.ok


@pytest.mark.parametrize("seed", range(10))
def test_chain_holds_on_random_points(seed):
    p = SystemParams(kt=3, nt=1, kr=3, n_files=3, f_packets=9, mu_t=Fraction(1, 3), mu_r=Fraction(1, 3), r=Fraction(9, 2))
    rep = averaged_objective_bound(sample_feasible_allocation(p, seed=seed))
    assert rep.ok, [k for k, v in rep.steps.items() if not v]
    assert isinstance(rep.sum_b, Fraction) and rep.sum_b == rep.nf
    assert float(rep.objective) >= rep.f_x - 1e-9


def test_corrupted_allocation_is_refused():
    p = full_en_cache()
    alloc = sample_feasible_allocation(p, steps=0)
    alloc.c[0] = 0  # file 0 no longer stored anywhere
    report = check_constraints(alloc)
    assert not report.ok and "completeness" in report.violations
    with pytest.raises(InfeasibleAllocation):
        verify_converse_chain(alloc)


def test_literal_program_admits_a_point_below_f():
    # One user, two files: the user keeps the requested file in its cache after the
    # demand is known.  The program without user-profile constraints accepts it.
    p = SystemParams(kt=1, nt=1, kr=1, n_files=2, f_packets=2, mu_t=0, mu_r=Fraction(1, 2), r=1)
    alloc = ConverseAllocation.empty(p)
    t1 = alloc.tsets.index(frozenset({0}))
    r1 = alloc.rsets.index(frozenset({0}))
    for d, dem in enumerate(alloc.demands):
        alloc.f[d, dem[0], t1, r1] = 2
    assert check_constraints(alloc, user_profile=False).ok
    assert not check_constraints(alloc).ok
    rep = averaged_objective_bound(alloc, require_feasible=False)
    assert rep.objective == Fraction(5, 4)
    assert float(rep.objective) < rep.f_x


def test_sampler_limits():
    with pytest.raises(InvalidParams):
        sample_feasible_allocation(SystemParams(kt=4, nt=1, kr=2, n_files=2, f_packets=4, mu_t=0, mu_r=0, r=1))
    with pytest.raises(Infeasible):
        sample_feasible_allocation(SystemParams(kt=2, nt=1, kr=2, n_files=2, f_packets=2, mu_t=0, mu_r=0, r=0))
    with pytest.raises(InvalidParams):
        sample_feasible_allocation(full_en_cache(), demand_set=[(0, 1)])


def test_sampler_is_deterministic():
    p = SystemParams(kt=2, nt=1, kr=2, n_files=3, f_packets=4, mu_t=Fraction(1, 2), mu_r=0, r=1)
    a, b = sample_feasible_allocation(p, seed=3), sample_feasible_allocation(p, seed=3)
    assert np.array_equal(a.c, b.c) and np.array_equal(a.f, b.f)
