from fractions import Fraction

import numpy as np
import pytest

from cachedof.delivery import (
    RankDeficientChannel,
    build_schedule,
    draw_channels,
    overloaded_batch,
    serving_bound_check,
    simulate,
    transmit_and_receive,
    zf_beam,
    zf_beamformers,
)
from cachedof.model import SystemParams, worst_case_demand
from cachedof.ndt import delta_for_m
from cachedof.placement import build_placement, plan_fronthaul

U = SystemParams.from_units
SMALL = U(3, 1, 3, 1, 1, Fraction(9, 2), f_packets=9)


def schedule_for(p, m=None):
    pl = build_placement(p, m)
    plan = plan_fronthaul(pl, worst_case_demand(p))
    return pl, build_schedule(pl, plan, worst_case_demand(p), p)


def test_channels_are_deterministic():
    a, b = draw_channels(SMALL, 5), draw_channels(SMALL, 5)
    assert np.array_equal(a.h, b.h)
    assert not np.array_equal(a.h, draw_channels(SMALL, 6).h)
    assert a.h.shape == (3, 3, 1) and a.h.size == 9


def test_empty_schedule_when_users_cache_everything():
    p = U(3, 1, 3, 1, 3, 1)
    _, sched = schedule_for(p, m=1)
    assert sched.slot_count == 0
    assert serving_bound_check(sched)


def test_schedule_slot_count():
    _, sched = schedule_for(SMALL)
    assert Fraction(sched.slot_count, sched.f_eff) == Fraction(2, 3)
    assert serving_bound_check(sched)
    assert "slot 0" in sched.trace()


def test_zf_nulls_unintended_users():
    _, sched = schedule_for(U(4, 1, 4, 1, 1, 4, f_packets=32))
    batch = sched.batches[0]
    ch = draw_channels(sched.params, 11, batch.index)
    beams = zf_beamformers(batch, ch)
    for msg, w in zip(batch.messages, beams):
        assert np.linalg.norm(w) == pytest.approx(1)
        for j in batch.zf_targets(msg):
            assert abs(np.vdot(ch.stacked(j, msg.group), w)) < 1e-8


def test_beam_with_nothing_to_null():
    ch = draw_channels(U(1, 1, 1, 1, 0, 1), 0)
    w = zf_beam(ch, (0,), (), (0,))
    assert np.allclose(w, [1.0])


def test_single_message_single_user():
    _, sched = schedule_for(U(1, 1, 1, 1, 0, 1))
    batch = sched.batches[0]
    ch = draw_channels(sched.params, 0, batch.index)
    beams = zf_beamformers(batch, ch)
    sub = batch.messages[0].constituents[0][1]
    coeffs = np.array([[0.5 - 0.25j]])
    y = transmit_and_receive(batch, ch, beams, coeffs, {sub: 2.0 + 1j})
    expected = np.vdot(ch.stacked(0, batch.messages[0].group), beams[0]) * coeffs[0, 0] * (2.0 + 1j)
    assert y[0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "p",
    [
        SMALL,
        U(2, 2, 4, 1, 2, 2, f_packets=12),
        U(4, 1, 4, 1, 1, 4, f_packets=32),
        U(4, 2, 6, 2, 1, 1),
        U(3, 2, 5, 0, 2, 8),
    ],
)
def test_simulation_matches_analytic(p):
    report, *_ = simulate(p, seed=3)
    assert report.all_decoded, report.failures
    assert report.matches_analytic
    assert report.max_zf_residual <= 1e-8


@pytest.mark.parametrize("m", [1, 2, 3])
def test_every_multiplicity_decodes(m):
    report, *_ = simulate(SMALL, seed=1, m=m)
    assert report.all_decoded and report.matches_analytic
    assert report.delta_e_emp + report.delta_f_emp == delta_for_m(m, SMALL)


def test_simulation_is_deterministic():
    a, *_ = simulate(SMALL, seed=4)
    b, *_ = simulate(SMALL, seed=4)
    assert a.to_json() == b.to_json()


def test_noise_smoke():
    report, *_ = simulate(SMALL, seed=2, awgn_snr_db=60.0)
    assert report.matches_analytic


@pytest.mark.parametrize("seed", range(5))
def test_overloaded_slot_is_rejected(seed):
    p = U(3, 1, 5, 1, 1, 1)
    batch = overloaded_batch(p, m=3)
    ch = draw_channels(p, seed)
    try:
        beams = zf_beamformers(batch, ch)
    except RankDeficientChannel:
        return
    worst = 0.0
    for msg, w in zip(batch.messages, beams):
        for j in batch.zf_targets(msg):
            worst = max(worst, abs(np.vdot(ch.stacked(j, msg.group), w)))
    assert worst >= 1e-3
