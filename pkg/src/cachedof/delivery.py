"""Symbol-level simulation of the one-shot ZF + coded multicast delivery.

Delivery runs in batches.  A batch fixes the EN cache set ``tau_T``, the
availability class, a block of replicas and an active-user set ``S`` with
``|S| = u``; its EN group is the availability set of that class.  The batch
sends every coded message ``T`` (``T`` a subset of ``S`` with
``|T| = mu_r*kr + 1``) in each of ``C(u-1, mu_r*kr)`` slots with fresh
coefficients, so every active user collects a square system in its desired
symbols after removing the cached constituents.

Verification mode is noiseless; an optional AWGN mode only smoke-tests
numerical stability.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import (
    CacheDofError,
    DemandVector,
    InfeasibleDelivery,
    SystemParams,
    require_integer_regime,
    worst_case_demand,
)
from .ndt import delta_edge, delta_fronthaul, m_opt, users_served
from .placement import (
    CachePlacement,
    FronthaulPlan,
    SubfileIndex,
    build_placement,
    empirical_fronthaul_ndt,
    plan_fronthaul,
)

NULL_TOL = 1e-10
ZF_TOL = 1e-8
DECODE_TOL = 1e-6


class RankDeficientChannel(CacheDofError):
    pass


class SingularDecodeSystem(CacheDofError):
    pass


@dataclass(frozen=True)
class ChannelRealization:
    """h[k, i] is the n_T-dimensional channel from EN i to user k."""

    h: np.ndarray
    seed: Tuple[int, ...]

    def stacked(self, k: int, group: Tuple[int, ...]) -> np.ndarray:
        return self.h[k, list(group), :].reshape(-1)


def draw_channels(params: SystemParams, seed, batch: Optional[int] = None) -> ChannelRealization:
    """I.i.d. circularly-symmetric complex normal channels, deterministic in the seed."""
    key = (int(seed),) if batch is None else (int(seed), int(batch))
    rng = np.random.default_rng(list(key))
    shape = (params.kr, params.kt, params.nt)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelRealization(h, key)


@dataclass(frozen=True)
class CodedMessage:
    t_set: Tuple[int, ...]
    constituents: Tuple[Tuple[int, SubfileIndex], ...]
    group: Tuple[int, ...]

    def desired_by(self, k: int) -> Optional[SubfileIndex]:
        for user, sub in self.constituents:
            if user == k:
                return sub
        return None


@dataclass(frozen=True)
class Batch:
    index: int
    tau_t: Tuple[int, ...]
    cls: int
    block: int
    active_users: Tuple[int, ...]
    group: Tuple[int, ...]
    messages: Tuple[CodedMessage, ...]
    repetitions: int

    def zf_targets(self, msg: CodedMessage) -> Tuple[int, ...]:
        return tuple(k for k in self.active_users if k not in msg.t_set)


@dataclass(frozen=True)
class Slot:
    index: int
    batch: int
    repetition: int
    active_users: Tuple[int, ...]
    messages: Tuple[CodedMessage, ...]

    def zf_targets(self, msg: CodedMessage) -> Tuple[int, ...]:
        return tuple(k for k in self.active_users if k not in msg.t_set)


@dataclass
class DeliverySchedule:
    params: SystemParams
    m: int
    u: int
    f_eff: int
    batches: List[Batch]
    coverage: Dict[Tuple[int, SubfileIndex], int] = field(default_factory=dict)
    availability: Dict[SubfileIndex, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def repetitions(self) -> int:
        return self.batches[0].repetitions if self.batches else 0

    @property
    def slots(self) -> List[Slot]:
        out = []
        for b in self.batches:
            for r in range(b.repetitions):
                out.append(Slot(len(out), b.index, r, b.active_users, b.messages))
        return out

    @property
    def slot_count(self) -> int:
        return sum(b.repetitions for b in self.batches)

    def trace(self) -> str:
        """Human-readable slot trace."""
        lines = []
        for slot in self.slots:
            lines.append(f"slot {slot.index} batch {slot.batch} rep {slot.repetition} S={list(slot.active_users)}")
            for msg in slot.messages:
                parts = ", ".join(
                    f"u{k}<-W{s.n}[T{list(s.tau_t)} R{list(s.tau_r)} #{s.rep}]" for k, s in msg.constituents
                )
                lines.append(f"  T={list(msg.t_set)} g={list(msg.group)} : {parts}")
        return "\n".join(lines)


def _superset_index(t_set: Tuple[int, ...], s_set: Tuple[int, ...], kr: int, u: int) -> int:
    rest = [k for k in range(kr) if k not in t_set]
    extra = tuple(k for k in s_set if k not in t_set)
    for idx, comb in enumerate(itertools.combinations(rest, u - len(t_set))):
        if comb == extra:
            return idx
    raise ValueError("S is not a superset of T")  # pragma: no cover


def build_schedule(
    placement: CachePlacement,
    plan: FronthaulPlan,
    demand: DemandVector,
    params: SystemParams,
) -> DeliverySchedule:
    require_integer_regime(params)
    split = placement.split
    m, a, kr = plan.m, int(params.a_units), params.kr
    if params.mu_r == 1:
        return DeliverySchedule(params, m, 0, split.f_eff, [])
    u = users_served(m, a, params)
    if u <= a:
        raise InfeasibleDelivery(f"m={m} serves no user beyond the {a} cached ones")
    reps = math.comb(u - 1, a)
    blocks = split.reps_per_cell // (split.q * split.s)
    batches: List[Batch] = []
    coverage: Dict[Tuple[int, SubfileIndex], int] = {}
    availability: Dict[SubfileIndex, Tuple[int, ...]] = {}
    for tau_t in split.tsets:
        for block in range(blocks):
            for cls in range(split.q):
                avail = plan.class_sets[(tau_t, cls)]
                group = avail[:m] if len(avail) > m else avail
                for s_set in itertools.combinations(range(kr), u):
                    msgs = []
                    for t_set in itertools.combinations(s_set, a + 1):
                        s_idx = _superset_index(t_set, s_set, kr, u)
                        rep = (block * split.q + cls) * split.s + s_idx
                        cons = []
                        for k in t_set:
                            tau_r = tuple(j for j in t_set if j != k)
                            sub = SubfileIndex(demand[k], tau_t, tau_r, rep)
                            if not set(group) <= set(plan.availability_of(sub)):
                                raise InfeasibleDelivery(f"{sub} is not available at group {group}")
                            key = (k, sub)
                            if key in coverage:
                                raise InfeasibleDelivery(f"duplicate delivery of {sub} to user {k}")
                            coverage[key] = len(batches)
                            availability[sub] = plan.availability_of(sub)
                            cons.append((k, sub))
                        msgs.append(CodedMessage(t_set, tuple(cons), group))
                    batches.append(Batch(len(batches), tau_t, cls, block, s_set, group, tuple(msgs), reps))
    schedule = DeliverySchedule(params, m, u, split.f_eff, batches, coverage, availability)
    missing = needed_deliveries(placement, demand) - set(coverage)
    if missing:
        raise InfeasibleDelivery(f"{len(missing)} needed deliveries not scheduled")
    return schedule


def needed_deliveries(placement: CachePlacement, demand: DemandVector) -> set:
    """Every (user, subfile) pair the user requests but does not cache."""
    out = set()
    for k, n in enumerate(demand.d):
        for sub in placement.split.subfiles(n):
            if k not in sub.tau_r:
                out.add((k, sub))
    return out


def zf_beam(
    channels: ChannelRealization,
    group: Tuple[int, ...],
    targets: Tuple[int, ...],
    desired: Tuple[int, ...],
) -> np.ndarray:
    """Unit-norm beam over the group antennas orthogonal to every target channel."""
    dim = channels.h.shape[2] * len(group)
    if not targets:
        return np.ones(dim, dtype=complex) / np.sqrt(dim)
    g = np.array([channels.stacked(j, group).conj() for j in targets])  # rows h_j^H
    _, sv, vh = np.linalg.svd(g)
    rank = int((sv > NULL_TOL * sv[0]).sum()) if sv.size else 0
    null = vh[rank:].conj().T  # columns span {w : g w = 0}
    if null.shape[1] == 0:
        raise RankDeficientChannel(
            f"{len(targets)} targets leave no null space in {dim} antenna dimensions"
        )
    aim = sum(channels.stacked(k, group) for k in desired)
    w = null @ (null.conj().T @ aim)
    norm = np.linalg.norm(w)
    if norm < NULL_TOL:  # desired channels orthogonal to the null space; pick any null vector
        w, norm = null[:, 0], 1.0
    return w / norm


def zf_beamformers(batch, channels: ChannelRealization) -> List[np.ndarray]:
    """One beam per message of a batch or slot."""
    return [zf_beam(channels, msg.group, batch.zf_targets(msg), msg.t_set) for msg in batch.messages]


def effective_gain(channels: ChannelRealization, k: int, group, beam: np.ndarray) -> complex:
    """h_k^H w restricted to the group antennas."""
    return complex(np.vdot(channels.stacked(k, group), beam))


def transmit_and_receive(
    batch,
    channels: ChannelRealization,
    beams: List[np.ndarray],
    coeffs: np.ndarray,
    symbols: Dict[SubfileIndex, complex],
    users: Optional[Tuple[int, ...]] = None,
) -> Dict[int, complex]:
    """Noiseless received samples y_k = sum_T (h_k^H w_T) * sum_k' coeff * s for one slot.

    ``coeffs[msg, pos]`` multiplies the ``pos``-th constituent of message ``msg``.
    """
    users = batch.active_users if users is None else users
    payload = [
        sum(coeffs[i, pos] * symbols[sub] for pos, (_, sub) in enumerate(msg.constituents))
        for i, msg in enumerate(batch.messages)
    ]
    out = {}
    for k in users:
        out[k] = sum(
            effective_gain(channels, k, msg.group, beams[i]) * payload[i] for i, msg in enumerate(batch.messages)
        )
    return out


@dataclass
class SimReport:
    seed: int
    m: int
    u: int
    f_requested: int
    f_eff: int
    slots_used: int
    delta_e_emp: Fraction
    delta_f_emp: Fraction
    delta_e: Fraction
    delta_f: Fraction
    decode_ok: List[bool]
    max_zf_residual: float
    min_desired_gain: float
    max_condition: float
    max_decode_error: float
    failures: List[str] = field(default_factory=list)
    awgn_snr_db: Optional[float] = None

    @property
    def all_decoded(self) -> bool:
        return all(self.decode_ok)

    @property
    def matches_analytic(self) -> bool:
        return self.delta_e_emp == self.delta_e and self.delta_f_emp == self.delta_f

    def to_dict(self) -> dict:
        def rat(x):
            return {"value": float(x), "exact": str(x)}

        return {
            "seed": self.seed,
            "m": self.m,
            "u": self.u,
            "f_requested": self.f_requested,
            "f_eff": self.f_eff,
            "slots_used": self.slots_used,
            "delta_e_emp": rat(self.delta_e_emp),
            "delta_f_emp": rat(self.delta_f_emp),
            "delta_e": rat(self.delta_e),
            "delta_f": rat(self.delta_f),
            "decode_ok": self.all_decoded,
            "decode_ok_per_user": self.decode_ok,
            "matches_analytic": self.matches_analytic,
            "max_zf_residual": self.max_zf_residual,
            "min_desired_gain": self.min_desired_gain,
            "max_condition": self.max_condition,
            "max_decode_error": self.max_decode_error,
            "failures": self.failures,
            "awgn_snr_db": self.awgn_snr_db,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def decode_users(
    schedule: DeliverySchedule,
    placement: CachePlacement,
    seed: int,
    awgn_snr_db: Optional[float] = None,
) -> dict:
    """Run every batch, cancel cached constituents and solve each user's system."""
    params = schedule.params
    # unit-magnitude ground-truth symbols for every packet of every requested file
    sym_rng = np.random.default_rng([int(seed), 1])
    symbols = {}
    for n in sorted({s.n for _, s in schedule.coverage}):
        for sub in placement.split.subfiles(n):
            symbols[sub] = complex(np.exp(2j * np.pi * sym_rng.random()))

    ok = {k: True for k in range(params.kr)}
    failures: List[str] = []
    max_res = 0.0
    min_gain = math.inf
    max_cond = 0.0
    max_err = 0.0
    noise_std = None if awgn_snr_db is None else 10 ** (-awgn_snr_db / 20)

    for batch in schedule.batches:
        channels = draw_channels(params, seed, batch.index)
        beams = zf_beamformers(batch, channels)
        for i, msg in enumerate(batch.messages):
            for j in batch.zf_targets(msg):
                hj = channels.stacked(j, msg.group)
                res = abs(np.vdot(hj, beams[i])) / (np.linalg.norm(hj) * np.linalg.norm(beams[i]))
                max_res = max(max_res, res)
            for k in msg.t_set:
                min_gain = min(min_gain, abs(effective_gain(channels, k, msg.group, beams[i])))
        coef_rng = np.random.default_rng([int(seed), 2, batch.index])
        width = max(len(msg.constituents) for msg in batch.messages)
        shape = (batch.repetitions, len(batch.messages), width)
        coeffs = coef_rng.standard_normal(shape) + 1j * coef_rng.standard_normal(shape)
        noise_rng = np.random.default_rng([int(seed), 3, batch.index])
        received = []
        for r in range(batch.repetitions):
            y = transmit_and_receive(batch, channels, beams, coeffs[r], symbols)
            if noise_std is not None:
                for k in y:
                    y[k] += noise_std * (noise_rng.standard_normal() + 1j * noise_rng.standard_normal()) / np.sqrt(2)
            received.append(y)

        for k in batch.active_users:
            wanted = [(i, msg) for i, msg in enumerate(batch.messages) if k in msg.t_set]
            unknowns = [msg.desired_by(k) for _, msg in wanted]
            system = np.zeros((batch.repetitions, len(unknowns)), dtype=complex)
            rhs = np.zeros(batch.repetitions, dtype=complex)
            for r in range(batch.repetitions):
                rhs[r] = received[r][k]
                for col, (i, msg) in enumerate(wanted):
                    gain = effective_gain(channels, k, msg.group, beams[i])
                    for pos, (user, sub) in enumerate(msg.constituents):
                        if user == k:
                            system[r, col] = gain * coeffs[r, i, pos]
                        else:
                            if not placement.user_has(k, sub):
                                raise InfeasibleDelivery(f"user {k} cannot cancel {sub}")
                            rhs[r] -= gain * coeffs[r, i, pos] * symbols[sub]
            try:
                cond = float(np.linalg.cond(system))
                est = np.linalg.solve(system, rhs)
            except np.linalg.LinAlgError as exc:
                ok[k] = False
                failures.append(f"singular decode system: user {k} batch {batch.index} seed {seed} ({exc})")
                continue
            max_cond = max(max_cond, cond)
            truth = np.array([symbols[s] for s in unknowns])
            err = float(np.max(np.abs(est - truth)))
            max_err = max(max_err, err)
            tol = DECODE_TOL if noise_std is None else 0.5
            if not err <= tol:
                ok[k] = False
                failures.append(f"decode error {err:.3g}: user {k} batch {batch.index} seed {seed}")
    return {
        "decode_ok": [ok[k] for k in range(params.kr)],
        "failures": failures,
        "max_zf_residual": float(max_res),
        "min_desired_gain": float(min_gain if min_gain != math.inf else 0.0),
        "max_condition": max_cond,
        "max_decode_error": max_err,
    }


def serving_bound_check(schedule: DeliverySchedule) -> bool:
    """Every slot serves at most min over delivered packets of n_T |A| + |tau_R| users."""
    nt = schedule.params.nt
    for batch in schedule.batches:
        limit = min(
            (nt * len(schedule.availability.get(sub, sub.tau_t)) + len(sub.tau_r)
             for msg in batch.messages for _, sub in msg.constituents),
            default=math.inf,
        )
        if len(batch.active_users) > limit:
            return False
    return True


def overloaded_batch(params: SystemParams, m: int, group: Optional[Tuple[int, ...]] = None) -> Batch:
    """A batch serving n_T m + mu_r*kr + 1 users, one more than ZF can support."""
    a = int(params.a_units)
    u = params.nt * m + a + 1
    if u > params.kr:
        raise InfeasibleDelivery(f"need K_R >= {u} to overload the slot")
    group = tuple(range(m)) if group is None else group
    s_set = tuple(range(u))
    msgs = []
    for t_set in itertools.combinations(s_set, a + 1):
        cons = tuple(
            (k, SubfileIndex(k + 1, group, tuple(j for j in t_set if j != k), 0)) for k in t_set
        )
        msgs.append(CodedMessage(t_set, cons, group))
    return Batch(0, group, 0, 0, s_set, group, tuple(msgs), math.comb(u - 1, a))


def simulate(
    params: SystemParams,
    seed: int = 0,
    m: Optional[int] = None,
    awgn_snr_db: Optional[float] = None,
) -> Tuple[SimReport, CachePlacement, FronthaulPlan, DeliverySchedule]:
    """Placement -> fronthaul -> schedule -> channels -> decoding for the worst-case demand."""
    require_integer_regime(params)
    if m is None:
        m = m_opt(params).m_final
    demand = worst_case_demand(params)
    placement = build_placement(params, m)
    plan = plan_fronthaul(placement, demand, m)
    schedule = build_schedule(placement, plan, demand, params)
    stats = decode_users(schedule, placement, seed, awgn_snr_db) if schedule.batches else {
        "decode_ok": [True] * params.kr,
        "failures": [],
        "max_zf_residual": 0.0,
        "min_desired_gain": 0.0,
        "max_condition": 0.0,
        "max_decode_error": 0.0,
    }
    f_eff = placement.split.f_eff
    report = SimReport(
        seed=seed,
        m=m,
        u=schedule.u,
        f_requested=params.f_packets,
        f_eff=f_eff,
        slots_used=schedule.slot_count,
        delta_e_emp=Fraction(schedule.slot_count, f_eff),
        delta_f_emp=empirical_fronthaul_ndt(plan, params),
        delta_e=delta_edge(m, params),
        delta_f=delta_fronthaul(m, params),
        awgn_snr_db=awgn_snr_db,
        **stats,
    )
    return report, placement, plan, schedule
