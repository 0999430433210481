"""Cache placement and fronthaul planning.

Each file is split evenly over the cells ``(tau_T, tau_R)`` with
``|tau_T| = mu_t*kt`` and ``|tau_R| = mu_r*kr``.  Inside a cell, packets are
further indexed by ``rep``; the replica index encodes

* which availability class the packet belongs to (all packets of one
  ``(tau_T, class)`` pair are pushed to the same extra ENs), and
* which active-user set ``S`` will deliver it (see ``delivery``).

``F`` is raised to the least multiple of ``cells * s * q`` so both the
fronthaul load and the slot count come out exactly as in the closed forms.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .model import (
    DemandVector,
    InfeasibleFronthaul,
    InvalidMultiplicity,
    SystemParams,
    require_integer_regime,
)
from .ndt import m_opt, users_served


@dataclass(frozen=True, order=True)
class SubfileIndex:
    n: int
    tau_t: Tuple[int, ...]
    tau_r: Tuple[int, ...]
    rep: int

    def to_list(self) -> list:
        return [self.n, list(self.tau_t), list(self.tau_r), self.rep]


def _comb_sets(k: int, size: int) -> List[Tuple[int, ...]]:
    return list(itertools.combinations(range(k), size))


def delivery_split(params: SystemParams, m: int) -> int:
    """Number of active-user sets that share the delivery of one packet."""
    a = int(params.a_units)
    if a >= params.kr:
        return 1
    u = users_served(m, a, params)
    return math.comb(params.kr - a - 1, u - a - 1) if u > a else 1


def availability_classes(params: SystemParams, m: int) -> int:
    """Least q making the fronthaul load exactly balanced over the ENs."""
    t = int(params.t_units)
    if m <= t:
        return 1
    total = math.comb(params.kt, t) * (m - t)
    return params.kt // math.gcd(params.kt, total)


@dataclass(frozen=True)
class LibrarySplit:
    params: SystemParams
    m: int
    f_requested: int
    f_eff: int
    cells: int
    s: int
    q: int
    tsets: Tuple[Tuple[int, ...], ...]
    rsets: Tuple[Tuple[int, ...], ...]

    @property
    def adjusted(self) -> bool:
        return self.f_eff != self.f_requested

    @property
    def reps_per_cell(self) -> int:
        return self.f_eff // self.cells

    def rep_fields(self, rep: int) -> Tuple[int, int, int]:
        """rep -> (block, availability class, delivery-set index)."""
        block, rest = divmod(rep, self.q * self.s)
        cls, s_idx = divmod(rest, self.s)
        return block, cls, s_idx

    def subfiles(self, n: int) -> List[SubfileIndex]:
        return [
            SubfileIndex(n, tt, tr, rep)
            for tt in self.tsets
            for tr in self.rsets
            for rep in range(self.reps_per_cell)
        ]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "f_requested": self.f_requested,
            "f_eff": self.f_eff,
            "f_adjusted": self.adjusted,
            "cells": self.cells,
            "delivery_split": self.s,
            "availability_classes": self.q,
        }


def split_library(params: SystemParams, m: Optional[int] = None) -> LibrarySplit:
    """Cell structure of every file; F is raised to the least valid multiple."""
    require_integer_regime(params)
    if m is None:
        m = m_opt(params).m_final
    t, a = int(params.t_units), int(params.a_units)
    tsets = tuple(_comb_sets(params.kt, t))
    rsets = tuple(_comb_sets(params.kr, a))
    cells = len(tsets) * len(rsets)
    s = delivery_split(params, m)
    q = availability_classes(params, m)
    unit = cells * s * q
    f_eff = -(-params.f_packets // unit) * unit
    return LibrarySplit(params, m, params.f_packets, f_eff, cells, s, q, tsets, rsets)


@dataclass
class CachePlacement:
    params: SystemParams
    split: LibrarySplit
    en_cache: List[List[SubfileIndex]]
    user_cache: List[List[SubfileIndex]]

    def user_has(self, k: int, sub: SubfileIndex) -> bool:
        return k in sub.tau_r

    def en_has(self, i: int, sub: SubfileIndex) -> bool:
        return i in sub.tau_t

    def to_dict(self) -> dict:
        return {
            "split": self.split.to_dict(),
            "en_cache": [[s.to_list() for s in c] for c in self.en_cache],
            "user_cache": [[s.to_list() for s in c] for c in self.user_cache],
        }


def build_placement(params: SystemParams, m: Optional[int] = None) -> CachePlacement:
    split = split_library(params, m)
    en_cache = [[] for _ in range(params.kt)]
    user_cache = [[] for _ in range(params.kr)]
    for n in range(1, params.n_files + 1):
        for sub in split.subfiles(n):
            for i in sub.tau_t:
                en_cache[i].append(sub)
            for k in sub.tau_r:
                user_cache[k].append(sub)
    return CachePlacement(params, split, en_cache, user_cache)


@dataclass
class FronthaulPlan:
    m: int
    demand: DemandVector
    f_eff: int
    pushes: List[List[SubfileIndex]]
    class_sets: Dict[Tuple[Tuple[int, ...], int], Tuple[int, ...]] = field(default_factory=dict)
    split: Optional[LibrarySplit] = None

    def availability_of(self, sub: SubfileIndex) -> Tuple[int, ...]:
        """EN set holding ``sub`` after the fronthaul phase."""
        if self.split is None or sub.n not in self.demand.d:
            return sub.tau_t
        _, cls, _ = self.split.rep_fields(sub.rep)
        return self.class_sets[(sub.tau_t, cls)]

    def push_counts(self) -> List[int]:
        return [len(p) for p in self.pushes]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "demand": list(self.demand.d),
            "push_counts": self.push_counts(),
            "availability": [
                {"tau_t": list(tt), "class": cls, "ens": list(ens)}
                for (tt, cls), ens in sorted(self.class_sets.items())
            ],
        }


def _balanced_extensions(params: SystemParams, split: LibrarySplit, m: int) -> Dict:
    """Assign each (tau_T, class) its extra ENs so every EN gets the same count."""
    t, kt = int(params.t_units), params.kt
    extra = m - t
    keys = [(tt, cls) for tt in split.tsets for cls in range(split.q)]
    if extra <= 0:
        return {k: k[0] for k in keys}
    load = len(keys) * extra // kt
    g = nx.DiGraph()
    for k in keys:
        g.add_edge("src", ("pair", k), capacity=extra)
        for i in range(kt):
            if i not in k[0]:
                g.add_edge(("pair", k), ("en", i), capacity=1)
    for i in range(kt):
        g.add_edge(("en", i), "sink", capacity=load)
    value, flow = nx.maximum_flow(g, "src", "sink")
    if value != len(keys) * extra:  # pragma: no cover - ruled out by the choice of q
        raise InvalidMultiplicity("no balanced fronthaul assignment exists")
    out = {}
    for k in keys:
        chosen = [i for i in range(kt) if flow[("pair", k)].get(("en", i), 0) == 1]
        out[k] = tuple(sorted(set(k[0]) | set(chosen)))
    return out


def plan_fronthaul(placement: CachePlacement, demand: DemandVector, m: Optional[int] = None) -> FronthaulPlan:
    """Push every packet of every requested file to the extra ENs of its class."""
    split = placement.split
    params = placement.params
    m = split.m if m is None else m
    if m > params.kt or m < 0:
        raise InvalidMultiplicity(f"m={m} outside [0, K_T={params.kt}]")
    if m != split.m:
        raise InvalidMultiplicity(f"placement was split for m={split.m}, plan asked for m={m}")
    class_sets = _balanced_extensions(params, split, m)
    pushes = [[] for _ in range(params.kt)]
    if m > int(params.t_units):
        for n in demand.d:
            for sub in split.subfiles(n):
                _, cls, _ = split.rep_fields(sub.rep)
                for i in class_sets[(sub.tau_t, cls)]:
                    if i not in sub.tau_t:
                        pushes[i].append(sub)
    return FronthaulPlan(m, demand, split.f_eff, pushes, class_sets, split)


def empirical_fronthaul_ndt(plan: FronthaulPlan, params: SystemParams) -> Fraction:
    """Busiest fronthaul link, in NDT units: max_i pushes_i / (F r)."""
    busiest = max(plan.push_counts(), default=0)
    if busiest == 0:
        return Fraction(0)
    if params.r == 0:
        raise InfeasibleFronthaul("fronthaul pushes scheduled with r = 0")
    return Fraction(busiest) / (plan.f_eff * params.r)


def placement_json(placement: CachePlacement, plan: Optional[FronthaulPlan] = None) -> str:
    doc = placement.to_dict()
    if plan is not None:
        doc["fronthaul"] = plan.to_dict()
    return json.dumps(doc, sort_keys=True)
