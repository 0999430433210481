"""Feasible points of the converse program and the averaged converse inequality chain.

An allocation stores integer packet counts

* ``c[n, T, R]``: packets of file ``n`` cached at all ENs of the nonempty set
  ``tsets[T]`` and at all users of ``rsets[R]``;
* ``f[d, n, T, R]``: packets of file ``n`` sent over the fronthaul to the ENs of
  ``tsets[T]`` under demand ``demands[d]``, cached at the users of ``rsets[R]``.

Besides the five constraint families of the program, the checker enforces
that the user-side profile ``P[n, R] = sum_T c + f(d)`` does not depend on the
demand and fits into the user caches.  User caches are filled before the
demand is known; without this the program admits points below ``f(x)``.

All identities of the chain are evaluated in exact rational arithmetic.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .converse import f_lower
from .model import CacheDofError, Infeasible, InvalidParams, SystemParams, require_integer_regime
from .ndt import m_max

TINY_LIMITS = {"kt": 3, "kr": 3, "n_files": 3, "f_packets": 12}


class InfeasibleAllocation(CacheDofError):
    """The allocation violates a constraint; the chain is not evaluated."""


def _subsets(k: int, nonempty: bool) -> List[frozenset]:
    out = []
    for size in range(1 if nonempty else 0, k + 1):
        out.extend(frozenset(s) for s in itertools.combinations(range(k), size))
    return out


def all_demands(n_files: int, kr: int) -> List[Tuple[int, ...]]:
    """All pi(N, K_R) demand vectors with distinct files (0-based)."""
    return list(itertools.permutations(range(n_files), kr))


@dataclass
class ConverseAllocation:
    params: SystemParams
    demands: List[Tuple[int, ...]]
    tsets: List[frozenset]
    rsets: List[frozenset]
    c: np.ndarray
    f: np.ndarray

    @classmethod
    def empty(cls, params: SystemParams) -> "ConverseAllocation":
        tsets = _subsets(params.kt, nonempty=True)
        rsets = _subsets(params.kr, nonempty=False)
        demands = all_demands(params.n_files, params.kr)
        c = np.zeros((params.n_files, len(tsets), len(rsets)), dtype=np.int64)
        f = np.zeros((len(demands),) + c.shape, dtype=np.int64)
        return cls(params, demands, tsets, rsets, c, f)

    def copy(self) -> "ConverseAllocation":
        return ConverseAllocation(self.params, self.demands, self.tsets, self.rsets, self.c.copy(), self.f.copy())

    # incidence helpers
    @property
    def t_members(self) -> np.ndarray:
        return np.array([[i in s for i in range(self.params.kt)] for s in self.tsets], dtype=np.int64)

    @property
    def r_members(self) -> np.ndarray:
        return np.array([[j in s for j in range(self.params.kr)] for s in self.rsets], dtype=np.int64)

    @property
    def t_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.tsets], dtype=np.int64)

    @property
    def r_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.rsets], dtype=np.int64)

    @property
    def requested(self) -> np.ndarray:
        """requested[d, n] is True when file n appears in demand d."""
        mask = np.zeros((len(self.demands), self.params.n_files), dtype=bool)
        for k, d in enumerate(self.demands):
            mask[k, list(d)] = True
        return mask

    def fronthaul_loads(self) -> np.ndarray:
        """Packets pushed to each EN under each demand, shape (D, K_T)."""
        per_t = (self.f * self.requested[:, :, None, None]).sum(axis=(1, 3))
        return per_t @ self.t_members

    def delta_f_star(self) -> List[Fraction]:
        """Smallest delta_F*(d) permitted by the fronthaul constraint."""
        p = self.params
        loads = self.fronthaul_loads().max(axis=1)
        if p.r == 0:
            if loads.any():
                raise InfeasibleAllocation("fronthaul used with r = 0")
            return [Fraction(0)] * len(loads)
        return [Fraction(int(x)) / (p.f_packets * p.r) for x in loads]


@dataclass
class ConstraintReport:
    ok: bool
    violations: List[str] = field(default_factory=list)


def check_constraints(alloc: ConverseAllocation, user_profile: bool = True) -> ConstraintReport:
    """Exact check of all constraint families.

    ``user_profile=False`` checks the program exactly as stated, without the
    demand-independent user-cache profile.
    """
    p = alloc.params
    c, f = alloc.c, alloc.f
    big_f, big_n = p.f_packets, p.n_files
    req = alloc.requested
    v = []

    if (c < 0).any() or (f < 0).any():
        v.append("non-negativity")
    if (f * ~req[:, :, None, None]).any():
        v.append("fronthaul of unrequested file")

    totals = c.sum(axis=(1, 2))[None, :] + f.sum(axis=(2, 3))
    if (totals[req] != big_f).any():
        v.append("completeness")

    en_load = c.sum(axis=(0, 2)) @ alloc.t_members
    if (en_load > p.mu_t * big_f * big_n).any():
        v.append("EN capacity")

    held = (c[None] + f).sum(axis=(1, 2)) @ alloc.r_members  # (D, K_R)
    if (held > p.mu_r * big_f * big_n).any():
        v.append("user capacity")

    loads = alloc.fronthaul_loads()
    if p.r == 0:
        if loads.any():
            v.append("fronthaul with r = 0")
    else:
        budget = p.kr * max(m_max(p) - p.t_units, 0) * big_f  # K_T * load <= this
        if (loads * p.kt > budget).any():
            v.append("fronthaul cap")

    if user_profile:
        profile = c.sum(axis=1)[None] + f.sum(axis=2)  # (D, N, R)
        ref = {}
        for d, dem in enumerate(alloc.demands):
            for n in dem:
                if n in ref and not np.array_equal(ref[n], profile[d, n]):
                    v.append("user profile depends on demand")
                    break
                ref.setdefault(n, profile[d, n])
        stacked = sum(ref.values()) if ref else np.zeros(len(alloc.rsets), dtype=np.int64)
        if ((stacked @ alloc.r_members) > p.mu_r * big_f * big_n).any():
            v.append("user profile capacity")
    return ConstraintReport(ok=not v, violations=sorted(set(v)))


def _require_tiny(params: SystemParams) -> None:
    for key, limit in TINY_LIMITS.items():
        if getattr(params, key) > limit:
            raise InvalidParams(f"converse sampler is limited to {key} <= {limit}")


def _starting_point(params: SystemParams) -> ConverseAllocation:
    alloc = ConverseAllocation.empty(params)
    t, a = int(params.t_units), int(params.a_units)
    if t == 0 and (params.r == 0 or params.mu_r == 1):
        raise Infeasible("no EN cache and no usable fronthaul: requested files cannot reach any EN")
    t_cells = [k for k, s in enumerate(alloc.tsets) if len(s) == max(t, 1)]
    r_cells = [k for k, s in enumerate(alloc.rsets) if len(s) == a]
    cells = len(t_cells) * len(r_cells)
    if params.f_packets % cells:
        raise InvalidParams(f"f_packets must be a multiple of {cells} for the uniform starting point")
    share = params.f_packets // cells
    ix = np.ix_(t_cells, r_cells)
    if t >= 1:
        for n in range(params.n_files):
            alloc.c[n][ix] = share
    else:
        for d, dem in enumerate(alloc.demands):
            for n in dem:
                alloc.f[d, n][ix] = share
    return alloc


def _propose(alloc: ConverseAllocation, rng: np.random.Generator) -> Optional[ConverseAllocation]:
    """One random move that preserves completeness and the user profile."""
    new = alloc.copy()
    n_t, n_r = len(alloc.tsets), len(alloc.rsets)
    n = int(rng.integers(alloc.params.n_files))
    holders = [d for d, dem in enumerate(alloc.demands) if n in dem]
    kind = int(rng.integers(4))
    if kind == 0:  # move cached packets between cells
        src = np.argwhere(alloc.c[n] > 0)
        if not len(src):
            return None
        ts, rs = src[rng.integers(len(src))]
        new.c[n, ts, rs] -= 1
        new.c[n, rng.integers(n_t), rng.integers(n_r)] += 1
    elif kind == 1:  # re-target one fronthauled packet within a demand
        d = holders[rng.integers(len(holders))]
        src = np.argwhere(alloc.f[d, n] > 0)
        if not len(src):
            return None
        ts, rs = src[rng.integers(len(src))]
        new.f[d, n, ts, rs] -= 1
        new.f[d, n, rng.integers(n_t), rs] += 1
    elif kind == 2:  # stop caching a packet, fetch it on demand instead
        src = np.argwhere(alloc.c[n] > 0)
        if not len(src):
            return None
        ts, rs = src[rng.integers(len(src))]
        new.c[n, ts, rs] -= 1
        for d in holders:
            new.f[d, n, rng.integers(n_t), rs] += 1
    else:  # cache a packet that is currently fetched for every demand
        rs = int(rng.integers(n_r))
        for d in holders:
            src = np.flatnonzero(alloc.f[d, n, :, rs] > 0)
            if not len(src):
                return None
            new.f[d, n, src[rng.integers(len(src))], rs] -= 1
        new.c[n, rng.integers(n_t), rs] += 1
    return new


def sample_feasible_allocation(
    params: SystemParams,
    demand_set: Optional[Sequence[Tuple[int, ...]]] = None,
    seed: int = 0,
    steps: int = 40,
) -> ConverseAllocation:
    """Random feasible point: uniform placement followed by ``steps`` random moves.

    Moves are kept only when the exact constraint check still passes, so the
    result is feasible by construction.  ``demand_set`` must be the full set
    of distinct-file demands (the chain averages over all of them).
    """
    require_integer_regime(params)
    _require_tiny(params)
    if demand_set is not None and sorted(map(tuple, demand_set)) != all_demands(params.n_files, params.kr):
        raise InvalidParams("demand_set must contain every distinct-file demand vector")
    alloc = _starting_point(params)
    if not check_constraints(alloc).ok:  # pragma: no cover - guards the construction
        raise Infeasible("uniform starting point is infeasible")
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        cand = _propose(alloc, rng)
        if cand is not None and check_constraints(cand).ok:
            alloc = cand
    return alloc


@dataclass
class ChainReport:
    """Every quantity of the averaged converse chain, exact where the chain is exact."""

    x: Fraction
    y: Fraction
    b: Dict[Tuple[int, int], Fraction]
    sum_b: Fraction
    nf: int
    edge_serving: Fraction
    edge_c: Fraction
    cs_lhs: Fraction
    cs_rhs: Fraction
    edge_d: Fraction
    edge_final: Fraction
    fronthaul_avg: Fraction
    fronthaul_en_mean: Fraction
    fronthaul_b: Fraction
    fronthaul_final: Fraction
    en_count_lhs: int
    en_count_rhs: int
    edge_capped: Fraction
    objective: Fraction
    objective_capped: Fraction
    f_x: float
    f_x_capped: float
    steps: Dict[str, bool]

    @property
    def cs_slack(self) -> Fraction:
        return self.cs_rhs - self.cs_lhs

    @property
    def ok(self) -> bool:
        return all(self.steps.values())


def averaged_objective_bound(alloc: ConverseAllocation, require_feasible: bool = True) -> ChainReport:
    p = alloc.params
    if require_feasible:
        report = check_constraints(alloc)
        if not report.ok:
            raise InfeasibleAllocation("; ".join(report.violations))
    big_f, big_n, kr, nt = p.f_packets, p.n_files, p.kr, p.nt
    nf = big_n * big_f
    n_dem = len(alloc.demands)
    per_file = Fraction(n_dem * kr, big_n)  # K_R * pi(N-1, K_R-1)
    one_t = np.eye(p.kt + 1, dtype=np.int64)[alloc.t_sizes]
    one_r = np.eye(kr + 1, dtype=np.int64)[alloc.r_sizes]

    def by_size(arr):  # (..., T, R) -> (..., i, j)
        return np.einsum("...ab,ai,bj->...ij", arr, one_t, one_r)

    c_ij = by_size(alloc.c).sum(axis=0)
    f_sum_ij = by_size(alloc.f.sum(axis=0)).sum(axis=0)  # summed over d and n (f is zero off-demand)
    b = {}
    for i in range(1, p.kt + 1):
        for j in range(kr + 1):
            val = Fraction(int(c_ij[i, j])) + Fraction(int(f_sum_ij[i, j])) / per_file
            if val:
                b[(i, j)] = val
    sum_b = sum(b.values(), Fraction(0))
    x = sum((i * v for (i, j), v in b.items()), Fraction(0)) / nf
    y = sum((j * v for (i, j), v in b.items()), Fraction(0)) / nf
    w = {(i, j): i * nt + j for (i, j) in b}
    scale = kr * (1 - p.mu_r)

    # (a): per-slot serving bound averaged over demands, straight from the definition
    lem3 = Fraction(0)
    lem3_capped = Fraction(0)
    full = by_size(alloc.c[None] + alloc.f)  # (D, N, i, j)
    for d, dem in enumerate(alloc.demands):
        for n in dem:
            cell = full[d, n]
            for i, j in zip(*np.nonzero(cell)):
                cnt = int(cell[i, j])
                lem3 += Fraction(cnt, int(i) * nt + int(j))
                lem3_capped += Fraction(cnt, min(kr, int(i) * nt + int(j)))
    lem3 *= (1 - p.mu_r) / (big_f * n_dem)
    lem3_capped *= (1 - p.mu_r) / (big_f * n_dem)

    edge_c = scale / nf * sum((v / w[k] for k, v in b.items()), Fraction(0))
    cs_lhs = sum_b**2
    sum_over = sum((v / w[k] for k, v in b.items()), Fraction(0))
    sum_times = sum((v * w[k] for k, v in b.items()), Fraction(0))
    cs_rhs = sum_over * sum_times
    edge_d = scale / nf * cs_lhs / sum_times
    edge_e = scale / (nt * x + y)
    a = p.a_units
    edge_final = scale / (nt * x + a)

    # fronthaul side
    loads = alloc.fronthaul_loads()
    c_i = c_ij.sum(axis=1)
    en_count_rhs = sum(i * int(c_i[i]) for i in range(1, p.kt + 1))
    en_count_lhs = int((alloc.c.sum(axis=(0, 2)) @ alloc.t_members).sum())
    if p.r == 0:
        fh_avg = fh_mean = fh_b = fh_final = Fraction(0)
    else:
        fr = big_f * p.r
        fh_avg = sum(alloc.delta_f_star(), Fraction(0)) / n_dem
        fh_mean = Fraction(int(loads.sum()), p.kt * n_dem) / fr
        fh_b = kr / (p.kt * p.r) * (x - Fraction(en_count_rhs, nf))
        fh_final = kr / (p.kt * p.r) * (x - p.t_units)

    objective = lem3 + fh_avg
    objective_capped = lem3_capped + fh_avg
    f_x = f_lower(x, p)
    f_x_capped = f_lower(x, p, cap_users=True)
    capped_jensen = scale / min(kr, nt * x + y) if nt * x + y > 0 else Fraction(0)
    steps = {
        "b_regrouping": lem3 == edge_c,
        "d_cauchy_schwarz": cs_rhs >= cs_lhs,
        "e_counting_identity": sum_b == nf,
        "edge_algebra": edge_d == edge_e,
        "user_cache_y_le_a": y <= a,
        "en_counting_rearrangement": en_count_lhs == en_count_rhs,
        "fronthaul_max_ge_mean": fh_avg >= fh_mean,
        "fronthaul_identity": p.r == 0 or fh_mean == fh_b,
        "en_cache_bound": fh_b >= fh_final,
        "x_in_domain": 1 <= x and (p.r > 0 or x <= p.t_units),
        "final": float(objective) >= f_x - 1e-9,
        "capped_jensen": lem3_capped >= capped_jensen,
        "capped_final": float(objective_capped) >= f_x_capped - 1e-9,
    }
    return ChainReport(
        x=x, y=y, b=b, sum_b=sum_b, nf=nf,
        edge_serving=lem3, edge_c=edge_c, cs_lhs=cs_lhs, cs_rhs=cs_rhs,
        edge_d=edge_d, edge_final=edge_final,
        fronthaul_avg=fh_avg, fronthaul_en_mean=fh_mean, fronthaul_b=fh_b, fronthaul_final=fh_final,
        en_count_lhs=en_count_lhs, en_count_rhs=en_count_rhs,
        edge_capped=lem3_capped, objective=objective, objective_capped=objective_capped,
        f_x=f_x, f_x_capped=f_x_capped, steps=steps,
    )


def verify_converse_chain(alloc: ConverseAllocation) -> bool:
    """True iff the averaged objective of a feasible allocation is >= f(x) - 1e-9.

    Infeasible allocations raise ``InfeasibleAllocation`` instead of returning.
    """
    return averaged_objective_bound(alloc).steps["final"]
