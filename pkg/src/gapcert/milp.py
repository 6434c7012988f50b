"""Deterministic branch and bound for LPs with binary variables.

Node selection is best-bound with depth-first plunging: every node
pulled from the heap starts a dive that keeps following the more
promising child until the dive is pruned or lands on an integral point
(so a fresh dive starts right after each new incumbent); the sibling of
every dive step goes back to the best-bound heap.  Branching picks the
most fractional binary, ties broken toward the lowest index.

The engine is exact up to the LP tolerances: on OPTIMAL the incumbent
and the best bound agree within the requested relative gap (default 0,
i.e. the tree is exhausted).
"""

from __future__ import annotations

import heapq
import math
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .lp_core import FEAS_TOL, REL_EQ, REL_GE, REL_LE, LinearProgram, \
    LpStatus, solve_lp

INT_TOL = 1e-6


class InfeasibleWarmStart(UserWarning):
    """Emitted when a warm start fails feasibility checks (then dropped)."""


class MilpStatus(Enum):
    OPTIMAL = "optimal"
    TIME_LIMIT = "time_limit"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class MilpProblem:
    """LP plus a set of binary columns and an optional warm start.

    Binary columns must have bounds inside [0, 1]; the warm start, if
    given, is a full-length assignment checked at solve time (infeasible
    starts are reported via an InfeasibleWarmStart warning and dropped,
    never an error).
    """

    lp: LinearProgram
    binary_idx: tuple
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        idx = tuple(sorted(int(j) for j in self.binary_idx))
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate binary indices")
        for j in idx:
            if j < 0 or j >= self.lp.n_vars:
                raise ValueError(f"binary index {j} out of range")
            if self.lp.lb[j] < -INT_TOL or self.lp.ub[j] > 1 + INT_TOL:
                raise ValueError(f"binary column {j} has bounds outside [0,1]")
        object.__setattr__(self, "binary_idx", idx)
        if self.warm_start is not None:
            ws = np.asarray(self.warm_start, dtype=float).ravel()
            if ws.size != self.lp.n_vars:
                raise ValueError("warm start length mismatch")
            object.__setattr__(self, "warm_start", ws)

    @property
    def sense(self) -> str:
        return self.lp.sense


@dataclass
class MilpLimits:
    time_s: float = math.inf
    gap_rel: float = 0.0
    node_cap: int = 10 ** 9


@dataclass
class SolveLog:
    """(wall_s, incumbent, bound) rows; incumbent is None until found."""

    entries: list = field(default_factory=list)
    nodes: int = 0
    status: MilpStatus = MilpStatus.INFEASIBLE

    def record(self, t, incumbent, bound):
        self.entries.append((float(t), incumbent, float(bound)))

    def to_json_dict(self):
        return {"entries": [[t, i, b] for (t, i, b) in self.entries],
                "nodes": self.nodes, "status": self.status.value}


@dataclass
class MilpSolution:
    status: MilpStatus
    x: np.ndarray | None
    objective: float
    best_bound: float
    gap: float
    log: SolveLog
    wall_s: float


def branch_select(fractional) -> int:
    """Most fractional branching: index whose value is closest to 0.5.

    `fractional` is a sequence of (index, value) pairs; ties go to the
    lowest index.
    """
    pairs = [(abs(v - 0.5), int(j)) for (j, v) in fractional]
    if not pairs:
        raise ValueError("no fractional entries to branch on")
    return min(pairs)[1]


def check_feasible(lp: LinearProgram, x, binary_idx=(), tol=FEAS_TOL * 5):
    """Row/bound/integrality residual check used for warm starts."""
    x = np.asarray(x, float)
    if np.any(x < lp.lb - tol) or np.any(x > lp.ub + tol):
        return False
    if lp.n_rows:
        act = lp.A @ x
        if np.any((lp.rel == REL_LE) & (act > lp.b + tol)):
            return False
        if np.any((lp.rel == REL_GE) & (act < lp.b - tol)):
            return False
        if np.any((lp.rel == REL_EQ) & (np.abs(act - lp.b) > tol)):
            return False
    for j in binary_idx:
        if abs(x[j] - round(x[j])) > INT_TOL:
            return False
    return True


def solve_milp(prob: MilpProblem, limits: MilpLimits | None = None,
               seed: int | None = None, callback=None) -> MilpSolution:
    """Branch and bound; returns incumbent, proved bound and a SolveLog.

    `seed` is accepted for interface parity and ignored: the search is
    fully deterministic.  `callback(wall_s, objective, x)` fires on each
    incumbent improvement.  Node-cap exhaustion maps to TIME_LIMIT.
    """
    del seed
    limits = limits or MilpLimits()
    lp = prob.lp
    sgn = 1.0 if lp.sense == "max" else -1.0
    t0 = time.monotonic()
    log = SolveLog()

    inc_obj = None
    inc_x = None

    def better(a, b):
        return (a - b) * sgn > 1e-9 * (1.0 + abs(b))

    def now():
        return time.monotonic() - t0

    def rel_gap(bound, inc):
        if inc is None or not np.isfinite(bound):
            return math.inf
        return abs(bound - inc) / max(1.0, abs(inc))

    if prob.warm_start is not None:
        if check_feasible(lp, prob.warm_start, prob.binary_idx):
            inc_x = prob.warm_start.copy()
            for j in prob.binary_idx:
                inc_x[j] = round(inc_x[j])
            inc_obj = float(lp.c @ inc_x)
            if callback is not None:
                callback(now(), inc_obj, inc_x)
        else:
            warnings.warn("warm start infeasible; discarded",
                          InfeasibleWarmStart)

    binary = np.array(prob.binary_idx, dtype=int)
    root_lo = lp.lb.copy()
    root_hi = lp.ub.copy()
    if binary.size:
        root_lo[binary] = np.maximum(root_lo[binary], 0.0)
        root_hi[binary] = np.minimum(root_hi[binary], 1.0)

    inf_bound = sgn * math.inf  # most optimistic possible objective
    serial = 0
    # heap rows: (-sgn * parent_bound, serial, lo, hi, hint)
    heap = [(-sgn * inf_bound, serial, root_lo, root_hi, None)]
    dive = []  # LIFO rows: (parent_bound, lo, hi, hint)
    global_bound = inf_bound
    log.record(0.0, inc_obj, global_bound)
    status = MilpStatus.OPTIMAL
    nodes = 0

    def open_best():
        """Most optimistic bound among open nodes (O(dive depth))."""
        cands = []
        if heap:
            cands.append(-sgn * heap[0][0])
        cands.extend(row[0] for row in dive)
        if not cands:
            return None
        return max(cands) if sgn > 0 else min(cands)

    def refresh_bound():
        nonlocal global_bound
        cand = open_best()
        if cand is None:
            cand = inc_obj if inc_obj is not None else global_bound
        elif inc_obj is not None and better(inc_obj, cand):
            cand = inc_obj
        if cand is None:
            return
        if better(global_bound, cand):
            global_bound = cand
            log.record(now(), inc_obj, global_bound)

    while heap or dive:
        if now() > limits.time_s or nodes >= limits.node_cap:
            status = MilpStatus.TIME_LIMIT
            break
        if inc_obj is not None and \
                rel_gap(global_bound, inc_obj) <= limits.gap_rel:
            break
        if dive:
            parent_bound, lo, hi, hint = dive.pop()
        else:
            key, _, lo, hi, hint = heapq.heappop(heap)
            parent_bound = -sgn * key
        if inc_obj is not None and not better(parent_bound, inc_obj):
            refresh_bound()
            continue
        nodes += 1
        sol = solve_lp(lp, basis_hint=hint, bounds_override=(lo, hi))
        if sol.status is LpStatus.UNBOUNDED:
            raise ValueError("LP relaxation is unbounded; MILP ill-posed")
        if sol.status is LpStatus.INFEASIBLE:
            refresh_bound()
            continue
        bound = sol.objective
        if inc_obj is not None and not better(bound, inc_obj):
            refresh_bound()
            continue
        if binary.size:
            vals = sol.x[binary]
            frac_rows = np.flatnonzero(np.abs(vals - np.round(vals)) > INT_TOL)
        else:
            frac_rows = np.zeros(0, dtype=int)
        if frac_rows.size == 0:
            x = sol.x.copy()
            if binary.size:
                x[binary] = np.round(x[binary])
            obj = float(lp.c @ x)
            if inc_obj is None or better(obj, inc_obj):
                inc_obj = obj
                inc_x = x
                log.record(now(), inc_obj, global_bound)
                if callback is not None:
                    callback(now(), inc_obj, inc_x)
            refresh_bound()
            continue
        j = branch_select([(int(binary[k]), float(vals[k]))
                           for k in frac_rows])
        lo0, hi0 = lo.copy(), hi.copy()
        hi0[j] = 0.0
        lo1, hi1 = lo.copy(), hi.copy()
        lo1[j] = 1.0
        near_one = sol.x[j] >= 0.5
        if near_one:
            near, far = (lo1, hi1), (lo0, hi0)
        else:
            near, far = (lo0, hi0), (lo1, hi1)
        serial += 1
        heapq.heappush(heap, (-sgn * bound, serial, far[0], far[1], sol.basis))
        dive.append((bound, near[0], near[1], sol.basis))
        refresh_bound()

    if status is MilpStatus.OPTIMAL and inc_obj is None:
        status = MilpStatus.INFEASIBLE

    if inc_obj is not None:
        rest = open_best()
        if status is MilpStatus.OPTIMAL:
            global_bound = inc_obj if rest is None or not better(rest, inc_obj) \
                else rest
        elif rest is not None:
            global_bound = rest if better(rest, inc_obj) else inc_obj
        log.record(now(), inc_obj, global_bound)

    log.nodes = nodes
    log.status = status
    return MilpSolution(
        status=status, x=inc_x,
        objective=inc_obj if inc_obj is not None else math.nan,
        best_bound=float(global_bound) if inc_obj is not None or
        status is not MilpStatus.INFEASIBLE else math.nan,
        gap=rel_gap(global_bound, inc_obj) if inc_obj is not None else math.inf,
        log=log, wall_s=now())
