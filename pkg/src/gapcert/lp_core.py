"""Dense bounded-variable revised simplex with exact dual extraction.

Small, deterministic LP engine used as the workhorse beneath the MILP
search and the bound-tightening routines.  Solves

    min/max  c @ x
    s.t.     A[i] @ x  (<= | = | >=)  b[i]
             lb <= x <= ub

with variable bounds handled natively (no bound rows).  Duals follow the
value-function convention: for a row with right-hand side b_i, the
reported dual is d(objective)/d(b_i), so for min problems
Phi(b + t) >= Phi(b) + duals @ t for any feasible perturbation t.

Phase 1 is the composite (infeasibility-sum) method started from the
slack basis, which accepts arbitrary warm bases; phase 2 is Dantzig
pricing with Bland's rule engaged once a degeneracy counter exceeds
2 * (rows + cols).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEAS_TOL = 1e-8
COMP_TOL = 1e-7
DUALITY_TOL = 1e-7

# internal tolerances
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-10
_STEP_TOL = 1e-11
_REFACTOR_EVERY = 64

REL_LE = -1
REL_EQ = 0
REL_GE = 1

_REL_STR = {REL_LE: "<=", REL_EQ: "=", REL_GE: ">="}
_STR_REL = {"<=": REL_LE, "=": REL_EQ, ">=": REL_GE,
            "le": REL_LE, "eq": REL_EQ, "ge": REL_GE}

# column statuses
_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2
_NB_FREE = 3


class NumericalFailure(RuntimeError):
    """Pivoting exceeded the anti-cycling budget or certification failed."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_rel(rel) -> np.ndarray:
    out = np.empty(len(rel), dtype=np.int8)
    for i, r in enumerate(rel):
        if isinstance(r, str):
            out[i] = _STR_REL[r]
        else:
            if r not in (REL_LE, REL_EQ, REL_GE):
                raise ValueError(f"bad relation {r!r} in row {i}")
            out[i] = r
    return out


@dataclass(frozen=True)
class LinearProgram:
    """Immutable LP in row form.

    Parameters
    ----------
    sense : "min" or "max"
    c : (n,) objective coefficients
    A : (m, n) dense row coefficients
    rel : length-m relations, each "<=", "=" or ">=" (or REL_* ints)
    b : (m,) right-hand sides
    lb, ub : (n,) variable bounds, +-inf allowed
    names : optional variable names (generated if omitted)
    """

    sense: str
    c: np.ndarray
    A: np.ndarray
    rel: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        rel = _as_rel(self.rel)
        lb = np.asarray(self.lb, dtype=float).ravel()
        ub = np.asarray(self.ub, dtype=float).ravel()
        n = c.size
        m = A.shape[0]
        if A.shape[1] != n:
            raise ValueError(f"A has {A.shape[1]} columns, c has {n} entries")
        if b.size != m or rel.size != m:
            raise ValueError("row count mismatch between A, rel and b")
        if lb.size != n or ub.size != n:
            raise ValueError("bound length mismatch")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A))
                and np.all(np.isfinite(b))):
            raise ValueError("c, A and b must be finite")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
            raise ValueError("bounds may not be NaN")
        if np.any(lb > ub + FEAS_TOL):
            raise ValueError("lb > ub for some variable")
        names = tuple(self.names) if self.names else tuple(
            f"x{j}" for j in range(n))
        if len(names) != n:
            raise ValueError("names length mismatch")
        for arr in (c, A, b, rel, lb, ub):
            arr.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rel", rel)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        object.__setattr__(self, "names", names)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class Basis:
    """Warm-start handle: basic column set plus nonbasic statuses.

    Columns are in internal order (structurals then one slack per row).
    Opaque outside this module; obtained from LpSolution.basis.
    """

    basic: np.ndarray
    status: np.ndarray


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    pivots: list = field(default_factory=list)


def _slack_bounds(rel: np.ndarray):
    """Slack s_i with row written as A_i x + s_i = b_i."""
    m = rel.size
    slo = np.zeros(m)
    sup = np.zeros(m)
    slo[rel == REL_LE] = 0.0
    sup[rel == REL_LE] = np.inf
    slo[rel == REL_GE] = -np.inf
    sup[rel == REL_GE] = 0.0
    # equality rows keep [0, 0]
    return slo, sup


class _Simplex:
    """One solve on the internal equality form min c@x, Ax = b, l<=x<=u."""

    def __init__(self, A, b, c, lo, up):
        self.A = A          # m x N dense (structurals + slacks)
        self.b = b
        self.c = c
        self.lo = lo
        self.up = up
        self.m, self.N = A.shape
        self.status = np.empty(self.N, dtype=np.int8)
        self.basic = np.empty(self.m, dtype=np.int64)
        self.x = np.zeros(self.N)
        self.binv = None
        self.iterations = 0
        self.pivots = []
        self.bland = False
        self._degen = 0
        self._since_refactor = 0
        self.max_iter = 10000 + 40 * (self.m + self.N)

    # -- basis management ------------------------------------------------

    def cold_start(self):
        n_struct = self.N - self.m
        for j in range(self.N):
            if j >= n_struct:
                self.status[j] = _BASIC
            elif np.isfinite(self.lo[j]):
                self.status[j] = _AT_LOWER
            elif np.isfinite(self.up[j]):
                self.status[j] = _AT_UPPER
            else:
                self.status[j] = _NB_FREE
        self.basic = np.arange(n_struct, self.N, dtype=np.int64)
        self.binv = np.eye(self.m)
        self._set_nonbasic_values()
        self._recompute_basics()

    def warm_start(self, basis: Basis) -> bool:
        # copy both arrays: the hint may be shared across search nodes
        basic = np.array(basis.basic, dtype=np.int64, copy=True)
        status = np.array(basis.status, dtype=np.int8, copy=True)
        if basic.size != self.m or status.size != self.N:
            return False
        if np.any(basic < 0) or np.any(basic >= self.N):
            return False
        if np.unique(basic).size != self.m:
            return False
        B = self.A[:, basic]
        try:
            binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(binv)):
            return False
        if np.abs(B @ binv - np.eye(self.m)).max() > 1e-6:
            return False
        in_basis = np.zeros(self.N, dtype=bool)
        in_basis[basic] = True
        for j in np.flatnonzero((status == _BASIC) & ~in_basis):
            if np.isfinite(self.lo[j]):
                status[j] = _AT_LOWER
            elif np.isfinite(self.up[j]):
                status[j] = _AT_UPPER
            else:
                status[j] = _NB_FREE
        self.basic = basic
        self.binv = binv
        self.status = status
        # repair statuses that no longer match the bounds
        for j in range(self.N):
            if self.status[j] == _BASIC:
                continue
            if self.status[j] == _AT_LOWER and not np.isfinite(self.lo[j]):
                self.status[j] = _NB_FREE
            if self.status[j] == _AT_UPPER and not np.isfinite(self.up[j]):
                self.status[j] = _NB_FREE
        self.status[basic] = _BASIC
        self._set_nonbasic_values()
        self._recompute_basics()
        return True

    def _set_nonbasic_values(self):
        for j in range(self.N):
            s = self.status[j]
            if s == _AT_LOWER:
                self.x[j] = self.lo[j]
            elif s == _AT_UPPER:
                self.x[j] = self.up[j]
            elif s == _NB_FREE:
                self.x[j] = 0.0

    def _recompute_basics(self):
        rhs = self.b - self.A @ self.x + self.A[:, self.basic] @ self.x[self.basic]
        self.x[self.basic] = self.binv @ rhs

    def _refactor(self):
        try:
            self.binv = np.linalg.inv(self.A[:, self.basic])
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("basis became singular") from exc
        self._set_nonbasic_values()
        self._recompute_basics()
        self._since_refactor = 0

    # -- pricing ---------------------------------------------------------

    def _phase1_cost(self):
        c1 = np.zeros(self.N)
        xb = self.x[self.basic]
        lob = self.lo[self.basic]
        upb = self.up[self.basic]
        c1[self.basic[xb < lob - FEAS_TOL]] = -1.0
        c1[self.basic[xb > upb + FEAS_TOL]] = 1.0
        return c1

    def _infeasibility(self) -> float:
        xb = self.x[self.basic]
        lob = self.lo[self.basic]
        upb = self.up[self.basic]
        return float(np.sum(np.maximum(lob - xb, 0.0)[np.isfinite(lob)])
                     + np.sum(np.maximum(xb - upb, 0.0)[np.isfinite(upb)]))

    def _price(self, cvec):
        y = cvec[self.basic] @ self.binv
        d = cvec - y @ self.A
        return y, d

    def _choose_entering(self, d):
        # improvement rate when variable j moves off its bound in the
        # only feasible direction; negative rate means progress
        rate = np.full(self.N, np.inf)
        nb_low = self.status == _AT_LOWER
        nb_up = self.status == _AT_UPPER
        nb_free = self.status == _NB_FREE
        fixed = self.up - self.lo <= _STEP_TOL
        rate[nb_low & ~fixed] = d[nb_low & ~fixed]
        rate[nb_up & ~fixed] = -d[nb_up & ~fixed]
        rate[nb_free] = -np.abs(d[nb_free])
        cand = np.flatnonzero(rate < -_DUAL_TOL)
        if cand.size == 0:
            return -1, 0
        if self.bland:
            j = int(cand[0])
        else:
            j = int(cand[np.argmin(rate[cand])])
        if self.status[j] == _AT_LOWER:
            t = 1
        elif self.status[j] == _AT_UPPER:
            t = -1
        else:
            t = 1 if d[j] < 0 else -1
        return j, t

    # -- ratio test --------------------------------------------------------

    def _ratio_test(self, j, t, w, phase1):
        """Return (theta, leaving_row, leave_status). leaving_row -1 = flip."""
        theta = np.inf
        leave = -1
        leave_stat = _AT_LOWER
        best_piv = 0.0
        xb = self.x[self.basic]
        lob = self.lo[self.basic]
        upb = self.up[self.basic]
        r = -t * w  # d(x_basic)/d(theta)
        for i in range(self.m):
            ri = r[i]
            if abs(ri) <= _PIVOT_TOL:
                continue
            lo_i, up_i, xi = lob[i], upb[i], xb[i]
            if phase1 and xi < lo_i - FEAS_TOL:
                # infeasible below: kink where it regains its lower bound
                if ri > 0:
                    ti, st = (lo_i - xi) / ri, _AT_LOWER
                else:
                    continue
            elif phase1 and xi > up_i + FEAS_TOL:
                if ri < 0:
                    ti, st = (up_i - xi) / ri, _AT_UPPER
                else:
                    continue
            else:
                if ri > 0:
                    if not np.isfinite(up_i):
                        continue
                    ti, st = (up_i - xi) / ri, _AT_UPPER
                else:
                    if not np.isfinite(lo_i):
                        continue
                    ti, st = (lo_i - xi) / ri, _AT_LOWER
            ti = max(ti, 0.0)
            if ti < theta - _STEP_TOL:
                theta, leave, leave_stat, best_piv = ti, i, st, abs(ri)
            elif ti < theta + _STEP_TOL and leave >= 0:
                better = (self.basic[i] < self.basic[leave]) if self.bland \
                    else (abs(ri) > best_piv + 1e-15)
                if better:
                    theta, leave, leave_stat, best_piv = ti, i, st, abs(ri)
        # bound flip of the entering variable itself
        span = self.up[j] - self.lo[j]
        if np.isfinite(span) and span < theta - _STEP_TOL:
            return span, -1, _AT_UPPER if t > 0 else _AT_LOWER
        return theta, leave, leave_stat

    def _pivot(self, j, t, theta, leave, leave_stat, w):
        self.x[self.basic] -= t * theta * w
        if leave < 0:
            # bound flip, basis unchanged
            self.x[j] = self.up[j] if leave_stat == _AT_UPPER else self.lo[j]
            self.status[j] = leave_stat
            self.pivots.append((j, -1))
            return
        out = self.basic[leave]
        self.x[j] = self.x[j] + t * theta
        self.x[out] = self.up[out] if leave_stat == _AT_UPPER else self.lo[out]
        self.status[out] = leave_stat
        self.status[j] = _BASIC
        self.basic[leave] = j
        piv = w[leave]
        self.binv[leave, :] /= piv
        for k in range(self.m):
            if k != leave and abs(w[k]) > 1e-300:
                self.binv[k, :] -= w[k] * self.binv[leave, :]
        self.pivots.append((j, out))
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()

    def _bump_degeneracy(self, theta):
        if theta <= _STEP_TOL:
            self._degen += 1
            if self._degen > 2 * (self.m + self.N):
                self.bland = True
        else:
            self._degen = 0

    # -- driver ------------------------------------------------------------

    def run_phase1(self) -> bool:
        while True:
            if self._infeasibility() <= FEAS_TOL * (1 + self.m):
                return True
            if self.iterations >= self.max_iter:
                raise NumericalFailure("phase 1 exceeded pivot budget")
            c1 = self._phase1_cost()
            _, d = self._price(c1)
            j, t = self._choose_entering(d)
            if j < 0:
                return False  # genuinely infeasible
            w = self.binv @ self.A[:, j]
            theta, leave, st = self._ratio_test(j, t, w, phase1=True)
            if not np.isfinite(theta):
                raise NumericalFailure("phase 1 ray with no blocking kink")
            self._bump_degeneracy(theta)
            self._pivot(j, t, theta, leave, st, w)
            self.iterations += 1

    def run_phase2(self) -> str:
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure("phase 2 exceeded pivot budget")
            if self._infeasibility() > FEAS_TOL * (1 + self.m) * 10:
                # numerical drift pushed a basic out of bounds: repair
                if not self.run_phase1():
                    raise NumericalFailure("feasibility lost during phase 2")
                continue
            _, d = self._price(self.c)
            j, t = self._choose_entering(d)
            if j < 0:
                return "optimal"
            w = self.binv @ self.A[:, j]
            theta, leave, st = self._ratio_test(j, t, w, phase1=False)
            if not np.isfinite(theta):
                return "unbounded"
            self._bump_degeneracy(theta)
            self._pivot(j, t, theta, leave, st, w)
            self.iterations += 1


def solve_lp(lp: LinearProgram, basis_hint: Basis | None = None, *,
             bounds_override=None) -> LpSolution:
    """Solve an LP; return primal, duals and reduced costs.

    Parameters
    ----------
    lp : LinearProgram
    basis_hint : optional Basis from a previous LpSolution on a problem
        with the same rows/columns; invalid hints fall back to a cold
        start.
    bounds_override : optional (lb, ub) pair replacing the structural
        variable bounds (used by branch and bound; the LP object itself
        is never mutated).

    Raises NumericalFailure if pivoting exceeds the anti-cycling budget
    or an "optimal" point fails the feasibility/duality certificates.
    """
    lb = lp.lb if bounds_override is None else np.asarray(bounds_override[0], float)
    ub = lp.ub if bounds_override is None else np.asarray(bounds_override[1], float)
    if np.any(lb > ub + FEAS_TOL):
        return LpSolution(status=LpStatus.INFEASIBLE)
    n, m_all = lp.n_vars, lp.n_rows

    # drop empty rows (the only presolve performed)
    row_norm = np.abs(lp.A).max(axis=1) if n and m_all else np.zeros(m_all)
    keep = row_norm > 0.0
    for i in np.flatnonzero(~keep):
        r, bi = lp.rel[i], lp.b[i]
        bad = (r == REL_LE and bi < -FEAS_TOL) or \
              (r == REL_GE and bi > FEAS_TOL) or \
              (r == REL_EQ and abs(bi) > FEAS_TOL)
        if bad:
            return LpSolution(status=LpStatus.INFEASIBLE)
    A = lp.A[keep]
    b = lp.b[keep]
    rel = lp.rel[keep]
    m = int(keep.sum())

    sign = 1.0 if lp.sense == "min" else -1.0
    slo, sup = _slack_bounds(rel)
    A_int = np.hstack([A, np.eye(m)]) if m else np.zeros((0, n))
    c_int = np.concatenate([sign * lp.c, np.zeros(m)])
    lo = np.concatenate([lb, slo])
    up = np.concatenate([ub, sup])

    def attempt(hint, force_bland):
        sx = _Simplex(A_int, b, c_int, lo, up)
        sx.bland = force_bland
        started = False
        if hint is not None and not force_bland:
            started = sx.warm_start(hint)
        if not started:
            sx.cold_start()
        if not sx.run_phase1():
            return sx, "infeasible"
        return sx, sx.run_phase2()

    sx, outcome = attempt(basis_hint, force_bland=False)
    if outcome == "optimal":
        sol = _extract(lp, sx, keep, sign, lb, ub)
        if sol is not None:
            return sol
        # certification failed: deterministic cold retry under Bland
        sx, outcome = attempt(None, force_bland=True)
        if outcome == "optimal":
            sol = _extract(lp, sx, keep, sign, lb, ub)
            if sol is not None:
                return sol
        raise NumericalFailure("optimal point failed certification")
    if outcome == "infeasible":
        return LpSolution(status=LpStatus.INFEASIBLE, iterations=sx.iterations,
                          pivots=sx.pivots)
    return LpSolution(status=LpStatus.UNBOUNDED, iterations=sx.iterations,
                      pivots=sx.pivots)


def _extract(lp: LinearProgram, sx: _Simplex, keep, sign, lb, ub) -> LpSolution | None:
    n = lp.n_vars
    x = sx.x[:n].copy()
    y_int = sx.c[sx.basic] @ sx.binv
    d_int = sx.c - y_int @ sx.A
    duals = np.zeros(lp.n_rows)
    duals[keep] = sign * y_int
    red = sign * d_int[:n]
    obj = float(lp.c @ x)

    # certify before handing the solution out
    lbv = np.maximum(sx.lo[:n] - x, 0.0)
    ubv = np.maximum(x - sx.up[:n], 0.0)
    if max(lbv.max(initial=0.0), ubv.max(initial=0.0)) > FEAS_TOL * 10:
        return None
    if lp.n_rows:
        act = lp.A @ x
        res_le = np.maximum(act - lp.b, 0.0)[lp.rel == REL_LE]
        res_ge = np.maximum(lp.b - act, 0.0)[lp.rel == REL_GE]
        res_eq = np.abs(act - lp.b)[lp.rel == REL_EQ]
        worst = max(res_le.max(initial=0.0), res_ge.max(initial=0.0),
                    res_eq.max(initial=0.0))
        if worst > FEAS_TOL * 10:
            return None
        comp = np.abs(duals * (act - lp.b))
        if comp.max(initial=0.0) > COMP_TOL * (1.0 + np.abs(duals).max(initial=0.0)):
            return None
    dobj = _dual_obj_raw(lp.sense, lp.b, duals, red, lb, ub)
    if abs(obj - dobj) > DUALITY_TOL * (1.0 + abs(obj)):
        return None
    x.flags.writeable = False
    bas = Basis(basic=sx.basic.copy(), status=sx.status.copy())
    bas.basic.flags.writeable = False
    bas.status.flags.writeable = False
    return LpSolution(status=LpStatus.OPTIMAL, x=x, objective=obj,
                      duals=duals, reduced_costs=red, basis=bas,
                      iterations=sx.iterations, pivots=sx.pivots)


def _dual_obj_raw(sense, b, duals, red, lb, ub) -> float:
    val = float(duals @ b)
    if sense == "min":
        at_lo = red > _DUAL_TOL
        at_up = red < -_DUAL_TOL
    else:
        at_lo = red < -_DUAL_TOL
        at_up = red > _DUAL_TOL
    lb_safe = np.where(np.isfinite(lb), lb, 0.0)
    ub_safe = np.where(np.isfinite(ub), ub, 0.0)
    lo_c = np.where(at_lo & np.isfinite(lb), red * lb_safe, 0.0)
    up_c = np.where(at_up & np.isfinite(ub), red * ub_safe, 0.0)
    return val + float(lo_c.sum() + up_c.sum())


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Dual objective implied by sol's duals and reduced costs.

    Equals sol.objective within DUALITY_TOL * (1 + |objective|) whenever
    sol.status is OPTIMAL (strong duality certificate).
    """
    if sol.status is not LpStatus.OPTIMAL:
        raise ValueError("dual objective only defined for optimal solutions")
    return _dual_obj_raw(lp.sense, lp.b, sol.duals, sol.reduced_costs,
                         lp.lb, lp.ub)


# -- serialization ---------------------------------------------------------


def lp_to_json(lp: LinearProgram) -> str:
    """Loss-free JSON for finite data; infinite bounds map to null."""
    def bound_list(arr):
        return [None if not np.isfinite(v) else float(v) for v in arr]
    doc = {
        "sense": lp.sense,
        "c": [float(v) for v in lp.c],
        "rows": [{"a": [float(v) for v in lp.A[i]],
                  "rel": _REL_STR[int(lp.rel[i])],
                  "rhs": float(lp.b[i])} for i in range(lp.n_rows)],
        "lb": bound_list(lp.lb),
        "ub": bound_list(lp.ub),
        "names": list(lp.names),
    }
    return json.dumps(doc)


def lp_from_json(text: str) -> LinearProgram:
    doc = json.loads(text)
    n = len(doc["c"])
    rows = doc.get("rows", [])
    A = np.array([r["a"] for r in rows], dtype=float).reshape(len(rows), n)
    lb = np.array([-np.inf if v is None else v for v in doc["lb"]], dtype=float)
    ub = np.array([np.inf if v is None else v for v in doc["ub"]], dtype=float)
    return LinearProgram(
        sense=doc["sense"], c=np.array(doc["c"], dtype=float), A=A,
        rel=[r["rel"] for r in rows],
        b=np.array([r["rhs"] for r in rows], dtype=float),
        lb=lb, ub=ub, names=tuple(doc.get("names") or ()))


def _mps_num(v: float) -> str:
    return f"{v:.12g}"


def to_mps(lp: LinearProgram, name: str = "GAPCERT",
           binary_idx=None) -> str:
    """Fixed-format MPS text for cross-checking against external solvers.

    binary_idx, if given, wraps those columns in INTORG/INTEND markers
    (so a MilpProblem can be exported by passing its binary set).
    Maximization emits an OBJSENSE section, a widely accepted extension.
    """
    binaries = set(int(j) for j in binary_idx) if binary_idx is not None else set()
    rn = [f"R{i:07d}" for i in range(lp.n_rows)]
    cn = [f"C{j:07d}" for j in range(lp.n_vars)]
    L = [f"NAME          {name[:8]}"]
    if lp.sense == "max":
        L.append("OBJSENSE")
        L.append("    MAX")
    L.append("ROWS")
    L.append(" N  COST")
    for i in range(lp.n_rows):
        tag = {REL_LE: "L", REL_EQ: "E", REL_GE: "G"}[int(lp.rel[i])]
        L.append(f" {tag}  {rn[i]}")
    L.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(lp.n_vars):
        want_int = j in binaries
        if want_int != in_int:
            tag = "INTORG" if want_int else "INTEND"
            L.append(f"    MARKER{marker:04d}                'MARKER'"
                     f"                 '{tag}'")
            marker += 1
            in_int = want_int
        entries = []
        if lp.c[j] != 0.0:
            entries.append(("COST", lp.c[j]))
        for i in range(lp.n_rows):
            if lp.A[i, j] != 0.0:
                entries.append((rn[i], lp.A[i, j]))
        if not entries:
            entries.append(("COST", 0.0))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            line = f"    {cn[j]:<10}{pair[0][0]:<10}{_mps_num(pair[0][1]):>12}"
            if len(pair) == 2:
                line += f"   {pair[1][0]:<10}{_mps_num(pair[1][1]):>12}"
            L.append(line)
    if in_int:
        L.append(f"    MARKER{marker:04d}                'MARKER'"
                 f"                 'INTEND'")
    L.append("RHS")
    for i in range(lp.n_rows):
        if lp.b[i] != 0.0:
            L.append(f"    RHS       {rn[i]:<10}{_mps_num(lp.b[i]):>12}")
    L.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            L.append(f" FX BND       {cn[j]:<10}{_mps_num(lo):>12}")
            continue
        if not np.isfinite(lo) and not np.isfinite(hi):
            L.append(f" FR BND       {cn[j]}")
            continue
        if np.isfinite(lo):
            if lo != 0.0:
                L.append(f" LO BND       {cn[j]:<10}{_mps_num(lo):>12}")
        else:
            L.append(f" MI BND       {cn[j]}")
        if np.isfinite(hi):
            L.append(f" UP BND       {cn[j]:<10}{_mps_num(hi):>12}")
    L.append("ENDATA")
    return "\n".join(L) + "\n"
