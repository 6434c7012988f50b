"""0/1 knapsack family: greedy-repair proxy and its exact MILP encoding.

The parametric instance scales a reference case by a latent point
(alpha, beta): item values become beta_i * v_i and the capacity becomes
alpha * l, with every component of (alpha, beta) in [1-u, 1+u].  The
proxy scores items with an MLP (inputs [beta*v..., alpha*l]) and repairs
the scores into a feasible selection greedily: walk items in descending
score order and stop at the first one that would overflow the capacity.

The repair step is combinatorial, not a projection, so the MILP encodes
it directly: a permutation block sorts the scores (McCormick products
tie the sorted copies to the network outputs), prefix-weight rows halt
the sorted selection exactly where the greedy walk halts, and pairwise
binary products recover the selection in item order.  The halting rows
compare integer prefix weights against the scaled capacity, so the
builder insists on integer item weights and an integer reference
capacity.  At equal scores the greedy walk prefers the lower item
index while the MILP may order the tied items either way; keep scores
distinct (generic nets do) when comparing the two paths point-for-point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .encodings import EncodingContext, ibp
from .encodings import encode_network
from .lp_core import REL_EQ, REL_GE, REL_LE
from .milp import MilpProblem
from .neural import MlpNetwork, forward

_ENUM_MAX = 25          # exhaustive enumeration up to this many items
_ENUM_CHUNK = 1 << 18
_INT_EPS = 1e-9
_CAP_TOL = 1e-4         # floor(alpha*l) tie margin at integer crossings


@dataclass(frozen=True)
class KnapsackCase:
    K: int
    v: np.ndarray
    w: np.ndarray
    l: float

    def __post_init__(self):
        K = int(self.K)
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if v.shape != (K,) or w.shape != (K,):
            raise ValueError("v and w must have shape (K,)")
        if np.any(v < 0):
            raise ValueError("item values must be nonnegative")
        if np.any(w <= 0):
            raise ValueError("item weights must be positive")
        if not self.l > 0:
            raise ValueError("capacity must be positive")
        for arr in (v, w):
            arr.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "l", float(self.l))


def save_case(case: KnapsackCase, path):
    doc = {"K": case.K, "v": [float(x) for x in case.v],
           "w": [float(x) for x in case.w], "l": case.l}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_case(path) -> KnapsackCase:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return KnapsackCase(K=int(doc["K"]),
                            v=np.array(doc["v"], dtype=float),
                            w=np.array(doc["w"], dtype=float),
                            l=float(doc["l"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed knapsack case file: {exc}") from exc


@dataclass(frozen=True)
class KnapsackDomain:
    """Latent box: alpha scales the capacity, beta_i scales value i."""

    K: int
    u: float

    def __post_init__(self):
        if not 0.0 <= self.u < 1.0:
            raise ValueError("width u must lie in [0, 1)")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "u", float(self.u))

    @property
    def dim(self) -> int:
        return 1 + self.K

    def latent_box(self):
        lo = np.full(self.dim, 1.0 - self.u)
        hi = np.full(self.dim, 1.0 + self.u)
        return lo, hi

    def contains(self, alpha, beta, tol: float = 1e-9) -> bool:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.K,):
            return False
        lo, hi = 1.0 - self.u - tol, 1.0 + self.u + tol
        return bool(lo <= alpha <= hi
                    and np.all(beta >= lo) and np.all(beta <= hi))


def scaled_inputs(case: KnapsackCase, alpha, beta) -> np.ndarray:
    """Network input layout: the K scaled values, then the scaled capacity."""
    beta = np.asarray(beta, dtype=float)
    return np.concatenate([beta * case.v, [float(alpha) * case.l]])


def heuristic_scores(v, w) -> np.ndarray:
    """Classic value-per-weight ranking."""
    return np.asarray(v, dtype=float) / np.asarray(w, dtype=float)


def greedy_repair(scores, w, l) -> np.ndarray:
    """Select items in descending score order; halt at the first overflow.

    Ties rank the lower index first.  Halting (rather than skipping and
    trying later items) is what makes the rule expressible with prefix
    weights alone.  Returns a 0/1 int array.
    """
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w, dtype=float)
    y = np.zeros(scores.shape[0], dtype=int)
    acc = 0.0
    # capacity checks share _INT_EPS so a float-noise cap like 0.9*10
    # keeps weight-9 subsets feasible everywhere
    for j in np.argsort(-scores, kind="stable"):
        if acc + w[j] <= l + _INT_EPS:
            y[j] = 1
            acc += w[j]
        else:
            break
    return y


def proxy_selection(case: KnapsackCase, net: MlpNetwork,
                    alpha, beta) -> np.ndarray:
    s = forward(net, scaled_inputs(case, alpha, beta))
    return greedy_repair(s, case.w, float(alpha) * case.l)


def proxy_value(case: KnapsackCase, net: MlpNetwork, alpha, beta) -> float:
    """Scaled value collected by the repaired proxy selection."""
    y = proxy_selection(case, net, alpha, beta)
    return float((np.asarray(beta, dtype=float) * case.v) @ y)


def knapsack_exact(v, w, l):
    """Optimal value and an optimal selection, (value, y).

    Enumerates all subsets up to 25 items (ties resolved toward the
    lexicographically first selection); beyond that falls back to
    weight-indexed dynamic programming, which requires integer weights.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape[0] <= _ENUM_MAX:
        return _exact_enum(v, w, l)
    return _exact_dp(v, w, l)


def _exact_enum(v, w, l):
    K = v.shape[0]
    shifts = np.arange(K, dtype=np.int64)
    best_val, best_mask = 0.0, 0
    total = 1 << K
    for start in range(0, total, _ENUM_CHUNK):
        masks = np.arange(start, min(start + _ENUM_CHUNK, total),
                          dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(float)
        ok = bits @ w <= l + _INT_EPS
        if not np.any(ok):
            continue
        vals = bits @ v
        vals[~ok] = -np.inf
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_mask = float(vals[i]), int(masks[i])
    y = (best_mask >> shifts) & 1
    return best_val, y.astype(int)


def _exact_dp(v, w, l):
    K = v.shape[0]
    wi = np.rint(w).astype(np.int64)
    if np.any(np.abs(w - wi) > 1e-6):
        raise ValueError("dynamic program needs integer weights")
    cap = int(np.floor(l + _INT_EPS))
    if cap < 0:
        raise ValueError("negative capacity")
    dp = np.zeros(cap + 1)
    take = np.zeros((K, cap + 1), dtype=bool)
    for i in range(K):
        if wi[i] > cap:
            continue
        cand = dp[:cap + 1 - wi[i]] + v[i]
        better = cand > dp[wi[i]:]
        dp[wi[i]:][better] = cand[better]
        take[i, wi[i]:][better] = True
    c = int(np.argmax(dp))
    best = float(dp[c])
    y = np.zeros(K, dtype=int)
    for i in range(K - 1, -1, -1):
        if take[i, c]:
            y[i] = 1
            c -= int(wi[i])
    return best, y


def _require_integer(arr, what):
    arr = np.asarray(arr, dtype=float)
    if np.any(np.abs(arr - np.rint(arr)) > _INT_EPS):
        raise ValueError(f"{what} must be integral for the halting rows")


@dataclass(frozen=True)
class KnapsackModel:
    """Gap-maximization MILP over the latent box, plus index bookkeeping.

    The objective is (scaled optimal value) - (scaled proxy value): the
    free selection block carries the exact feasible set, the permuted
    prefix block pins the proxy selection to the greedy repair.
    """

    problem: MilpProblem
    case: KnapsackCase
    net: MlpNetwork
    domain: KnapsackDomain
    ctx: EncodingContext = field(repr=False)
    alpha: int
    beta: tuple
    vscaled: tuple
    lscaled: int
    cap_bins: tuple        # unary block for the integer capacity
    cap: int               # floor(alpha * l)
    scores: tuple
    perm: tuple            # K rows of K permutation binaries
    t_sort: tuple          # perm[k][j] * scores[j] products
    stilde: tuple
    prefix: tuple
    ytilde: tuple
    q_sel: tuple           # perm[k][j] * ytilde[k] products
    yhat: tuple
    rhat: tuple            # beta[j] * yhat[j] products
    y_free: tuple
    z_free: tuple          # beta[j] * y_free[j] products

    @property
    def latent_idx(self) -> tuple:
        return (self.alpha,) + self.beta

    def latent_of(self, x) -> tuple:
        x = np.asarray(x)
        return float(x[self.alpha]), x[list(self.beta)].astype(float)

    def warm_start_from_latent(self, alpha, beta) -> np.ndarray:
        """Complete a latent point to a full assignment.

        Follows the forward pass exactly (greedy repair against the
        floored capacity), so the start is feasible anywhere in the
        domain.
        """
        alpha = float(alpha)
        beta = np.asarray(beta, dtype=float)
        if not self.domain.contains(alpha, beta):
            raise ValueError("latent point outside the domain")
        case = self.case
        K = case.K
        s = forward(self.net, scaled_inputs(case, alpha, beta))
        cap = alpha * case.l
        y_rep = greedy_repair(s, case.w, cap)
        order = np.argsort(-s, kind="stable")
        assign = {self.alpha: alpha}
        for col, b in zip(self.beta, beta):
            assign[col] = float(b)
        c_int = int(np.floor(cap + _INT_EPS))
        c_base = int(round(self.problem.lp.lb[self.cap]))
        for i, col in enumerate(self.cap_bins):
            assign[col] = 1.0 if i < c_int - c_base else 0.0
        for k in range(K):
            sel = int(order[k])
            for j in range(K):
                hit = 1.0 if j == sel else 0.0
                assign[self.perm[k][j]] = hit
                assign[self.t_sort[k][j]] = hit * s[j]
            yk = float(y_rep[sel])
            assign[self.ytilde[k]] = yk
            for j in range(K):
                assign[self.q_sel[k][j]] = yk * assign[self.perm[k][j]]
        for j in range(K):
            assign[self.rhat[j]] = beta[j] * y_rep[j]
        _, y_opt = knapsack_exact(beta * case.v, case.w, cap)
        for j in range(K):
            assign[self.y_free[j]] = float(y_opt[j])
            assign[self.z_free[j]] = beta[j] * y_opt[j]
        return self.ctx.complete(assign)

    def with_warm_start(self, alpha, beta) -> "KnapsackModel":
        x = self.warm_start_from_latent(alpha, beta)
        return replace(self, problem=replace(self.problem, warm_start=x))


def build_knapsack_compact_milp(case: KnapsackCase, net: MlpNetwork,
                                domain: KnapsackDomain,
                                bounds=None) -> KnapsackModel:
    """Exact gap MILP for the greedy-repair proxy.

    Requires integer w and l.  `bounds` (a LayerBounds over the scaled
    inputs) tightens the score-product McCormick rows; defaults to
    interval propagation.
    """
    if domain.K != case.K:
        raise ValueError("domain/case size mismatch")
    if net.n_in != case.K + 1 or net.n_out != case.K:
        raise ValueError("network must map K+1 scaled inputs to K scores")
    _require_integer(case.w, "item weights")
    _require_integer([case.l], "reference capacity")
    K, u, w, l = case.K, domain.u, case.w, case.l

    ctx = EncodingContext()
    alpha = ctx.new_var(1.0 - u, 1.0 + u, "alpha")
    beta = tuple(ctx.new_var(1.0 - u, 1.0 + u, f"beta{j}")
                 for j in range(K))
    vscaled = tuple(ctx.affine_var({beta[j]: case.v[j]}, name=f"vsc{j}")
                    for j in range(K))
    lscaled = ctx.affine_var({alpha: l}, name="lsc")
    # integer weights only ever compare against floor(alpha * l), so a
    # small unary block makes the halting rows exact on the whole
    # alpha range (not just where alpha * l happens to be integral)
    c_lo = int(np.floor((1.0 - u) * l + _INT_EPS))
    c_hi = int(np.floor((1.0 + u) * l + _INT_EPS))
    cap_bins = tuple(ctx.new_binary(f"cap{i}") for i in range(c_hi - c_lo))
    if cap_bins:
        cap = ctx.affine_var({b: 1.0 for b in cap_bins}, const=float(c_lo),
                             name="cap")
    else:
        cap = ctx.new_var(float(c_lo), float(c_lo), "cap",
                          rule=("const", float(c_lo)))
    # cap = floor(alpha * l): the LE side mirrors the forward pass's
    # capacity slack, the GE side pins cap up to the floor.  _CAP_TOL
    # drops a sliver of alpha just below each integer crossing (harmless:
    # the gap is constant across a floor cell) and keeps branch children
    # that contradict these rows infeasible by far more than the solver
    # tolerances -- a 1e-6 margin lands in the simplex's feasibility
    # grey zone and dies in certification instead of pruning cleanly.
    ctx.add_row({cap: 1.0, lscaled: -1.0}, REL_LE, _INT_EPS)
    ctx.add_row({cap: 1.0, lscaled: -1.0}, REL_GE, _CAP_TOL - 1.0)
    if bounds is None:
        in_lo = np.append((1.0 - u) * case.v, (1.0 - u) * l)
        in_hi = np.append((1.0 + u) * case.v, (1.0 + u) * l)
        bounds = ibp(net, (in_lo, in_hi))
    scores = tuple(encode_network(ctx, net, list(vscaled) + [lscaled],
                                  bounds))
    s_lo, s_hi = bounds.output_lo, bounds.output_hi

    perm = tuple(tuple(ctx.new_binary(f"P{k}_{j}") for j in range(K))
                 for k in range(K))
    for k in range(K):  # doubly stochastic
        ctx.add_row({perm[k][j]: 1.0 for j in range(K)}, REL_EQ, 1.0)
    for j in range(K):
        ctx.add_row({perm[k][j]: 1.0 for k in range(K)}, REL_EQ, 1.0)

    # t[k][j] = perm[k][j] * scores[j], McCormick over the score box
    t_sort = []
    for k in range(K):
        row = []
        for j in range(K):
            lo, hi = float(s_lo[j]), float(s_hi[j])
            t = ctx.new_var(min(lo, 0.0), max(hi, 0.0), f"t{k}_{j}")
            p, s = perm[k][j], scores[j]
            ctx.add_row({t: 1.0, p: -hi}, REL_LE, 0.0)
            ctx.add_row({t: 1.0, p: -lo}, REL_GE, 0.0)
            ctx.add_row({t: 1.0, s: -1.0, p: -lo}, REL_LE, -lo)
            ctx.add_row({t: 1.0, s: -1.0, p: -hi}, REL_GE, -hi)
            row.append(t)
        t_sort.append(tuple(row))
    t_sort = tuple(t_sort)

    stilde = tuple(ctx.affine_var({t: 1.0 for t in t_sort[k]},
                                  name=f"stl{k}") for k in range(K))
    for k in range(K - 1):  # sorted copies descend
        ctx.add_row({stilde[k]: 1.0, stilde[k + 1]: -1.0}, REL_GE, 0.0)

    prefix = tuple(ctx.affine_var(
        {perm[i][j]: w[j] for i in range(k + 1) for j in range(K)},
        name=f"pre{k}") for k in range(K))

    ytilde = tuple(ctx.new_binary(f"ytl{k}") for k in range(K))
    for k in range(K - 1):  # selection is a prefix of the sorted order
        ctx.add_row({ytilde[k]: 1.0, ytilde[k + 1]: -1.0}, REL_GE, 0.0)
    m_stop = (1.0 + u) * l + 1.0
    for k in range(K):  # rejected => prefix already overflows
        ctx.add_row({prefix[k]: 1.0, ytilde[k]: m_stop, cap: -1.0},
                    REL_GE, 1.0)

    # q[k][j] = perm[k][j] * ytilde[k]; yhat maps back to item order
    q_sel = []
    for k in range(K):
        row = []
        for j in range(K):
            q = ctx.new_var(0.0, 1.0, f"q{k}_{j}")
            ctx.add_row({q: 1.0, perm[k][j]: -1.0}, REL_LE, 0.0)
            ctx.add_row({q: 1.0, ytilde[k]: -1.0}, REL_LE, 0.0)
            ctx.add_row({q: 1.0, perm[k][j]: -1.0, ytilde[k]: -1.0},
                        REL_GE, -1.0)
            row.append(q)
        q_sel.append(tuple(row))
    q_sel = tuple(q_sel)
    yhat = tuple(ctx.affine_var({q_sel[k][j]: 1.0 for k in range(K)},
                                lb=0.0, ub=1.0, name=f"yhat{j}")
                 for j in range(K))
    cap_row = {yhat[j]: w[j] for j in range(K)}
    cap_row[cap] = -1.0
    ctx.add_row(cap_row, REL_LE, 0.0)  # taken prefix fits

    def scaled_pick(sel, bcol, name):
        # bcol * sel (sel binary-valued in [0,1], bcol in [1-u, 1+u])
        out = ctx.new_var(0.0, 1.0 + u, name)
        ctx.add_row({out: 1.0, sel: -(1.0 + u)}, REL_LE, 0.0)
        ctx.add_row({out: 1.0, sel: -(1.0 - u)}, REL_GE, 0.0)
        ctx.add_row({out: 1.0, bcol: -1.0, sel: -(1.0 - u)},
                    REL_LE, -(1.0 - u))
        ctx.add_row({out: 1.0, bcol: -1.0, sel: -(1.0 + u)},
                    REL_GE, -(1.0 + u))
        return out

    rhat = tuple(scaled_pick(yhat[j], beta[j], f"rhat{j}")
                 for j in range(K))

    y_free = tuple(ctx.new_binary(f"y{j}") for j in range(K))
    free_cap = {y_free[j]: w[j] for j in range(K)}
    free_cap[cap] = -1.0
    ctx.add_row(free_cap, REL_LE, 0.0)
    z_free = tuple(scaled_pick(y_free[j], beta[j], f"z{j}")
                   for j in range(K))

    objective = {}
    for j in range(K):
        objective[z_free[j]] = case.v[j]
        objective[rhat[j]] = -case.v[j]
    problem = ctx.finalize("max", objective)
    return KnapsackModel(problem=problem, case=case, net=net, domain=domain,
                         ctx=ctx, alpha=alpha, beta=beta, vscaled=vscaled,
                         lscaled=lscaled, cap_bins=cap_bins, cap=cap,
                         scores=scores, perm=perm, t_sort=t_sort,
                         stilde=stilde, prefix=prefix, ytilde=ytilde,
                         q_sel=q_sel, yhat=yhat, rhat=rhat, y_free=y_free,
                         z_free=z_free)


def case_k3() -> KnapsackCase:
    return KnapsackCase(K=3, v=np.array([4.0, 3.0, 2.0]),
                        w=np.array([2.0, 2.0, 1.0]), l=3.0)


def case_k5() -> KnapsackCase:
    # +-10% around capacity 10 sweeps floors {9, 10, 11}, enough to
    # flip several greedy halting patterns
    return KnapsackCase(K=5, v=np.array([8.0, 6.0, 5.0, 3.0, 2.0]),
                        w=np.array([5.0, 4.0, 3.0, 2.0, 2.0]), l=10.0)


DESK_CASES = {"k3": case_k3, "k5": case_k5}
