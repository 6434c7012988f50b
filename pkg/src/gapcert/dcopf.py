"""DC optimal power flow family: parametric LP, proxy layers, MILP builders.

The parametric problem, for load vector d:

    Phi(d) = min  c.p + M_th * sum(xi)
             s.t. sum(p) = sum(d)                  (power balance)
                  H p - xi <= f_bar + H d          (per line, upper)
                  H p + xi >= -f_bar + H d         (per line, lower)
                  p_lo <= p <= p_hi,  xi >= 0

xi are elastic thermal-violation slacks priced at M_th, so the LP stays
feasible whenever total demand fits inside [sum(p_lo), sum(p_hi)].

The proxy is an MLP postprocessed by two feasibility layers: a box
clamp, then a uniform shift delta (found by bisection) re-clamped so the
dispatch meets the balance constraint exactly — a projection onto the
box/hyperplane intersection.  Both layers are piecewise linear, so the
whole proxy admits an exact MILP encoding.

Loads live in a latent box: d = (alpha + beta_i) * d_ref_i with alpha in
[1-u, 1+u] global and beta in [-0.05, 0.05] per bus.  Everything the
verification formulations need is affine in (alpha, beta).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .encodings import (EncodingContext, LayerBounds, encode_clamp,
                        encode_max_of, encode_network, ibp)
from .lp_core import (REL_EQ, REL_GE, REL_LE, LinearProgram, LpSolution,
                      solve_lp)
from .milp import MilpProblem
from .neural import MlpNetwork, forward, input_gradient

BETA_WIDTH = 0.05  # per-bus load deviation, fixed


class ProjectionInfeasible(RuntimeError):
    """Total demand outside [sum(p_lo), sum(p_hi)]: no feasible dispatch."""


@dataclass(frozen=True)
class DcopfCase:
    B: int
    E: int
    c: np.ndarray
    H: np.ndarray          # (E, B) line sensitivities to nodal injections
    f_bar: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    d_ref: np.ndarray
    M_th: float

    def __post_init__(self):
        B, E = int(self.B), int(self.E)
        c = np.asarray(self.c, dtype=float)
        H = np.asarray(self.H, dtype=float).reshape(E, B)
        f_bar = np.asarray(self.f_bar, dtype=float)
        p_lo = np.asarray(self.p_lo, dtype=float)
        p_hi = np.asarray(self.p_hi, dtype=float)
        d_ref = np.asarray(self.d_ref, dtype=float)
        if not (c.size == p_lo.size == p_hi.size == d_ref.size == B):
            raise ValueError("bus-indexed arrays must have length B")
        if f_bar.size != E:
            raise ValueError("f_bar must have length E")
        if np.any(p_lo > p_hi):
            raise ValueError("p_lo > p_hi")
        if E and np.any(f_bar <= 0):
            raise ValueError("f_bar must be positive")
        if not self.M_th > c.max():
            raise ValueError("M_th must exceed max generation cost")
        for nm, arr in (("B", B), ("E", E)):
            object.__setattr__(self, nm, arr)
        for nm, arr in (("c", c), ("H", H), ("f_bar", f_bar),
                        ("p_lo", p_lo), ("p_hi", p_hi), ("d_ref", d_ref)):
            arr.flags.writeable = False
            object.__setattr__(self, nm, arr)
        object.__setattr__(self, "M_th", float(self.M_th))


@dataclass(frozen=True)
class LoadDomain:
    """Latent box over loads: d_i = (alpha + beta_i) * d_ref_i.

    alpha in [1-u, 1+u]; beta_i in [-0.05, 0.05], or frozen to 0 for
    buses listed in frozen_beta.  Realized loads stay positive for every
    latent point (enforced at construction).
    """

    d_ref: np.ndarray
    u: float
    frozen_beta: tuple = ()

    def __post_init__(self):
        d_ref = np.asarray(self.d_ref, dtype=float)
        if np.any(d_ref <= 0):
            raise ValueError("d_ref must be positive")
        u = float(self.u)
        if not 0.0 <= u < 1.0 - BETA_WIDTH:
            raise ValueError(f"u must lie in [0, {1 - BETA_WIDTH})")
        frozen = tuple(sorted({int(i) for i in self.frozen_beta}))
        if frozen and not (0 <= frozen[0] and frozen[-1] < d_ref.size):
            raise ValueError("frozen_beta index out of range")
        d_ref.flags.writeable = False
        object.__setattr__(self, "d_ref", d_ref)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "frozen_beta", frozen)

    @property
    def B(self) -> int:
        return self.d_ref.size

    @property
    def dim(self) -> int:
        return 1 + self.B

    def latent_box(self):
        """(lo, hi) over (alpha, beta_1..beta_B)."""
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        lo[0], hi[0] = 1.0 - self.u, 1.0 + self.u
        lo[1:], hi[1:] = -BETA_WIDTH, BETA_WIDTH
        for i in self.frozen_beta:
            lo[1 + i] = hi[1 + i] = 0.0
        return lo, hi

    def to_load(self, alpha, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return (float(alpha) + beta) * self.d_ref

    def load_box(self):
        lo, hi = self.latent_box()
        return ((lo[0] + lo[1:]) * self.d_ref, (hi[0] + hi[1:]) * self.d_ref)

    def contains(self, alpha, beta, tol=1e-9) -> bool:
        lo, hi = self.latent_box()
        pt = np.concatenate(([alpha], np.asarray(beta, dtype=float)))
        return bool(np.all(pt >= lo - tol) and np.all(pt <= hi + tol))


@dataclass(frozen=True)
class DispatchResult:
    p: np.ndarray
    xi: np.ndarray
    cost: float


def build_opf_lp(case: DcopfCase, d) -> LinearProgram:
    """The dispatch LP at load d; variables are (p, xi)."""
    d = np.asarray(d, dtype=float)
    B, E = case.B, case.E
    n = B + E
    c = np.concatenate([case.c, np.full(E, case.M_th)])
    m = 1 + 2 * E
    A = np.zeros((m, n))
    rel = np.zeros(m, dtype=int)
    b = np.zeros(m)
    A[0, :B] = 1.0
    rel[0] = REL_EQ
    b[0] = d.sum()
    Hd = case.H @ d if E else np.zeros(0)
    for e in range(E):
        A[1 + e, :B] = case.H[e]
        A[1 + e, B + e] = -1.0
        rel[1 + e] = REL_LE
        b[1 + e] = case.f_bar[e] + Hd[e]
        A[1 + E + e, :B] = case.H[e]
        A[1 + E + e, B + e] = 1.0
        rel[1 + E + e] = REL_GE
        b[1 + E + e] = -case.f_bar[e] + Hd[e]
    lb = np.concatenate([case.p_lo, np.zeros(E)])
    ub = np.concatenate([case.p_hi, np.full(E, np.inf)])
    names = tuple(f"p{g}" for g in range(B)) + tuple(
        f"xi{e}" for e in range(E))
    return LinearProgram(sense="min", c=c, A=A, rel=rel, b=b,
                         lb=lb, ub=ub, names=names)


def hypersimplex_delta(p_hat_prime, p_lo, p_hi, D, eps=1e-9):
    """Uniform shift delta with sum(clamp(p' + delta)) = D, by bisection.

    f(delta) = sum(clamp(p' + delta, lo, hi)) is nondecreasing; the
    bracket +-max(p_hi - p_lo) pins f at sum(p_lo) / sum(p_hi) because
    p' is already inside the box.  Converges to the leftmost root;
    stops once the bracket and the balance residual are both below eps
    (at most 200 halvings).
    """
    php = np.asarray(p_hat_prime, dtype=float)
    p_lo = np.asarray(p_lo, dtype=float)
    p_hi = np.asarray(p_hi, dtype=float)
    D = float(D)
    if not (p_lo.sum() - eps <= D <= p_hi.sum() + eps):
        raise ProjectionInfeasible(
            f"demand {D} outside [{p_lo.sum()}, {p_hi.sum()}]")
    radius = float(np.max(p_hi - p_lo)) if php.size else 0.0
    lo, hi = -radius, radius
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = np.clip(php + mid, p_lo, p_hi).sum()
        if hi - lo < eps and abs(f_mid - D) < eps:
            break
        if f_mid >= D:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def proxy_forward(case: DcopfCase, net: MlpNetwork, d,
                  eps=1e-9) -> DispatchResult:
    """Network -> clamp -> balance projection -> violation pricing."""
    d = np.asarray(d, dtype=float)
    p_hat = forward(net, d)
    p_prime = np.clip(p_hat, case.p_lo, case.p_hi)
    delta = hypersimplex_delta(p_prime, case.p_lo, case.p_hi, d.sum(), eps)
    p = np.clip(p_prime + delta, case.p_lo, case.p_hi)
    flow = case.H @ (p - d) if case.E else np.zeros(0)
    xi = np.maximum(np.maximum(flow - case.f_bar, -case.f_bar - flow), 0.0)
    cost = float(case.c @ p + case.M_th * xi.sum())
    return DispatchResult(p=p, xi=xi, cost=cost)


def proxy_subgradient(case: DcopfCase, net: MlpNetwork, d,
                      cost_cotangent: float = 1.0) -> np.ndarray:
    """d(proxy cost)/dd through all layers, active-branch at kinks.

    The projection's Jacobian is diag(m) - m m^T / sum(m) in the
    clamped-output coordinates (m = strictly-unsaturated mask) plus
    m/sum(m) against total demand; all-saturated dispatch contributes
    nothing through the projection.
    """
    d = np.asarray(d, dtype=float)
    p_hat = forward(net, d)
    p_prime = np.clip(p_hat, case.p_lo, case.p_hi)
    delta = hypersimplex_delta(p_prime, case.p_lo, case.p_hi, d.sum())
    pre = p_prime + delta
    p = np.clip(pre, case.p_lo, case.p_hi)
    mc = (p_hat > case.p_lo) & (p_hat < case.p_hi)     # clamp mask
    m = (pre > case.p_lo) & (pre < case.p_hi)          # projection mask
    flow = case.H @ (p - d) if case.E else np.zeros(0)
    # per-line price slope: +M_th over, -M_th under, 0 inside limits
    branch = np.argmax(np.stack([flow - case.f_bar,
                                 -case.f_bar - flow,
                                 np.zeros_like(flow)]), axis=0) \
        if case.E else np.zeros(0, dtype=int)
    s = np.where(branch == 0, case.M_th,
                 np.where(branch == 1, -case.M_th, 0.0)) if case.E else \
        np.zeros(0)
    g = case.c + (case.H.T @ s if case.E else 0.0)     # dcost/dp
    msum = m.sum()
    grad = np.zeros(case.B)
    if msum > 0:
        gm = m * g
        inner = mc * (gm - m * (gm.sum() / msum))
        grad += input_gradient(net, d, inner)
        grad += (gm.sum() / msum) * np.ones(case.B)
    if case.E:
        grad -= case.H.T @ s
    return cost_cotangent * grad


def proxy_output_cotangent(case: DcopfCase, net: MlpNetwork, d,
                           penalty: float):
    """(training loss, dloss/d(raw network output)) at one sample.

    Loss = c.p + penalty*sum(xi) through clamp + projection, with the
    violation priced at `penalty` instead of M_th.
    """
    d = np.asarray(d, dtype=float)
    p_hat = forward(net, d)
    p_prime = np.clip(p_hat, case.p_lo, case.p_hi)
    delta = hypersimplex_delta(p_prime, case.p_lo, case.p_hi, d.sum())
    pre = p_prime + delta
    p = np.clip(pre, case.p_lo, case.p_hi)
    flow = case.H @ (p - d) if case.E else np.zeros(0)
    xi = np.maximum(np.maximum(flow - case.f_bar, -case.f_bar - flow), 0.0)
    loss = float(case.c @ p + penalty * xi.sum())
    s = np.where(flow - case.f_bar > 0, penalty,
                 np.where(-case.f_bar - flow > 0, -penalty, 0.0)) \
        if case.E else np.zeros(0)
    g = case.c + (case.H.T @ s if case.E else 0.0)
    mc = (p_hat > case.p_lo) & (p_hat < case.p_hi)
    m = (pre > case.p_lo) & (pre < case.p_hi)
    msum = m.sum()
    if msum > 0:
        gm = m * g
        cot = mc * (gm - m * (gm.sum() / msum))
    else:
        cot = np.zeros(case.B)
    return loss, cot


def load_subgradient(case: DcopfCase, sol: LpSolution) -> np.ndarray:
    """dPhi/dd from the dispatch LP duals (chain rule through the rhs)."""
    grad = sol.duals[0] * np.ones(case.B)
    if case.E:
        grad += case.H.T @ sol.duals[1:1 + case.E]
        grad += case.H.T @ sol.duals[1 + case.E:1 + 2 * case.E]
    return grad


def latent_subgradient(case: DcopfCase, domain: LoadDomain,
                       sol: LpSolution) -> np.ndarray:
    """dPhi/d(alpha, beta) via d = (alpha + beta) * d_ref."""
    g = load_subgradient(case, sol) * domain.d_ref
    return np.concatenate(([g.sum()], g))


def generate_instances(case: DcopfCase, n: int, seed: int = 0):
    """n solved loads d = (gamma + eta) * d_ref; returns (pairs, skipped).

    gamma ~ U[0.8, 1.2] scalar, eta ~ U[-0.05, 0.05] per bus; draws
    whose dispatch LP is infeasible are skipped (and counted) until n
    solvable instances are collected.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out, skipped = [], 0
    while len(out) < n:
        gamma = rng.uniform(0.8, 1.2)
        eta = rng.uniform(-BETA_WIDTH, BETA_WIDTH, size=case.B)
        d = (gamma + eta) * case.d_ref
        sol = solve_lp(build_opf_lp(case, d))
        if sol.status.name != "OPTIMAL":
            skipped += 1
            if skipped > 100 * n:
                raise RuntimeError("too many infeasible draws")
            continue
        out.append((d, sol))
    return out, skipped


# ---------------------------------------------------------------------------
# verification MILP builders


@dataclass(frozen=True)
class CompactModel:
    """Gap-maximization MILP over the latent box, plus index bookkeeping.

    problem's optimum = max over the domain of (proxy cost - free
    dispatch cost); the free (p, xi) block carries the full dispatch
    feasible set, so at the optimum it prices out to Phi(d).
    """

    problem: MilpProblem
    case: DcopfCase
    net: MlpNetwork
    domain: LoadDomain
    ctx: EncodingContext = field(repr=False)
    alpha: int
    beta: tuple
    d_vars: tuple
    delta: int
    p_tilde: tuple
    xi_tilde: tuple
    p_free: tuple
    xi_free: tuple

    @property
    def latent_idx(self) -> tuple:
        return (self.alpha,) + self.beta

    def latent_of(self, x) -> tuple:
        x = np.asarray(x)
        return float(x[self.alpha]), x[list(self.beta)].astype(float)

    def warm_start_from_latent(self, alpha, beta) -> np.ndarray:
        assign = _proxy_assignment(self, alpha, beta)
        d = self.domain.to_load(alpha, beta)
        sol = solve_lp(build_opf_lp(self.case, d))
        if sol.status.name != "OPTIMAL":
            raise ProjectionInfeasible("dispatch LP infeasible at start")
        B = self.case.B
        for g, j in enumerate(self.p_free):
            assign[j] = sol.x[g]
        for e, j in enumerate(self.xi_free):
            assign[j] = sol.x[B + e]
        return self.ctx.complete(assign)

    def with_warm_start(self, alpha, beta) -> "CompactModel":
        x = self.warm_start_from_latent(alpha, beta)
        return replace(self, problem=replace(self.problem, warm_start=x))


@dataclass(frozen=True)
class BilevelModel:
    """Same gap maximization with the inner LP replaced by its KKT system.

    Stationarity and complementarity (big-M over indicator binaries)
    force the free dispatch block to be optimal, rather than letting
    the objective price it out; M_dual caps the unbounded multipliers.
    """

    problem: MilpProblem
    case: DcopfCase
    net: MlpNetwork
    domain: LoadDomain
    ctx: EncodingContext = field(repr=False)
    alpha: int
    beta: tuple
    d_vars: tuple
    delta: int
    p_tilde: tuple
    xi_tilde: tuple
    p_free: tuple
    xi_free: tuple
    M_dual: float
    dual_lambda: int
    nu_up: tuple
    nu_lo: tuple
    mu_lo: tuple
    mu_hi: tuple
    zeta: tuple
    comp_bins: dict = field(repr=False)  # group -> tuple of binaries

    latent_idx = CompactModel.latent_idx
    latent_of = CompactModel.latent_of

    def warm_start_from_latent(self, alpha, beta) -> np.ndarray:
        assign = _proxy_assignment(self, alpha, beta)
        case = self.case
        d = self.domain.to_load(alpha, beta)
        sol = solve_lp(build_opf_lp(case, d))
        if sol.status.name != "OPTIMAL":
            raise ProjectionInfeasible("dispatch LP infeasible at start")
        B, E = case.B, case.E
        p, xi = sol.x[:B], sol.x[B:]
        for g, j in enumerate(self.p_free):
            assign[j] = p[g]
        for e, j in enumerate(self.xi_free):
            assign[j] = xi[e]
        # duals in multiplier convention (all >= 0)
        assign[self.dual_lambda] = sol.duals[0]
        nu_up = -sol.duals[1:1 + E]          # <= rows: dPhi/db <= 0
        nu_lo = sol.duals[1 + E:1 + 2 * E]   # >= rows: dPhi/db >= 0
        rc = sol.reduced_costs
        mu_lo = np.maximum(rc[:B], 0.0)
        mu_hi = np.maximum(-rc[:B], 0.0)
        zeta = np.maximum(rc[B:], 0.0)
        for arr, idxs in ((nu_up, self.nu_up), (nu_lo, self.nu_lo),
                          (mu_lo, self.mu_lo), (mu_hi, self.mu_hi),
                          (zeta, self.zeta)):
            for k, j in enumerate(idxs):
                assign[j] = max(float(arr[k]), 0.0)
        # indicator = 1 iff the primal constraint is active
        Hd = case.H @ d if E else np.zeros(0)
        Hp = case.H @ p if E else np.zeros(0)
        tol = 1e-7
        act = {
            "nu_up": case.f_bar + Hd - Hp + xi <= tol,
            "nu_lo": Hp + xi - (Hd - case.f_bar) <= tol,
            "mu_lo": p - case.p_lo <= tol,
            "mu_hi": case.p_hi - p <= tol,
            "zeta": xi <= tol,
        }
        for group, flags in act.items():
            for k, j in enumerate(self.comp_bins[group]):
                assign[j] = 1.0 if flags[k] else 0.0
        return self.ctx.complete(assign)

    def with_warm_start(self, alpha, beta) -> "BilevelModel":
        x = self.warm_start_from_latent(alpha, beta)
        return replace(self, problem=replace(self.problem, warm_start=x))


def _proxy_assignment(model, alpha, beta) -> dict:
    """Assign latent + hypersimplex shift; rules fill the proxy chain."""
    beta = np.asarray(beta, dtype=float)
    if not model.domain.contains(alpha, beta):
        raise ValueError("latent point outside the domain box")
    case = model.case
    d = model.domain.to_load(alpha, beta)
    p_hat = forward(model.net, d)
    p_prime = np.clip(p_hat, case.p_lo, case.p_hi)
    delta = hypersimplex_delta(p_prime, case.p_lo, case.p_hi, d.sum())
    assign = {model.alpha: float(alpha), model.delta: float(delta)}
    for k, j in enumerate(model.beta):
        assign[j] = beta[k]
    return assign


def _encode_proxy(ctx: EncodingContext, case: DcopfCase, net: MlpNetwork,
                  domain: LoadDomain, bounds: LayerBounds | None):
    """Shared front half: latent box -> loads -> net -> repair -> cost."""
    if net.n_in != case.B or net.n_out != case.B:
        raise ValueError("network shape does not match case")
    lo, hi = domain.latent_box()
    alpha = ctx.new_var(lo[0], hi[0], name="alpha")
    beta = tuple(ctx.new_var(lo[1 + i], hi[1 + i], name=f"beta{i}")
                 for i in range(case.B))
    d_vars = tuple(
        ctx.affine_var({alpha: domain.d_ref[i], beta[i]: domain.d_ref[i]},
                       0.0, name=f"d{i}")
        for i in range(case.B))
    if bounds is None:
        bounds = ibp(net, domain.load_box())
    p_hat = encode_network(ctx, net, d_vars, bounds)
    p_prime = tuple(
        encode_clamp(ctx, p_hat[g], case.p_lo[g], case.p_hi[g],
                     ctx.bounds(p_hat[g]))
        for g in range(case.B))
    radius = float(np.max(case.p_hi - case.p_lo))
    delta = ctx.new_var(-radius, radius, name="delta")
    p_tilde = []
    for g in range(case.B):
        lo_g, hi_g = ctx.bounds(p_prime[g])
        t = ctx.affine_var({p_prime[g]: 1.0, delta: 1.0}, 0.0,
                           lb=lo_g - radius, ub=hi_g + radius)
        p_tilde.append(encode_clamp(ctx, t, case.p_lo[g], case.p_hi[g],
                                    ctx.bounds(t)))
    p_tilde = tuple(p_tilde)
    # projection fixed point: shifted clamped dispatch meets total demand
    bal = {j: 1.0 for j in p_tilde}
    for j in d_vars:
        bal[j] = bal.get(j, 0.0) - 1.0
    ctx.add_row(bal, REL_EQ, 0.0)
    xi_tilde = []
    zero = ctx.new_var(0.0, 0.0, name="zero", rule=("const", 0.0))
    for e in range(case.E):
        coefs = {}
        for g in range(case.B):
            if case.H[e, g] != 0.0:
                coefs[p_tilde[g]] = case.H[e, g]
                coefs[d_vars[g]] = coefs.get(d_vars[g], 0.0) - case.H[e, g]
        if not coefs:
            coefs = {zero: 1.0}
        f_e = ctx.affine_var(coefs, 0.0, name=f"flow{e}")
        flo, fhi = ctx.bounds(f_e)
        over = ctx.affine_var({f_e: 1.0}, -case.f_bar[e],
                              lb=flo - case.f_bar[e], ub=fhi - case.f_bar[e])
        under = ctx.affine_var({f_e: -1.0}, -case.f_bar[e],
                               lb=-fhi - case.f_bar[e],
                               ub=-flo - case.f_bar[e])
        xi_tilde.append(encode_max_of(
            ctx, [over, under, zero],
            [ctx.bounds(over), ctx.bounds(under), (0.0, 0.0)]))
    return alpha, beta, d_vars, delta, p_tilde, tuple(xi_tilde)


def _free_block(ctx: EncodingContext, case: DcopfCase, d_vars):
    """Free dispatch variables constrained to the OPF feasible set."""
    p = tuple(ctx.new_var(case.p_lo[g], case.p_hi[g], name=f"p{g}")
              for g in range(case.B))
    d_lo = np.array([ctx.bounds(j)[0] for j in d_vars])
    d_hi = np.array([ctx.bounds(j)[1] for j in d_vars])
    xi = []
    bal = {j: 1.0 for j in p}
    for j in d_vars:
        bal[j] = bal.get(j, 0.0) - 1.0
    ctx.add_row(bal, REL_EQ, 0.0)
    for e in range(case.E):
        h = case.H[e]
        span_hi = float(np.maximum(h, 0) @ (case.p_hi - d_lo)
                        + np.minimum(h, 0) @ (case.p_lo - d_hi))
        span_lo = float(np.maximum(h, 0) @ (case.p_lo - d_hi)
                        + np.minimum(h, 0) @ (case.p_hi - d_lo))
        xi_ub = max(0.0, span_hi - case.f_bar[e],
                    -case.f_bar[e] - span_lo)
        x = ctx.new_var(0.0, xi_ub, name=f"xi{e}")
        xi.append(x)
        up = {p[g]: h[g] for g in range(case.B) if h[g] != 0.0}
        for g in range(case.B):
            if h[g] != 0.0:
                up[d_vars[g]] = up.get(d_vars[g], 0.0) - h[g]
        lo_row = dict(up)
        up[x] = up.get(x, 0.0) - 1.0
        ctx.add_row(up, REL_LE, case.f_bar[e])
        lo_row[x] = lo_row.get(x, 0.0) + 1.0
        ctx.add_row(lo_row, REL_GE, -case.f_bar[e])
    return p, tuple(xi)


def _gap_objective(case, p_tilde, xi_tilde, p_free, xi_free) -> dict:
    obj = {}
    for g in range(case.B):
        obj[p_tilde[g]] = obj.get(p_tilde[g], 0.0) + case.c[g]
        obj[p_free[g]] = obj.get(p_free[g], 0.0) - case.c[g]
    for e in range(case.E):
        obj[xi_tilde[e]] = obj.get(xi_tilde[e], 0.0) + case.M_th
        obj[xi_free[e]] = obj.get(xi_free[e], 0.0) - case.M_th
    return obj


def build_compact_milp(case: DcopfCase, net: MlpNetwork, domain: LoadDomain,
                       bounds: LayerBounds | None = None) -> CompactModel:
    """max (proxy cost - dispatch cost) with a plain-feasible free block."""
    _check_domain_capacity(case, domain)
    ctx = EncodingContext()
    alpha, beta, d_vars, delta, p_tilde, xi_tilde = _encode_proxy(
        ctx, case, net, domain, bounds)
    p_free, xi_free = _free_block(ctx, case, d_vars)
    obj = _gap_objective(case, p_tilde, xi_tilde, p_free, xi_free)
    prob = ctx.finalize("max", obj)
    return CompactModel(problem=prob, case=case, net=net, domain=domain,
                        ctx=ctx, alpha=alpha, beta=beta, d_vars=d_vars,
                        delta=delta, p_tilde=p_tilde, xi_tilde=xi_tilde,
                        p_free=p_free, xi_free=xi_free)


def build_bilevel_milp(case: DcopfCase, net: MlpNetwork, domain: LoadDomain,
                       bounds: LayerBounds | None = None,
                       M_dual: float | None = None) -> BilevelModel:
    """Gap maximization with KKT optimality of the free dispatch block.

    Adds dual variables, stationarity rows, and big-M complementarity
    with one indicator binary per inequality (3E + 2B extra binaries
    over the compact builder).  M_dual defaults to 10*M_th and must
    dominate the balance/bound multipliers for the reformulation to be
    exact; thermal multipliers are bounded by M_th by stationarity.
    """
    _check_domain_capacity(case, domain)
    if M_dual is None:
        M_dual = 10.0 * case.M_th
    M_dual = float(M_dual)
    ctx = EncodingContext()
    alpha, beta, d_vars, delta, p_tilde, xi_tilde = _encode_proxy(
        ctx, case, net, domain, bounds)
    p_free, xi_free = _free_block(ctx, case, d_vars)
    B, E = case.B, case.E

    lam = ctx.new_var(-M_dual, M_dual, name="lambda")
    nu_up = tuple(ctx.new_var(0.0, case.M_th, name=f"nu_up{e}")
                  for e in range(E))
    nu_lo = tuple(ctx.new_var(0.0, case.M_th, name=f"nu_lo{e}")
                  for e in range(E))
    mu_lo = tuple(ctx.new_var(0.0, M_dual, name=f"mu_lo{g}")
                  for g in range(B))
    mu_hi = tuple(ctx.new_var(0.0, M_dual, name=f"mu_hi{g}")
                  for g in range(B))
    zeta = tuple(ctx.new_var(0.0, case.M_th, name=f"zeta{e}")
                 for e in range(E))

    # stationarity wrt p_g: lambda + H^T(nu_lo - nu_up) + mu_lo - mu_hi = c
    for g in range(B):
        row = {lam: 1.0, mu_lo[g]: 1.0, mu_hi[g]: -1.0}
        for e in range(E):
            if case.H[e, g] != 0.0:
                row[nu_lo[e]] = row.get(nu_lo[e], 0.0) + case.H[e, g]
                row[nu_up[e]] = row.get(nu_up[e], 0.0) - case.H[e, g]
        ctx.add_row(row, REL_EQ, case.c[g])
    # stationarity wrt xi_e: nu_up + nu_lo + zeta = M_th
    for e in range(E):
        ctx.add_row({nu_up[e]: 1.0, nu_lo[e]: 1.0, zeta[e]: 1.0},
                    REL_EQ, case.M_th)

    d_lo = np.array([ctx.bounds(j)[0] for j in d_vars])
    d_hi = np.array([ctx.bounds(j)[1] for j in d_vars])
    comp_bins = {}

    def complement(group, dual_j, dual_cap, slack_coefs, slack_const,
                   slack_ub, e):
        # dual <= cap * bin ; slack <= ub * (1 - bin)
        bb = ctx.new_binary(name=f"cb_{group}{e}")
        comp_bins.setdefault(group, []).append(bb)
        ctx.add_row({dual_j: 1.0, bb: -dual_cap}, REL_LE, 0.0)
        row = dict(slack_coefs)
        row[bb] = row.get(bb, 0.0) + slack_ub
        ctx.add_row(row, REL_LE, slack_ub - slack_const)

    for e in range(E):
        h = case.H[e]
        span_hi = float(np.maximum(h, 0) @ (case.p_hi - d_lo)
                        + np.minimum(h, 0) @ (case.p_lo - d_hi))
        span_lo = float(np.maximum(h, 0) @ (case.p_lo - d_hi)
                        + np.minimum(h, 0) @ (case.p_hi - d_lo))
        xi_ub = ctx.bounds(xi_free[e])[1]
        # slack of upper row: f_bar + H d - H p + xi  >= 0
        coefs = {xi_free[e]: 1.0}
        for g in range(B):
            if h[g] != 0.0:
                coefs[d_vars[g]] = coefs.get(d_vars[g], 0.0) + h[g]
                coefs[p_free[g]] = coefs.get(p_free[g], 0.0) - h[g]
        complement("nu_up", nu_up[e], case.M_th, coefs, case.f_bar[e],
                   case.f_bar[e] - span_lo + xi_ub, e)
        # slack of lower row: H p + xi - H d + f_bar >= 0
        coefs = {xi_free[e]: 1.0}
        for g in range(B):
            if h[g] != 0.0:
                coefs[p_free[g]] = coefs.get(p_free[g], 0.0) + h[g]
                coefs[d_vars[g]] = coefs.get(d_vars[g], 0.0) - h[g]
        complement("nu_lo", nu_lo[e], case.M_th, coefs, case.f_bar[e],
                   case.f_bar[e] + span_hi + xi_ub, e)
        complement("zeta", zeta[e], case.M_th, {xi_free[e]: 1.0}, 0.0,
                   xi_ub, e)
    for g in range(B):
        width = case.p_hi[g] - case.p_lo[g]
        complement("mu_lo", mu_lo[g], M_dual,
                   {p_free[g]: 1.0}, -case.p_lo[g], width, g)
        complement("mu_hi", mu_hi[g], M_dual,
                   {p_free[g]: -1.0}, case.p_hi[g], width, g)

    comp_bins = {k: tuple(v) for k, v in comp_bins.items()}
    obj = _gap_objective(case, p_tilde, xi_tilde, p_free, xi_free)
    prob = ctx.finalize("max", obj)
    return BilevelModel(problem=prob, case=case, net=net, domain=domain,
                        ctx=ctx, alpha=alpha, beta=beta, d_vars=d_vars,
                        delta=delta, p_tilde=p_tilde, xi_tilde=xi_tilde,
                        p_free=p_free, xi_free=xi_free, M_dual=M_dual,
                        dual_lambda=lam, nu_up=nu_up, nu_lo=nu_lo,
                        mu_lo=mu_lo, mu_hi=mu_hi, zeta=zeta,
                        comp_bins=comp_bins)


def _check_domain_capacity(case: DcopfCase, domain: LoadDomain):
    d_lo, d_hi = domain.load_box()
    if d_hi.sum() > case.p_hi.sum() + 1e-9 or \
            d_lo.sum() < case.p_lo.sum() - 1e-9:
        raise ProjectionInfeasible(
            "domain demand range exceeds dispatchable capacity")


# ---------------------------------------------------------------------------
# desk cases and JSON I/O


def case_1bus() -> DcopfCase:
    return DcopfCase(B=1, E=0, c=[2.0], H=np.zeros((0, 1)), f_bar=[],
                     p_lo=[0.0], p_hi=[10.0], d_ref=[5.0], M_th=10.0)


def case_2bus() -> DcopfCase:
    return DcopfCase(B=2, E=1, c=[1.0, 3.0], H=[[1.0, 0.0]], f_bar=[2.0],
                     p_lo=[0.0, 0.0], p_hi=[8.0, 8.0], d_ref=[3.0, 4.0],
                     M_th=10.0)


def case_3bus() -> DcopfCase:
    H = [[1 / 3, -1 / 3, 0.0],
         [2 / 3, 1 / 3, 0.0],
         [1 / 3, 2 / 3, 0.0]]
    return DcopfCase(B=3, E=3, c=[1.0, 2.0, 4.0], H=H,
                     f_bar=[1.5, 2.5, 2.5], p_lo=[0.0, 0.0, 0.0],
                     p_hi=[12.0, 6.0, 6.0], d_ref=[2.0, 3.0, 4.0],
                     M_th=20.0)


DESK_CASES = {"1bus": case_1bus, "2bus": case_2bus, "3bus": case_3bus}


def save_case(case: DcopfCase, path):
    doc = {"B": case.B, "E": case.E, "c": list(case.c),
           "H": [float(v) for v in case.H.ravel()],
           "f_bar": list(case.f_bar), "p_lo": list(case.p_lo),
           "p_hi": list(case.p_hi), "d_ref": list(case.d_ref),
           "M_th": case.M_th}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_case(path) -> DcopfCase:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return DcopfCase(B=doc["B"], E=doc["E"], c=doc["c"],
                         H=np.array(doc["H"], dtype=float),
                         f_bar=doc["f_bar"], p_lo=doc["p_lo"],
                         p_hi=doc["p_hi"], d_ref=doc["d_ref"],
                         M_th=doc["M_th"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed case file: {exc}") from exc
