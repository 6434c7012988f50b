"""Mixed-integer encodings of piecewise-linear blocks.

Builds MILP constraint systems for ReLU networks and the feasibility
operators around them (clamp, elementwise max), with big-M constants
taken from per-neuron interval bounds — never a global constant.  Bound
tightening comes in two flavors: cheap interval propagation (ibp) and
per-neuron optimization (obbt), the latter solving two subproblems per
neuron over the partially-encoded prefix of the network.

All encodings are exact: the projection of the feasible set onto
(input, output) coordinates is the graph of the encoded function.
Stably-active/inactive ReLUs are folded away by default; the flag
`eliminate_stable=False` keeps the full gadget for differential tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp_core import REL_EQ, REL_GE, REL_LE, LinearProgram, solve_lp
from .milp import MilpLimits, MilpProblem, solve_milp


@dataclass(frozen=True)
class LayerBounds:
    """Valid interval bounds for a network: input box + pre-activations."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    pre: tuple  # one (lo, hi) array pair per layer

    def __post_init__(self):
        lo = np.asarray(self.input_lo, dtype=float)
        hi = np.asarray(self.input_hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi + 1e-12):
            raise ValueError("bad input box")
        object.__setattr__(self, "input_lo", lo)
        object.__setattr__(self, "input_hi", hi)
        object.__setattr__(self, "pre", tuple(
            (np.asarray(a, dtype=float), np.asarray(b, dtype=float))
            for a, b in self.pre))

    @property
    def output_lo(self) -> np.ndarray:
        return self.pre[-1][0]  # final activation is identity

    @property
    def output_hi(self) -> np.ndarray:
        return self.pre[-1][1]


class EncodingContext:
    """Growing MILP under construction: columns, rows, binaries, names.

    Variables are referred to by integer column index.  `affine_var`
    introduces an auxiliary equal to an affine expression of existing
    columns; interval arithmetic supplies its bounds when not given.
    """

    def __init__(self, eliminate_stable: bool = True):
        self.eliminate_stable = eliminate_stable
        self._lb, self._ub, self._names = [], [], []
        self._rows = []  # (coef dict, rel, rhs)
        self._binaries = []
        self._rules = {}  # idx -> completion rule, see complete()
        self.relu_total = 0
        self.relu_stable = 0

    # -- columns ---------------------------------------------------------
    def new_var(self, lb, ub, name=None, rule=None) -> int:
        lb, ub = float(lb), float(ub)
        if lb > ub:
            raise ValueError(f"empty variable domain [{lb}, {ub}]")
        self._lb.append(lb)
        self._ub.append(ub)
        self._names.append(name or f"v{len(self._lb) - 1}")
        j = len(self._lb) - 1
        if rule is not None:
            self._rules[j] = rule
        return j

    def new_binary(self, name=None) -> int:
        j = self.new_var(0.0, 1.0, name=name or f"d{len(self._binaries)}")
        self._binaries.append(j)
        return j

    def bounds(self, j: int):
        return self._lb[j], self._ub[j]

    def set_bounds(self, j: int, lb, ub):
        if lb > ub:
            raise ValueError("empty domain")
        self._lb[j], self._ub[j] = float(lb), float(ub)

    # -- rows --------------------------------------------------------------
    def add_row(self, coefs: dict, rel: int, rhs: float):
        if not coefs:
            raise ValueError("empty row")
        self._rows.append(({int(k): float(v) for k, v in coefs.items()},
                           int(rel), float(rhs)))

    def affine_var(self, coefs: dict, const: float = 0.0, lb=None, ub=None,
                   name=None) -> int:
        """New z with z = sum coefs[j]*x_j + const enforced by an eq row."""
        if lb is None or ub is None:
            acc_lo = acc_hi = const
            for j, a in coefs.items():
                l, u = self._lb[j], self._ub[j]
                acc_lo += a * l if a >= 0 else a * u
                acc_hi += a * u if a >= 0 else a * l
            lb = acc_lo if lb is None else lb
            ub = acc_hi if ub is None else ub
        coefs = {int(j): float(a) for j, a in coefs.items()}
        z = self.new_var(lb, ub, name=name, rule=("affine", coefs, const))
        row = {j: -a for j, a in coefs.items()}
        row[z] = 1.0
        self.add_row(row, REL_EQ, const)
        return z

    def size(self):
        nb = len(self._binaries)
        return len(self._lb) - nb, nb, len(self._rows)

    # -- warm-start completion ---------------------------------------------
    def complete(self, assign: dict) -> np.ndarray:
        """Extend input/free-variable values to a full assignment.

        Every auxiliary column created by affine_var / encode_relu /
        encode_max_of carries a rule describing its value as a function
        of earlier columns; fixed columns default to their bound.  Any
        remaining column must appear in `assign`, keyed by index.
        """
        n = len(self._lb)
        vals = np.empty(n)
        for j in range(n):
            if j in assign:
                vals[j] = float(assign[j])
                continue
            rule = self._rules.get(j)
            if rule is None:
                if self._lb[j] == self._ub[j]:
                    vals[j] = self._lb[j]
                    continue
                raise KeyError(f"no value or rule for column "
                               f"{self._names[j]} (#{j})")
            kind = rule[0]
            if kind == "affine":
                _, coefs, const = rule
                vals[j] = sum(a * vals[k] for k, a in coefs.items()) + const
            elif kind == "const":
                vals[j] = rule[1]
            elif kind == "relu":
                vals[j] = max(vals[rule[1]], 0.0)
            elif kind == "relu_bin":
                vals[j] = 1.0 if vals[rule[1]] > 0.0 else 0.0
            elif kind == "max":
                vals[j] = max(vals[k] for k in rule[1])
            elif kind == "argmax_bin":
                _, xs, i = rule
                xv = [vals[k] for k in xs]
                vals[j] = 1.0 if i == int(np.argmax(xv)) else 0.0
            else:  # pragma: no cover
                raise AssertionError(f"unknown rule {kind}")
        return vals

    # -- assembly ----------------------------------------------------------
    def finalize(self, sense: str, objective: dict) -> MilpProblem:
        n = len(self._lb)
        m = len(self._rows)
        c = np.zeros(n)
        for j, a in objective.items():
            c[j] = a
        A = np.zeros((m, n))
        rel = np.zeros(m, dtype=int)
        b = np.zeros(m)
        for i, (coefs, r, rhs) in enumerate(self._rows):
            for j, a in coefs.items():
                A[i, j] = a
            rel[i] = r
            b[i] = rhs
        lp = LinearProgram(sense=sense, c=c, A=A, rel=rel, b=b,
                           lb=np.array(self._lb), ub=np.array(self._ub),
                           names=tuple(self._names))
        return MilpProblem(lp=lp, binary_idx=tuple(sorted(self._binaries)))


def encode_relu(ctx: EncodingContext, y_var: int, l: float, u: float,
                name=None) -> int:
    """x = max(y, 0) via the big-M gadget; stable neurons fold to affine.

    Constraints (unstable case, binary d): x >= 0, x >= y, x <= u*d,
    x <= y - l*(1-d).  l, u must be finite bounds on y.
    """
    l, u = float(l), float(u)
    if not (np.isfinite(l) and np.isfinite(u)):
        raise ValueError("encode_relu needs finite bounds; run ibp/obbt")
    if l > u:
        raise ValueError("l > u")
    ctx.relu_total += 1
    if ctx.eliminate_stable:
        if u <= 0.0:  # stably inactive: output pinned at 0
            ctx.relu_stable += 1
            return ctx.new_var(0.0, 0.0, name=name, rule=("const", 0.0))
        if l >= 0.0:  # stably active: x == y, reuse the column
            ctx.relu_stable += 1
            return y_var
    x = ctx.new_var(max(l, 0.0), max(u, 0.0), name=name,
                    rule=("relu", y_var))
    d = ctx.new_binary()
    ctx._rules[d] = ("relu_bin", y_var)
    ctx.add_row({x: 1.0, y_var: -1.0}, REL_GE, 0.0)
    ctx.add_row({x: 1.0, d: -u}, REL_LE, 0.0)
    # x <= y - l(1-d)  <=>  x - y - l*d <= -l
    ctx.add_row({x: 1.0, y_var: -1.0, d: -l}, REL_LE, -l)
    return x


def encode_clamp(ctx: EncodingContext, y_var: int, lo: float, hi: float,
                 bounds) -> int:
    """x = min(max(y, lo), hi) as hi - relu((hi-lo) - relu(y - lo))."""
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise ValueError("lo > hi")
    l, u = float(bounds[0]), float(bounds[1])
    t1 = ctx.affine_var({y_var: 1.0}, -lo, lb=l - lo, ub=u - lo)
    r1 = encode_relu(ctx, t1, l - lo, u - lo)
    r1_lo, r1_hi = max(0.0, l - lo), max(0.0, u - lo)
    span = hi - lo
    t2 = ctx.affine_var({r1: -1.0}, span, lb=span - r1_hi, ub=span - r1_lo)
    r2 = encode_relu(ctx, t2, span - r1_hi, span - r1_lo)
    r2_lo, r2_hi = max(0.0, span - r1_hi), max(0.0, span - r1_lo)
    return ctx.affine_var({r2: -1.0}, hi, lb=hi - r2_hi, ub=hi - r2_lo)


def encode_max_of(ctx: EncodingContext, exprs, bounds) -> int:
    """z = max of the given columns, big-M + one-hot selector binaries."""
    exprs = list(exprs)
    lows = [float(b[0]) for b in bounds]
    highs = [float(b[1]) for b in bounds]
    if not all(np.isfinite(lows)) or not all(np.isfinite(highs)):
        raise ValueError("encode_max_of needs finite bounds")
    U = max(highs)
    z = ctx.new_var(max(lows), U, rule=("max", tuple(exprs)))
    sel = {}
    for i, (x, l) in enumerate(zip(exprs, lows)):
        ctx.add_row({z: 1.0, x: -1.0}, REL_GE, 0.0)
        d = ctx.new_binary()
        ctx._rules[d] = ("argmax_bin", tuple(exprs), i)
        # z <= x + (U - l)(1 - d)
        ctx.add_row({z: 1.0, x: -1.0, d: U - l}, REL_LE, U - l)
        sel[d] = 1.0
    ctx.add_row(sel, REL_EQ, 1.0)
    return z


def encode_network(ctx: EncodingContext, net, in_vars, bounds: LayerBounds):
    """Encode every layer; returns the output columns.

    `bounds.pre` supplies per-neuron big-M constants and must be valid
    for the box the input columns range over.
    """
    h = list(in_vars)
    if len(h) != net.n_in:
        raise ValueError("input variable count mismatch")
    for t, layer in enumerate(net.layers):
        lo_t, hi_t = bounds.pre[t]
        nxt = []
        for r in range(layer.W.shape[0]):
            coefs = {h[c]: layer.W[r, c] for c in range(layer.W.shape[1])
                     if layer.W[r, c] != 0.0}
            if coefs:
                z = ctx.affine_var(coefs, layer.b[r],
                                   lb=lo_t[r], ub=hi_t[r])
            else:
                z = ctx.new_var(layer.b[r], layer.b[r])
            if layer.act == "relu":
                z = encode_relu(ctx, z, lo_t[r], hi_t[r])
            nxt.append(z)
        h = nxt
    return h


def ibp(net, input_box) -> LayerBounds:
    """Interval bounds per pre-activation: W+ . u + W- . l + b."""
    lo = np.asarray(input_box[0], dtype=float)
    hi = np.asarray(input_box[1], dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("bad input box")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("input box must be finite")
    pre = []
    h_lo, h_hi = lo, hi
    for layer in net.layers:
        Wp = np.maximum(layer.W, 0.0)
        Wm = np.minimum(layer.W, 0.0)
        z_lo = Wp @ h_lo + Wm @ h_hi + layer.b
        z_hi = Wp @ h_hi + Wm @ h_lo + layer.b
        pre.append((z_lo, z_hi))
        if layer.act == "relu":
            h_lo, h_hi = np.maximum(z_lo, 0.0), np.maximum(z_hi, 0.0)
        else:
            h_lo, h_hi = z_lo, z_hi
    return LayerBounds(input_lo=lo, input_hi=hi, pre=tuple(pre))


def obbt(net, input_box, relax: bool = True,
         limits: MilpLimits | None = None) -> LayerBounds:
    """Optimization-based tightening, layer by layer, inside the IBP box.

    For each pre-activation, min/max it over the encoding of everything
    upstream (LP relaxation when relax, exact MILP otherwise), then
    intersect with the IBP interval before encoding the layer's ReLUs.
    """
    base = ibp(net, input_box)
    limits = limits or MilpLimits()
    ctx = EncodingContext()
    h = [ctx.new_var(lo, hi) for lo, hi in zip(base.input_lo, base.input_hi)]
    tight = []
    for t, layer in enumerate(net.layers):
        lo_t = base.pre[t][0].copy()
        hi_t = base.pre[t][1].copy()
        zs = []
        for r in range(layer.W.shape[0]):
            coefs = {h[c]: layer.W[r, c] for c in range(layer.W.shape[1])
                     if layer.W[r, c] != 0.0}
            if coefs:
                z = ctx.affine_var(coefs, layer.b[r],
                                   lb=lo_t[r], ub=hi_t[r])
                for sense, side in (("min", 0), ("max", 1)):
                    val = _obbt_bound(ctx, z, sense, relax, limits)
                    if side == 0:
                        lo_t[r] = min(max(lo_t[r], val), hi_t[r])
                    else:
                        hi_t[r] = max(min(hi_t[r], val), lo_t[r])
                ctx.set_bounds(z, lo_t[r], hi_t[r])
            else:
                z = ctx.new_var(layer.b[r], layer.b[r])
                lo_t[r] = hi_t[r] = layer.b[r]
            zs.append(z)
        tight.append((lo_t, hi_t))
        if layer.act == "relu":
            h = [encode_relu(ctx, z, lo_t[r], hi_t[r])
                 for r, z in enumerate(zs)]
        else:
            h = zs
    return LayerBounds(input_lo=base.input_lo, input_hi=base.input_hi,
                       pre=tuple(tight))


def _obbt_bound(ctx, z, sense, relax, limits):
    prob = ctx.finalize(sense, {z: 1.0})
    if relax:
        sol = solve_lp(prob.lp)
        if sol.status.name != "OPTIMAL":
            raise RuntimeError(f"OBBT subproblem {sol.status.name}")
        return sol.objective
    msol = solve_milp(prob, limits=limits)
    if msol.status.name != "OPTIMAL":
        raise RuntimeError(f"OBBT subproblem {msol.status.name}")
    return msol.objective
