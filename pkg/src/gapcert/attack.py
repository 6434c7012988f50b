"""Projected-gradient search for high-gap load scenarios.

Maximizes a surrogate gap over the latent box: proxy dispatch cost minus
a max-of-cuts under-approximation of the optimal dispatch cost.  The
cuts come from dispatch-LP duals mapped into latent coordinates, so the
surrogate is cheap (one network pass plus a max) and its ascent needs no
MILP machinery.  Whenever the surrogate improves, the candidate is
re-priced with one dispatch LP, so the incumbent the search reports is
always a genuine achieved gap - a lower bound on the certificate.

Multi-start covers the box (center, then corners, then uniform draws)
and the alpha range can be split into slabs searched independently.
Every piece is deterministic given the seed: the ascent itself uses no
randomness, start points are drawn from per-slab generators, and results
merge in task order regardless of worker count.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dcopf import (build_opf_lp, latent_subgradient, proxy_forward,
                    proxy_subgradient)
from .lp_core import solve_lp

_IMPROVE_TOL = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    step0: float = 1e-3
    decay_after: int = 10     # halt-free iterations before step /= 10
    stop_after: int = 20      # ... before the start gives up
    max_iters: int = 500
    n_starts: int = 8
    n_partitions: int = 1
    n_cuts: int = 64
    workers: int = 1


@dataclass(frozen=True)
class ValueFunctionApprox:
    """Pointwise max of affine cuts anchored at sampled latent points.

    Each cut is (anchor, value, slope) with the slope a latent-space
    subgradient of the dispatch cost, so the max under-approximates the
    true cost everywhere and touches it at every anchor.
    """

    anchors: np.ndarray   # (n, dim)
    values: np.ndarray    # (n,)
    slopes: np.ndarray    # (n, dim)

    def __post_init__(self):
        for arr in ("anchors", "values", "slopes"):
            a = np.asarray(getattr(self, arr), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, arr, a)
        n, dim = self.anchors.shape
        if self.values.shape != (n,) or self.slopes.shape != (n, dim):
            raise ValueError("cut arrays disagree on shape")

    def _cut_values(self, x):
        x = np.asarray(x, dtype=float)
        return self.values + ((x - self.anchors) * self.slopes).sum(axis=1)

    def value(self, x) -> float:
        return float(self._cut_values(x).max())

    def subgradient(self, x) -> np.ndarray:
        # first maximizing cut wins, so kinks resolve deterministically
        return self.slopes[int(np.argmax(self._cut_values(x)))]


def build_vfa(case, domain, n_cuts: int = 64,
              seed: int = 0) -> ValueFunctionApprox:
    """Sample latent points, solve the dispatch LP, keep (value, dual) cuts."""
    if not hasattr(case, "d_ref"):
        raise TypeError("attack searches load scenarios; only the dispatch "
                        "family is supported")
    lo, hi = domain.latent_box()
    rng = np.random.default_rng(seed)
    anchors, values, slopes = [], [], []
    for _ in range(int(n_cuts)):
        x = rng.uniform(lo, hi)
        d = domain.to_load(x[0], x[1:])
        sol = solve_lp(build_opf_lp(case, d))
        if sol.status.name != "OPTIMAL":
            raise RuntimeError("dispatch LP failed while building cuts")
        anchors.append(x)
        values.append(sol.objective)
        slopes.append(latent_subgradient(case, domain, sol))
    return ValueFunctionApprox(anchors=np.array(anchors),
                               values=np.array(values),
                               slopes=np.array(slopes))


def project_latent(x, box) -> np.ndarray:
    lo, hi = box
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def multi_start(box, m: int, seed: int = 0):
    """Center, then the box corners in lexicographic order, then uniform."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    pts = [0.5 * (lo + hi)]
    axes = [(l,) if l == h else (l, h) for l, h in zip(lo, hi)]
    for corner in itertools.product(*axes):
        pts.append(np.array(corner))
    rng = np.random.default_rng(seed)
    while len(pts) < m:
        pts.append(rng.uniform(lo, hi))
    return pts[:m]


def partition_domain(domain, parts: int):
    """Split the alpha coordinate into even slabs; betas stay whole."""
    lo, hi = domain.latent_box()
    edges = np.linspace(lo[0], hi[0], int(parts) + 1)
    boxes = []
    for i in range(int(parts)):
        slab_lo, slab_hi = lo.copy(), hi.copy()
        slab_lo[0], slab_hi[0] = edges[i], edges[i + 1]
        boxes.append((slab_lo, slab_hi))
    return boxes


@dataclass(frozen=True)
class AttackResult:
    best_latent: np.ndarray
    best_gap: float            # re-priced with a dispatch LP
    d_star: np.ndarray
    best_surrogate: float
    evals: int                 # dispatch LPs spent on re-pricing
    iters: int
    wall_s: float
    traces: tuple = field(repr=False)   # per start: ((iter, step, val), ...)

    def to_json_dict(self):
        return {"best_latent": [float(v) for v in self.best_latent],
                "best_gap": self.best_gap,
                "d_star": [float(v) for v in self.d_star],
                "best_surrogate": self.best_surrogate,
                "evals": self.evals, "iters": self.iters,
                "wall_s": self.wall_s,
                "traces": [[[it, s, val] for (it, s, val) in tr]
                           for tr in self.traces]}


def _true_gap(case, net, domain, x):
    d = domain.to_load(x[0], x[1:])
    cost = proxy_forward(case, net, d).cost
    sol = solve_lp(build_opf_lp(case, d))
    if sol.status.name != "OPTIMAL":
        raise RuntimeError("dispatch LP failed during re-pricing")
    return cost - sol.objective, d


def _grad_latent(domain, g_d):
    # d = (alpha + beta) * d_ref, so both chains just scale by d_ref
    return np.concatenate([[float(g_d @ domain.d_ref)], g_d * domain.d_ref])


def _ascend(case, net, domain, vfa, x0, cfg, box):
    """Single projected-ascent run.  Returns (trace, candidates).

    candidates are the iterates whose surrogate improved, in order; the
    caller re-prices them.  The step drops by 10x after `decay_after`
    non-improving iterations and the run stops after `stop_after`.
    """
    x = project_latent(x0, box)
    best = -np.inf
    trace, cands = [], []
    step = cfg.step0
    stall = 0
    for it in range(cfg.max_iters):
        d = domain.to_load(x[0], x[1:])
        cost = proxy_forward(case, net, d).cost
        val = cost - vfa.value(x)
        trace.append((it, step, val))
        if val > best + _IMPROVE_TOL:
            best = val
            cands.append(x.copy())
            stall = 0
        else:
            stall += 1
            if stall == cfg.decay_after:
                step /= 10.0
            if stall >= cfg.stop_after:
                break
        g = _grad_latent(domain, proxy_subgradient(case, net, d))
        g -= vfa.subgradient(x)
        x = project_latent(x + step * g, box)
    return tuple(trace), cands, best


def pga_vfa(case, net, domain, vfa, cfg: AttackConfig = AttackConfig(),
            seed: int = 0) -> AttackResult:
    """Multi-start, multi-slab surrogate ascent with true-gap re-pricing."""
    if not hasattr(case, "d_ref"):
        raise TypeError("attack searches load scenarios; "
                        "only the dispatch family is supported")
    t0 = time.perf_counter()
    boxes = partition_domain(domain, cfg.n_partitions)
    tasks = []
    for pi, box in enumerate(boxes):
        for x0 in multi_start(box, cfg.n_starts, seed ^ (pi * 7919 + 1)):
            tasks.append((box, x0))

    def run(task):
        box, x0 = task
        return _ascend(case, net, domain, vfa, x0, cfg, box)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(run, tasks))
    else:
        outs = [run(t) for t in tasks]

    best_gap, best_x, best_d = -np.inf, None, None
    best_sur = -np.inf
    evals = iters = 0
    traces = []
    for trace, cands, sur in outs:
        traces.append(trace)
        iters += len(trace)
        best_sur = max(best_sur, sur)
        for x in cands:
            gap, d = _true_gap(case, net, domain, x)
            evals += 1
            if gap > best_gap:
                best_gap, best_x, best_d = gap, x, d
    return AttackResult(best_latent=best_x, best_gap=float(best_gap),
                        d_star=best_d, best_surrogate=float(best_sur),
                        evals=evals, iters=iters,
                        wall_s=time.perf_counter() - t0, traces=tuple(traces))
