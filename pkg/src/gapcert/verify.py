"""End-to-end certification pipeline and reporting.

verify() strings the pieces together for one (case, net, domain) triple:
tighten activation bounds, build the requested formulation, optionally
install a warm start (the reference latent or a gradient-attack
incumbent), branch and bound, then re-price the incumbent latent with
the family's exact evaluator.  The re-priced value is the published
primal — the MILP objective merely has to agree with it, and a
disagreement beyond 1e-4 flags the report rather than silently passing.

Also here: the exhaustive latent-grid oracle used to cross-check small
certificates, and the shifted geometric mean used to aggregate runtimes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import dcopf as _dc
from . import knapsack as _kp
from .attack import AttackConfig, build_vfa, pga_vfa
from .encodings import ibp, obbt
from .lp_core import solve_lp
from .milp import MilpLimits, SolveLog, solve_milp
from .neural import forward

RECERT_TOL = 1e-4


def true_gap(case, net, x) -> float:
    """Achieved optimality gap of the proxy at one instance.

    `x` is the proxy's input vector: the load vector for dispatch cases,
    [scaled values..., scaled capacity] for knapsack cases.
    """
    x = np.asarray(x, dtype=float)
    if hasattr(case, "d_ref"):
        cost = _dc.proxy_forward(case, net, x).cost
        sol = solve_lp(_dc.build_opf_lp(case, x))
        if sol.status.name != "OPTIMAL":
            raise RuntimeError("dispatch LP failed while re-pricing")
        return cost - sol.objective
    if hasattr(case, "w"):
        vals, cap = x[:case.K], float(x[case.K])
        y = _kp.greedy_repair(forward(net, x), case.w, cap)
        return _kp.knapsack_exact(vals, case.w, cap)[0] - float(vals @ y)
    raise TypeError(f"unsupported case type {type(case).__name__}")


def latent_input(case, domain, alpha, beta) -> np.ndarray:
    """Map a latent point to the proxy's input vector."""
    if hasattr(case, "d_ref"):
        return domain.to_load(alpha, beta)
    return _kp.scaled_inputs(case, alpha, beta)


def certificate_gap(primal, dual) -> float:
    return (dual - primal) / max(1.0, abs(primal))


@dataclass(frozen=True)
class VerificationReport:
    label: str
    family: str
    formulation: str
    u: float
    primal: float | None       # re-priced incumbent gap (None: no incumbent)
    dual: float                # proved upper bound
    status: str
    wall_s: float
    latent: tuple | None
    flags: tuple
    sizes: dict
    log: SolveLog = field(repr=False)

    @property
    def gap_rel(self) -> float:
        if self.primal is None:
            return float("inf")
        return certificate_gap(self.primal, self.dual)

    def to_json_dict(self):
        return {"label": self.label, "family": self.family,
                "formulation": self.formulation, "u": self.u,
                "primal": self.primal, "dual": self.dual,
                "gap_rel": None if self.primal is None else self.gap_rel,
                "status": self.status, "wall_s": self.wall_s,
                "latent": None if self.latent is None else
                          [float(v) for v in self.latent],
                "flags": list(self.flags), "sizes": dict(self.sizes),
                "log": self.log.to_json_dict()}


CSV_HEADER = "system,u,formulation,primal,dual,time"


def csv_row(report: VerificationReport) -> str:
    primal = "" if report.primal is None else repr(report.primal)
    return (f"{report.label},{report.u},{report.formulation},"
            f"{primal},{report.dual!r},{report.wall_s:.3f}")


def to_csv(reports, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rep in reports:
            fh.write(csv_row(rep) + "\n")


def _input_box(case, domain):
    if hasattr(case, "d_ref"):
        return domain.load_box()
    lo, hi = domain.latent_box()
    return (np.append(lo[1:] * case.v, lo[0] * case.l),
            np.append(hi[1:] * case.v, hi[0] * case.l))


def _center_latent(case, domain):
    if hasattr(case, "d_ref"):
        return 1.0, np.zeros(case.B)
    return 1.0, np.ones(case.K)


def verify(case, net, domain, formulation: str = "compact",
           obbt_mode: str = "lp", warm: str = "reference",
           limits: MilpLimits | None = None, seed: int = 0,
           attack_cfg: AttackConfig | None = None,
           M_dual: float | None = None, label: str | None = None,
           ) -> VerificationReport:
    """Certify one proxy.  See the module docstring for the pipeline."""
    t0 = time.perf_counter()
    family = "dcopf" if hasattr(case, "d_ref") else "knapsack"
    if formulation not in ("compact", "bilevel"):
        raise ValueError(f"unknown formulation {formulation!r}")
    if obbt_mode not in ("lp", "milp", "off"):
        raise ValueError(f"unknown bound mode {obbt_mode!r}")
    if warm not in ("none", "reference", "pga"):
        raise ValueError(f"unknown warm start {warm!r}")
    if family == "knapsack" and formulation == "bilevel":
        raise ValueError("bilevel unavailable for non-convex family")
    if family == "knapsack" and warm == "pga":
        raise ValueError("pga warm start unavailable for the knapsack family")

    box = _input_box(case, domain)
    if obbt_mode == "off":
        bounds = ibp(net, box)
    else:
        bounds = obbt(net, box, relax=(obbt_mode == "lp"))

    if family == "dcopf":
        if formulation == "compact":
            model = _dc.build_compact_milp(case, net, domain, bounds=bounds)
        else:
            model = _dc.build_bilevel_milp(case, net, domain, bounds=bounds,
                                           M_dual=M_dual)
    else:
        model = _kp.build_knapsack_compact_milp(case, net, domain,
                                                bounds=bounds)

    if warm == "reference":
        model = model.with_warm_start(*_center_latent(case, domain))
    elif warm == "pga":
        cfg = attack_cfg if attack_cfg is not None else AttackConfig()
        vfa = build_vfa(case, domain, cfg.n_cuts, seed=seed)
        found = pga_vfa(case, net, domain, vfa, cfg, seed=seed)
        model = model.with_warm_start(found.best_latent[0],
                                      found.best_latent[1:])

    sol = solve_milp(model.problem, limits=limits, seed=seed)

    flags = []
    primal = None
    latent = None
    if sol.x is not None:
        alpha, beta = model.latent_of(sol.x)
        latent = (alpha, *[float(b) for b in beta])
        primal = true_gap(case, net, latent_input(case, domain, alpha, beta))
        if abs(primal - sol.objective) > RECERT_TOL:
            flags.append("NumericsSuspect")
    if formulation == "bilevel" and sol.x is not None:
        cols = ((model.dual_lambda,) + model.nu_up + model.nu_lo
                + model.mu_lo + model.mu_hi + model.zeta)
        if np.max(np.abs(sol.x[list(cols)])) >= 0.9 * model.M_dual:
            flags.append("MDualTight")

    n_cont, n_bin, n_rows = model.ctx.size()
    stable = model.ctx.relu_stable
    sizes = {"variables": n_cont + n_bin, "binaries": n_bin,
             "rows": n_rows, "binaries_unfolded": n_bin + stable,
             "rows_unfolded": n_rows + 3 * stable}
    return VerificationReport(
        label=label if label is not None else family,
        family=family, formulation=formulation, u=float(domain.u),
        primal=primal, dual=float(sol.best_bound),
        status=sol.status.name, wall_s=time.perf_counter() - t0,
        latent=latent, flags=tuple(flags), sizes=sizes, log=sol.log)


# -- exhaustive latent grid ---------------------------------------------------

GRID_CAP = 10 ** 7


@dataclass(frozen=True)
class OracleGrid:
    axes: tuple          # one value array per latent coordinate
    gaps: np.ndarray     # len(axes)-dimensional
    best_gap: float
    best_latent: tuple

    @property
    def points(self) -> int:
        return int(self.gaps.size)


def oracle_grid(case, net, domain, resolution: int) -> OracleGrid:
    """True gap at every node of a latent lattice.

    Degenerate coordinates (frozen betas, u=0) collapse to one sample;
    the total node count must stay under 10^7.
    """
    lo, hi = domain.latent_box()
    axes = tuple(np.linspace(l, h, int(resolution)) if h > l
                 else np.array([l]) for l, h in zip(lo, hi))
    total = int(np.prod([a.size for a in axes]))
    if total > GRID_CAP:
        raise ValueError(f"grid would need {total} evaluations")
    gaps = np.empty([a.size for a in axes])
    it = np.ndindex(*gaps.shape)
    for idx in it:
        x = np.array([axes[k][i] for k, i in enumerate(idx)])
        gaps[idx] = true_gap(case, net,
                             latent_input(case, domain, x[0], x[1:]))
    best_idx = np.unravel_index(int(np.argmax(gaps)), gaps.shape)
    best = tuple(float(axes[k][i]) for k, i in enumerate(best_idx))
    return OracleGrid(axes=axes, gaps=gaps,
                      best_gap=float(gaps[best_idx]), best_latent=best)


def grid_slack(gaps: np.ndarray) -> float:
    """Largest gap change between lattice neighbours: what a maximum
    hiding between nodes can exceed the lattice maximum by, roughly."""
    worst = 0.0
    for ax in range(gaps.ndim):
        if gaps.shape[ax] > 1:
            worst = max(worst, float(np.abs(np.diff(gaps, axis=ax)).max()))
    return worst


def shifted_geomean(values, shift: float = 10.0) -> float:
    """Geometric mean of (x + shift), shifted back; tames near-zero times."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no values")
    if np.any(values + shift <= 0):
        raise ValueError("shift must keep all values positive")
    return float(np.exp(np.mean(np.log(values + shift))) - shift)
