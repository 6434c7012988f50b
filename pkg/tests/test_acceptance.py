"""Release gate: ten end-to-end checks, one test per check.

Each test asserts its numeric tolerances and its wall-clock budget and
finishes with a single ``[C#] PASS`` line (visible under ``-s``; the
``-v`` report gives the same one-line-per-check view).  Budgets are
generous: the whole file runs in a few minutes on a laptop.
"""

import itertools
import math
import time

import numpy as np
import pytest

from gapcert import dcopf, knapsack
from gapcert.attack import AttackConfig, build_vfa, pga_vfa
from gapcert.encodings import EncodingContext, encode_network, ibp, obbt
from gapcert.milp import MilpLimits, solve_milp
from gapcert.neural import forward, init_network, toy_train
from gapcert.verify import (grid_slack, oracle_grid, shifted_geomean,
                            true_gap, verify)

from oracles import knapsack_enum


def _solve_opt(problem):
    sol = solve_milp(problem)
    assert sol.status.name == "OPTIMAL", sol.status
    return sol


def _phi(case, d):
    sol = dcopf.solve_lp(dcopf.build_opf_lp(case, d))
    assert sol.status.name == "OPTIMAL"
    return sol


def _report(tag, budget, t0, detail):
    spent = time.perf_counter() - t0
    assert spent < budget, f"{tag} took {spent:.1f}s (budget {budget}s)"
    print(f"[{tag}] PASS ({spent:.1f}s): {detail}")


def test_c01_compact_matches_bilevel_randomized():
    t0 = time.perf_counter()
    hiddens = [(4,), (8,), (16,), (4, 4), (8, 8), (16, 16)]
    combos = list(itertools.product(("2bus", "3bus"), hiddens))
    worst = 0.0
    for i in range(20):
        label, hidden = combos[i % len(combos)]
        case = dcopf.DESK_CASES[label]()
        net = init_network((case.B, *hidden, case.B), seed=i)
        dom = dcopf.LoadDomain(case.d_ref, u=(0.01, 0.02)[i % 2])
        bd = obbt(net, dom.load_box(), relax=True)
        center = (1.0, np.zeros(case.B))
        s1 = _solve_opt(dcopf.build_compact_milp(
            case, net, dom, bounds=bd).with_warm_start(*center).problem)
        s2 = _solve_opt(dcopf.build_bilevel_milp(
            case, net, dom, bounds=bd).with_warm_start(*center).problem)
        diff = abs(s1.objective - s2.objective)
        assert diff <= 1e-5, (label, hidden, diff)
        worst = max(worst, diff)
    _report("C1", 300, t0, f"20 instances, worst |compact-bilevel| {worst:.2e}")


def test_c02_compact_matches_latent_grid():
    t0 = time.perf_counter()
    case = dcopf.case_2bus()
    net = init_network((2, 8, 2), seed=4)
    details = []
    for frozen, res in (((1,), 200), ((), 50)):
        dom = dcopf.LoadDomain(case.d_ref, u=0.05, frozen_beta=frozen)
        grid = oracle_grid(case, net, dom, resolution=res)
        slack = grid_slack(grid.gaps)
        bd = obbt(net, dom.load_box(), relax=True)
        sol = _solve_opt(dcopf.build_compact_milp(
            case, net, dom, bounds=bd).with_warm_start(
                grid.best_latent[0],
                np.array(grid.best_latent[1:])).problem)
        tol = max(1e-4, slack)
        diff = abs(sol.objective - grid.best_gap)
        assert diff <= tol, (frozen, diff, tol)
        assert sol.objective >= grid.best_gap - 1e-9
        details.append(f"{grid.points}pt diff {diff:.1e} (tol {tol:.1e})")
    _report("C2", 600, t0, "; ".join(details))


def test_c03_sampled_dispatch_validity():
    t0 = time.perf_counter()
    details = []
    for idx, (label, factory) in enumerate(sorted(dcopf.DESK_CASES.items())):
        t_case = time.perf_counter()
        case = factory()
        net = init_network((case.B, 8, case.B), seed=idx)
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        lo, hi = dom.latent_box()
        rng = np.random.default_rng(idx)
        worst_bal, worst_gap = 0.0, np.inf
        for _ in range(10 ** 4):
            x = rng.uniform(lo, hi)
            d = dom.to_load(x[0], x[1:])
            res = dcopf.proxy_forward(case, net, d)
            bal = abs(res.p.sum() - d.sum())
            assert bal <= 1e-8
            assert np.all(res.p >= case.p_lo) and np.all(res.p <= case.p_hi)
            gap = res.cost - _phi(case, d).objective
            assert gap >= -1e-6, (label, gap)
            worst_bal = max(worst_bal, bal)
            worst_gap = min(worst_gap, gap)
        spent = time.perf_counter() - t_case
        assert spent < 60, f"{label} sampling took {spent:.1f}s"
        details.append(f"{label} bal {worst_bal:.1e} min-gap {worst_gap:.1e}")
    _report("C3", 180, t0, "; ".join(details))


def test_c04_vfa_under_approximates():
    t0 = time.perf_counter()
    details = []
    for idx, label in enumerate(("2bus", "3bus")):
        case = dcopf.DESK_CASES[label]()
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        vfa = build_vfa(case, dom, n_cuts=200, seed=idx)
        for anchor, val in zip(vfa.anchors, vfa.values):
            assert abs(vfa.value(anchor) - val) <= 1e-9
        lo, hi = dom.latent_box()
        rng = np.random.default_rng(100 + idx)
        worst = -np.inf
        for _ in range(10 ** 3):
            x = rng.uniform(lo, hi)
            over = vfa.value(x) - _phi(case, dom.to_load(x[0], x[1:])).objective
            assert over <= 1e-6, (label, over)
            worst = max(worst, over)
        details.append(f"{label} max over-approx {worst:.1e}")
    _report("C4", 60, t0, "; ".join(details))


def test_c05_attack_within_certificate_and_near_oracle():
    t0 = time.perf_counter()
    res_by_case = {"1bus": 41, "2bus": 21, "3bus": 9}
    details = []
    for label, resolution in res_by_case.items():
        case = dcopf.DESK_CASES[label]()
        net = init_network((case.B, 8, case.B), seed=4)
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        grid = oracle_grid(case, net, dom, resolution=resolution)
        bd = obbt(net, dom.load_box(), relax=True)
        sol = _solve_opt(dcopf.build_compact_milp(
            case, net, dom, bounds=bd).with_warm_start(
                1.0, np.zeros(case.B)).problem)
        vfa = build_vfa(case, dom, n_cuts=64, seed=0)
        atk = pga_vfa(case, net, dom, vfa,
                      AttackConfig(n_starts=8, n_partitions=4), seed=0)
        assert atk.best_gap <= sol.objective + 1e-5, label
        assert atk.best_gap >= 0.95 * grid.best_gap - 1e-9, label
        frac = atk.best_gap / grid.best_gap if grid.best_gap > 1e-9 else 1.0
        details.append(f"{label} attack/oracle {frac:.3f}")
    _report("C5", 120, t0, "; ".join(details))


def test_c06_attack_schedule_and_replay():
    t0 = time.perf_counter()
    case = dcopf.case_1bus()
    net = init_network((1, 4, 1), seed=0)
    dom = dcopf.LoadDomain(case.d_ref, u=0.05)
    vfa = build_vfa(case, dom, n_cuts=1, seed=0)
    # 1-generator dispatch: surrogate is exactly flat, so the stall
    # counter drives the whole schedule
    flat = pga_vfa(case, net, dom, vfa, AttackConfig(n_starts=1), seed=0)
    trace = flat.traces[0]
    assert len(trace) == 21        # decay at 10 stalls, stop at 20
    steps = [row[1] for row in trace]
    assert steps[:11] == [1e-3] * 11 and steps[11:] == [1e-4] * 10
    capped = pga_vfa(case, net, dom, vfa,
                     AttackConfig(n_starts=1, stop_after=10 ** 6), seed=0)
    assert len(capped.traces[0]) == 500   # hard iteration cap
    case2 = dcopf.case_2bus()
    net2 = init_network((2, 8, 2), seed=4)
    dom2 = dcopf.LoadDomain(case2.d_ref, u=0.05)
    vfa2 = build_vfa(case2, dom2, n_cuts=32, seed=0)
    runs = [pga_vfa(case2, net2, dom2, vfa2,
                    AttackConfig(n_starts=4, n_partitions=2, workers=w),
                    seed=7) for w in (1, 1, 3)]
    assert runs[0].traces == runs[1].traces == runs[2].traces
    assert runs[0].best_gap == runs[1].best_gap == runs[2].best_gap
    assert all(tuple(r.best_latent) == tuple(runs[0].best_latent)
               for r in runs)
    _report("C6", 60, t0,
            "flat trace 21 rows, cap 500, replay identical across workers")


def test_c07_encodings_match_forward_passes():
    t0 = time.perf_counter()
    worst = 0.0
    for idx, (label, factory) in enumerate(sorted(dcopf.DESK_CASES.items())):
        case = factory()
        net = init_network((case.B, 8, case.B), seed=10 + idx)
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        lo, hi = dom.load_box()
        rng = np.random.default_rng(idx)
        for _ in range(100):
            d = rng.uniform(lo, hi)
            ctx = EncodingContext()
            in_vars = [ctx.new_var(v, v) for v in d]
            outs = encode_network(ctx, net, in_vars, ibp(net, (d, d)))
            prob = ctx.finalize("max", {o: 1.0 for o in outs})
            sol = _solve_opt(prob)
            err = float(np.max(np.abs(sol.x[list(outs)] - forward(net, d))))
            assert err <= 1e-6, (label, err)
            worst = max(worst, err)
    # knapsack repair layer: pinned-latent certificates against the
    # greedy rule and a full 2^K enumeration of the free block
    rng = np.random.default_rng(2024)
    done = 0
    while done < 12:
        K = 3 + done % 4
        v = rng.integers(1, 9, size=K).astype(float)
        w = rng.integers(1, 5, size=K).astype(float)
        l = float(rng.integers(2, int(w.sum()) + 1))
        case = knapsack.KnapsackCase(K=K, v=v, w=w, l=l)
        net = init_network((K + 1, 4, K), seed=int(rng.integers(10 ** 6)))
        beta = rng.uniform(0.92, 1.08, size=K)
        s = forward(net, knapsack.scaled_inputs(case, 1.0, beta))
        if np.min(np.diff(np.sort(s))) < 1e-4:
            continue
        dom = knapsack.KnapsackDomain(K=K, u=0.1)
        model = knapsack.build_knapsack_compact_milp(case, net, dom)
        model = model.with_warm_start(1.0, beta)
        lp = model.problem.lp
        lb, ub = lp.lb.copy(), lp.ub.copy()
        for col, val in zip(model.latent_idx, [1.0, *beta]):
            lb[col] = ub[col] = val
        from dataclasses import replace
        sol = _solve_opt(replace(model.problem,
                                 lp=replace(lp, lb=lb, ub=ub)))
        y_ref = knapsack.greedy_repair(s, w, l)
        assert np.array_equal(
            np.rint(sol.x[list(model.yhat)]).astype(int), y_ref)
        best_enum, _ = knapsack_enum(beta * v, w, l)
        assert abs(sol.objective - (best_enum - (beta * v) @ y_ref)) <= 1e-6
        done += 1
    _report("C7", 300, t0,
            f"300 dispatch forwards (worst {worst:.1e}), 12 repair trials")


def test_c08_knapsack_milp_matches_exhaustive_oracle():
    t0 = time.perf_counter()
    case = knapsack.case_k5()
    rng = np.random.default_rng(0)
    rows = np.array([knapsack.scaled_inputs(case, a, b)
                     for a, b in zip(rng.uniform(0.9, 1.1, 40),
                                     rng.uniform(0.9, 1.1, (40, 5)))])
    net = toy_train(case, rows, epochs=60, lr=1e-3, hidden=(4,), seed=1)
    dom = knapsack.KnapsackDomain(K=5, u=0.1)
    grid = oracle_grid(case, net, dom, resolution=6)   # 6^6 latent points
    slack = grid_slack(grid.gaps)
    model = knapsack.build_knapsack_compact_milp(case, net, dom)
    model = model.with_warm_start(grid.best_latent[0],
                                  np.array(grid.best_latent[1:]))
    sol = _solve_opt(model.problem)
    tol = max(1e-4, slack)
    assert sol.objective >= grid.best_gap - 1e-6
    assert sol.objective <= grid.best_gap + tol
    a, b = model.latent_of(sol.x)
    repriced = true_gap(case, net, knapsack.scaled_inputs(case, a, b))
    # at a score tie the certificate value is the one-sided limit of
    # nearby true gaps, so it may exceed the gap at the tie point
    # itself, but never the other way round
    assert repriced <= sol.objective + 1e-6
    _report("C8", 600, t0,
            f"milp {sol.objective:.4f} vs grid {grid.best_gap:.4f} "
            f"(slack {slack:.2f}), re-priced {repriced:.4f}")


def test_c09_directional_comparisons():
    t0 = time.perf_counter()
    # (a) the single-level certificate always carries fewer binaries
    for label, factory in sorted(dcopf.DESK_CASES.items()):
        case = factory()
        net = init_network((case.B, 8, case.B), seed=3)
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        bd = obbt(net, dom.load_box(), relax=True)
        n1 = len(dcopf.build_compact_milp(
            case, net, dom, bounds=bd).problem.binary_idx)
        n2 = len(dcopf.build_bilevel_milp(
            case, net, dom, bounds=bd).problem.binary_idx)
        assert n1 < n2
        assert n2 - n1 == 3 * case.E + 2 * case.B
    # (b) under a tight budget the attack-seeded incumbent dominates
    case = dcopf.case_2bus()
    net = init_network((2, 8, 2), seed=4)
    dom = dcopf.LoadDomain(case.d_ref, u=0.05)
    tight = MilpLimits(time_s=1e-9)
    rep_ref = verify(case, net, dom, warm="reference", limits=tight)
    rep_pga = verify(case, net, dom, warm="pga", limits=tight,
                     attack_cfg=AttackConfig(n_starts=4, n_cuts=32))
    assert rep_ref.status == rep_pga.status == "TIME_LIMIT"
    assert rep_pga.primal >= rep_ref.primal - 1e-9
    # (c) relaxation-tightened boxes sit inside interval propagation
    for label, factory in sorted(dcopf.DESK_CASES.items()):
        case = factory()
        net = init_network((case.B, 8, case.B), seed=3)
        dom = dcopf.LoadDomain(case.d_ref, u=0.05)
        bd_i = ibp(net, dom.load_box())
        bd_o = obbt(net, dom.load_box(), relax=True)
        for (lo_i, hi_i), (lo_o, hi_o) in zip(bd_i.pre, bd_o.pre):
            assert np.all(lo_o >= lo_i - 1e-9)
            assert np.all(hi_o <= hi_i + 1e-9)
    _report("C9", 120, t0,
            f"binaries compact<bilevel on all cases; warm primal "
            f"{rep_pga.primal:.3f} >= {rep_ref.primal:.3f}; obbt within ibp")


def test_c10_gradients_duals_and_summary_stats():
    t0 = time.perf_counter()
    case = dcopf.case_2bus()
    net = init_network((2, 8, 2), seed=4)
    dom = dcopf.LoadDomain(case.d_ref, u=0.05)
    lo, hi = dom.load_box()
    rng = np.random.default_rng(5)
    h = 1e-6

    def signature(d):
        """Active-set fingerprint; FD only trusted when it is stable."""
        res = dcopf.proxy_forward(case, net, d, eps=1e-12)
        p_hat = forward(net, d)
        interior = (np.abs(res.p - case.p_lo) > 1e-5) & \
                   (np.abs(res.p - case.p_hi) > 1e-5)
        relu = []
        hcur = d
        for layer in net.layers:
            z = layer.W @ hcur + layer.b
            hcur = np.maximum(z, 0.0) if layer.act == "relu" else z
            if layer.act == "relu":
                relu.append(tuple(z > 0.0))
        flow = case.H @ (res.p - d)
        xi_state = tuple(np.sign(np.round(
            np.maximum(np.abs(flow) - case.f_bar, 0.0) * 1e5)))
        return (tuple(interior), tuple(np.sign(p_hat - res.p).round()),
                xi_state, tuple(relu))

    checked = 0
    worst_rel = 0.0
    while checked < 25:
        d = rng.uniform(lo, hi)
        sig = signature(d)
        stable = all(signature(d + dv) == sig and signature(d - dv) == sig
                     for dv in h * np.eye(case.B))
        if not stable:
            continue
        g = dcopf.proxy_subgradient(case, net, d)
        fd = np.array([
            (dcopf.proxy_forward(case, net, d + dv, eps=1e-12).cost
             - dcopf.proxy_forward(case, net, d - dv, eps=1e-12).cost)
            / (2 * h) for dv in h * np.eye(case.B)])
        rel = float(np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g))))
        assert rel <= 1e-4, (d, g, fd)
        worst_rel = max(worst_rel, rel)
        checked += 1

    # dispatch-value duals are valid subgradients: the supporting plane
    # never overshoots the value at any other load
    worst_viol = -np.inf
    for label in ("2bus", "3bus"):
        c2 = dcopf.DESK_CASES[label]()
        dm = dcopf.LoadDomain(c2.d_ref, u=0.05)
        l2, h2 = dm.load_box()
        for _ in range(50):
            d1, d2 = rng.uniform(l2, h2), rng.uniform(l2, h2)
            s1 = _phi(c2, d1)
            g1 = dcopf.load_subgradient(c2, s1)
            viol = s1.objective + g1 @ (d2 - d1) - _phi(c2, d2).objective
            assert viol <= 1e-7, (label, viol)
            worst_viol = max(worst_viol, viol)

    # exp(mean(log(x + s))) - s against hand-computed constants
    assert shifted_geomean([1.0, 2.0, 3.0], shift=10.0) == pytest.approx(
        1.972157672583755, abs=1e-12)
    assert shifted_geomean([0.5, 2.0, 8.0], shift=10.0) == pytest.approx(
        3.1385574196636643, abs=1e-12)
    assert shifted_geomean([2.0, 2.0], shift=0.5) == 2.0
    assert shifted_geomean([0.0, 3.0], shift=1.0) == pytest.approx(1.0)
    _report("C10", 60, t0,
            f"25 FD points (worst rel {worst_rel:.1e}), 100 subgradient "
            f"planes (max overshoot {worst_viol:.1e}), stats frozen")
