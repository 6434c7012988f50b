import json

import numpy as np
import pytest

from gapcert.attack import (AttackConfig, ValueFunctionApprox, build_vfa,
                            multi_start, partition_domain, pga_vfa,
                            project_latent)
from gapcert.dcopf import (LoadDomain, build_compact_milp, build_opf_lp,
                           case_1bus, case_2bus, proxy_forward)
from gapcert.knapsack import case_k3
from gapcert.lp_core import solve_lp
from gapcert.milp import solve_milp
from gapcert.neural import init_network


def phi(case, d):
    sol = solve_lp(build_opf_lp(case, d))
    assert sol.status.name == "OPTIMAL"
    return sol.objective


# -- value-function model ----------------------------------------------------

def test_vfa_under_approximates_everywhere():
    case = case_2bus()
    dom = LoadDomain(case.d_ref, u=0.1)
    vfa = build_vfa(case, dom, n_cuts=200, seed=0)
    lo, hi = dom.latent_box()
    rng = np.random.default_rng(1)
    for _ in range(300):
        x = rng.uniform(lo, hi)
        assert vfa.value(x) <= phi(case, dom.to_load(x[0], x[1:])) + 1e-6


def test_vfa_exact_at_anchors():
    case = case_2bus()
    dom = LoadDomain(case.d_ref, u=0.1)
    vfa = build_vfa(case, dom, n_cuts=50, seed=3)
    for i in range(50):
        assert abs(vfa.value(vfa.anchors[i]) - vfa.values[i]) < 1e-9


def test_vfa_subgradient_tie_break():
    vfa = ValueFunctionApprox(anchors=np.zeros((2, 1)),
                              values=np.ones(2),
                              slopes=np.array([[2.0], [3.0]]))
    assert vfa.subgradient([0.0]) == pytest.approx([2.0])  # tie: first cut
    assert vfa.subgradient([1.0]) == pytest.approx([3.0])
    assert vfa.value([1.0]) == pytest.approx(4.0)


def test_vfa_shape_validation():
    with pytest.raises(ValueError):
        ValueFunctionApprox(anchors=np.zeros((2, 1)), values=np.ones(3),
                            slopes=np.zeros((2, 1)))


# -- search plumbing ---------------------------------------------------------

def test_multi_start_layout():
    box = (np.array([0.0, -1.0]), np.array([2.0, 1.0]))
    pts = multi_start(box, 1)
    assert len(pts) == 1 and np.allclose(pts[0], [1.0, 0.0])
    pts = multi_start(box, 5)
    corners = [[0, -1], [0, 1], [2, -1], [2, 1]]
    for got, want in zip(pts[1:], corners):
        assert np.allclose(got, want)
    pts = multi_start(box, 8, seed=4)
    assert len(pts) == 8
    for p in pts:
        assert np.all(p >= box[0]) and np.all(p <= box[1])
    again = multi_start(box, 8, seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(pts, again))


def test_multi_start_skips_degenerate_coords():
    dom = LoadDomain([3.0, 4.0], u=0.1, frozen_beta=(1,))
    pts = multi_start(dom.latent_box(), 5)
    assert len(pts) == 5
    # frozen beta contributes no corner doubling: 2^2 corners, then uniform
    assert all(p[2] == 0.0 for p in pts[:5])
    assert np.allclose(pts[1], [0.9, -0.05, 0.0])
    assert np.allclose(pts[4], [1.1, 0.05, 0.0])


def test_partition_domain_alpha_slabs():
    dom = LoadDomain([3.0, 4.0], u=0.1)
    slabs = partition_domain(dom, 2)
    assert len(slabs) == 2
    (lo0, hi0), (lo1, hi1) = slabs
    assert lo0[0] == pytest.approx(0.9) and hi0[0] == pytest.approx(1.0)
    assert lo1[0] == pytest.approx(1.0) and hi1[0] == pytest.approx(1.1)
    for lo, hi in slabs:  # betas untouched
        assert np.allclose(lo[1:], -0.05) and np.allclose(hi[1:], 0.05)
    whole = partition_domain(dom, 1)[0]
    assert np.allclose(whole[0], dom.latent_box()[0])
    assert np.allclose(whole[1], dom.latent_box()[1])


def test_project_latent_clips():
    box = (np.zeros(2), np.ones(2))
    assert np.allclose(project_latent([-1.0, 0.5], box), [0.0, 0.5])
    assert np.allclose(project_latent([2.0, -3.0], box), [1.0, 0.0])


# -- ascent behaviour --------------------------------------------------------

def test_step_schedule_on_flat_surrogate():
    # one generator: the proxy is forced onto p = d, the cost is linear,
    # one cut reproduces it exactly: surrogate identically zero
    case = case_1bus()
    dom = LoadDomain(case.d_ref, u=0.1)
    net = init_network((1, 2, 1), seed=0)
    vfa = build_vfa(case, dom, n_cuts=1, seed=2)
    cfg = AttackConfig(n_starts=1, n_partitions=1)
    res = pga_vfa(case, net, dom, vfa, cfg, seed=0)
    assert len(res.traces) == 1
    trace = res.traces[0]
    assert len(trace) == 21  # improve once, stall to 20
    assert all(abs(val) < 1e-9 for (_, _, val) in trace)
    steps = [s for (_, s, _) in trace]
    assert steps[:11] == [1e-3] * 11      # decay kicks in after 10 stalls
    assert steps[11:] == [1e-4] * 10
    assert abs(res.best_gap) < 1e-9
    assert np.allclose(res.best_latent, [1.0, 0.0])
    assert res.evals == 1 and res.iters == 21


def test_deterministic_replay_and_worker_invariance():
    case = case_2bus()
    dom = LoadDomain(case.d_ref, u=0.1)
    net = init_network((2, 4, 2), seed=5)
    vfa = build_vfa(case, dom, n_cuts=32, seed=7)
    cfg = AttackConfig(n_starts=3, n_partitions=2)
    a = pga_vfa(case, net, dom, vfa, cfg, seed=11)
    b = pga_vfa(case, net, dom, vfa, cfg, seed=11)
    assert np.array_equal(a.best_latent, b.best_latent)
    assert a.best_gap == b.best_gap and a.traces == b.traces
    c = pga_vfa(case, net, dom, vfa,
                AttackConfig(n_starts=3, n_partitions=2, workers=4), seed=11)
    assert np.array_equal(a.best_latent, c.best_latent)
    assert a.traces == c.traces


def test_incumbent_is_true_gap_below_certificate():
    case = case_2bus()
    dom = LoadDomain(case.d_ref, u=0.05)
    net = init_network((2, 4, 2), seed=5)
    milp = solve_milp(build_compact_milp(case, net, dom).problem)
    assert milp.status.name == "OPTIMAL"
    vfa = build_vfa(case, dom, n_cuts=64, seed=1)
    res = pga_vfa(case, net, dom, vfa, AttackConfig(n_starts=6), seed=3)
    # incumbent re-priced by LP: recompute and compare
    want = proxy_forward(case, net, res.d_star).cost - phi(case, res.d_star)
    assert res.best_gap == pytest.approx(want, abs=1e-12)
    assert res.best_gap <= milp.objective + 1e-5
    assert res.best_gap >= 0.5 * milp.objective  # finds a decent scenario
    assert res.best_surrogate >= res.best_gap - 1e-9
    assert res.evals >= 1
    assert res.iters == sum(len(t) for t in res.traces)


def test_result_json_round_trip():
    case = case_1bus()
    dom = LoadDomain(case.d_ref, u=0.1)
    vfa = build_vfa(case, dom, n_cuts=1, seed=0)
    res = pga_vfa(case, init_network((1, 1), seed=0), dom, vfa,
                  AttackConfig(n_starts=2), seed=0)
    doc = json.loads(json.dumps(res.to_json_dict()))
    assert doc["best_gap"] == res.best_gap
    assert len(doc["traces"]) == 2
    assert doc["traces"][0][0][0] == 0  # (iter, step, value) rows


def test_attack_rejects_non_dispatch_family():
    vfa = ValueFunctionApprox(anchors=np.zeros((1, 4)), values=np.zeros(1),
                              slopes=np.zeros((1, 4)))
    with pytest.raises(TypeError):
        pga_vfa(case_k3(), init_network((4, 3), seed=0),
                LoadDomain([1.0], u=0.1), vfa)
