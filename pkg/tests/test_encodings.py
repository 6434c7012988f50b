import numpy as np
import pytest

from gapcert.encodings import (EncodingContext, LayerBounds, encode_clamp,
                               encode_max_of, encode_network, encode_relu,
                               ibp, obbt)
from gapcert.lp_core import solve_lp
from gapcert.milp import solve_milp
from gapcert.neural import Layer, MlpNetwork, forward, init_network


def optimize_var(ctx, var, sense):
    prob = ctx.finalize(sense, {var: 1.0})
    sol = solve_milp(prob)
    assert sol.status.name == "OPTIMAL", sol.status
    return sol.objective


def pin(ctx, var, value):
    ctx.set_bounds(var, value, value)


def test_relu_frozen_point():
    ctx = EncodingContext()
    y = ctx.new_var(-1.0, 1.0)
    x = encode_relu(ctx, y, -1.0, 1.0)
    pin(ctx, y, 0.5)
    assert optimize_var(ctx, x, "min") == pytest.approx(0.5, abs=1e-9)
    assert optimize_var(ctx, x, "max") == pytest.approx(0.5, abs=1e-9)


def test_relu_stable_cases_fold():
    ctx = EncodingContext()
    y = ctx.new_var(-1.0, -0.2)
    x = encode_relu(ctx, y, -1.0, -0.2)
    assert ctx.size()[1] == 0  # no binary for a stably inactive neuron
    assert ctx.bounds(x) == (0.0, 0.0)

    y2 = ctx.new_var(0.3, 2.0)
    x2 = encode_relu(ctx, y2, 0.3, 2.0)
    assert x2 == y2 and ctx.size()[1] == 0
    assert ctx.relu_stable == 2


def test_relu_rejects_infinite_bounds():
    ctx = EncodingContext()
    y = ctx.new_var(-np.inf, 1.0)
    with pytest.raises(ValueError):
        encode_relu(ctx, y, -np.inf, 1.0)


def test_relu_random_point_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        l = rng.uniform(-3, 1)
        u = l + rng.uniform(0.1, 3)
        y_val = rng.uniform(l, u)
        ctx = EncodingContext(eliminate_stable=False)
        y = ctx.new_var(l, u)
        x = encode_relu(ctx, y, l, u)
        pin(ctx, y, y_val)
        want = max(y_val, 0.0)
        assert optimize_var(ctx, x, "min") == pytest.approx(want, abs=1e-8)
        assert optimize_var(ctx, x, "max") == pytest.approx(want, abs=1e-8)


def test_clamp_frozen_points():
    for y_val, want in [(1.5, 1.0), (0.3, 0.3), (-0.7, 0.0)]:
        ctx = EncodingContext()
        y = ctx.new_var(-2.0, 2.0)
        x = encode_clamp(ctx, y, 0.0, 1.0, (-2.0, 2.0))
        pin(ctx, y, y_val)
        assert optimize_var(ctx, x, "min") == pytest.approx(want, abs=1e-8)
        assert optimize_var(ctx, x, "max") == pytest.approx(want, abs=1e-8)


def test_clamp_random_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        lo = rng.uniform(-2, 0)
        hi = lo + rng.uniform(0, 2)
        l = lo - rng.uniform(0, 2)
        u = hi + rng.uniform(0, 2)
        y_val = rng.uniform(l, u)
        ctx = EncodingContext()
        y = ctx.new_var(l, u)
        x = encode_clamp(ctx, y, lo, hi, (l, u))
        pin(ctx, y, y_val)
        want = min(max(y_val, lo), hi)
        assert optimize_var(ctx, x, "min") == pytest.approx(want, abs=1e-8)
        assert optimize_var(ctx, x, "max") == pytest.approx(want, abs=1e-8)


def test_max_of_frozen_and_random():
    cases = [((-1.0, -2.0, 0.0), 0.0), ((0.4, -2.4, 0.0), 0.4)]
    rng = np.random.default_rng(9)
    cases += [(tuple(rng.uniform(-3, 3, size=3)), None) for _ in range(30)]
    for vals, want in cases:
        if want is None:
            want = max(vals)
        ctx = EncodingContext()
        xs = [ctx.new_var(v - 1, v + 1) for v in vals]
        z = encode_max_of(ctx, xs, [(v - 1, v + 1) for v in vals])
        for x, v in zip(xs, vals):
            pin(ctx, x, v)
        assert optimize_var(ctx, z, "min") == pytest.approx(want, abs=1e-8)
        assert optimize_var(ctx, z, "max") == pytest.approx(want, abs=1e-8)


def test_ibp_identity_and_sum():
    ident = MlpNetwork(layers=(Layer(W=np.eye(2), b=np.zeros(2), act="id"),))
    lb = ibp(ident, (np.array([-1.0, -1.0]), np.array([1.0, 1.0])))
    assert np.array_equal(lb.output_lo, [-1, -1])
    assert np.array_equal(lb.output_hi, [1, 1])

    summed = MlpNetwork(layers=(
        Layer(W=np.array([[1.0, 1.0]]), b=np.zeros(1), act="id"),))
    lb = ibp(summed, (np.zeros(2), np.ones(2)))
    assert np.array_equal(lb.output_lo, [0.0])
    assert np.array_equal(lb.output_hi, [2.0])


def test_ibp_sampling_oracle():
    rng = np.random.default_rng(13)
    for _ in range(10):
        net = init_network(
            [2, int(rng.integers(2, 5)), int(rng.integers(1, 4))],
            seed=int(rng.integers(0, 10**6)))
        lo = rng.uniform(-2, 0, size=2)
        hi = lo + rng.uniform(0, 3, size=2)
        lb = ibp(net, (lo, hi))
        X = rng.uniform(lo, hi, size=(1000, 2))
        h = X
        for t, layer in enumerate(net.layers):
            z = h @ layer.W.T + layer.b
            assert np.all(z >= lb.pre[t][0] - 1e-9)
            assert np.all(z <= lb.pre[t][1] + 1e-9)
            h = np.maximum(z, 0.0) if layer.act == "relu" else z


def encode_whole_net(net, box, eliminate=True, bounds=None):
    ctx = EncodingContext(eliminate_stable=eliminate)
    lo, hi = box
    ins = [ctx.new_var(l, h) for l, h in zip(lo, hi)]
    bounds = bounds or ibp(net, box)
    outs = encode_network(ctx, net, ins, bounds)
    return ctx, ins, outs


def test_network_encoding_soundness_and_completeness():
    # fixing the input must force the output to forward(net, x), both ways
    rng = np.random.default_rng(17)
    net = init_network([2, 4, 3, 2], seed=77)
    box = (np.array([-1.0, -1.0]), np.array([1.5, 1.5]))
    for _ in range(8):
        x_val = rng.uniform(box[0], box[1])
        ctx, ins, outs = encode_whole_net(net, box)
        for v, xv in zip(ins, x_val):
            pin(ctx, v, xv)
        want = forward(net, x_val)
        for k, out in enumerate(outs):
            got_min = optimize_var(ctx, out, "min")
            got_max = optimize_var(ctx, out, "max")
            assert abs(got_min - want[k]) <= 1e-6
            assert abs(got_max - want[k]) <= 1e-6


def test_elimination_on_off_agree():
    rng = np.random.default_rng(21)
    net = init_network([2, 5, 2], seed=3)
    box = (np.array([0.1, 0.1]), np.array([1.2, 1.2]))  # breeds stable relus
    for _ in range(100):
        x_val = rng.uniform(box[0], box[1])
        vals = []
        for elim in (True, False):
            ctx, ins, outs = encode_whole_net(net, box, eliminate=elim)
            for v, xv in zip(ins, x_val):
                pin(ctx, v, xv)
            vals.append([optimize_var(ctx, o, "max") for o in outs])
        assert np.allclose(vals[0], vals[1], atol=1e-7)


def test_obbt_identity_equals_box():
    ident = MlpNetwork(layers=(Layer(W=np.eye(2), b=np.zeros(2), act="id"),))
    box = (np.array([-1.0, 0.5]), np.array([2.0, 0.75]))
    got = obbt(ident, box, relax=True)
    assert np.allclose(got.pre[0][0], box[0], atol=1e-9)
    assert np.allclose(got.pre[0][1], box[1], atol=1e-9)


def exact_1d_output_range(net, lo, hi):
    # kink-augmented grid: a 1-input piecewise-linear net attains its
    # extrema at box ends or at layer-1 kinks
    cands = [lo, hi]
    first = net.layers[0]
    for r in range(first.W.shape[0]):
        w, b = first.W[r, 0], first.b[r]
        if w != 0.0:
            t = -b / w
            if lo < t < hi:
                cands.append(t)
    vals = np.array([forward(net, [t]) for t in sorted(cands)])
    return vals.min(axis=0), vals.max(axis=0)


def test_obbt_exact_on_one_hidden_layer():
    rng = np.random.default_rng(29)
    for seed in range(6):
        net = init_network([1, int(rng.integers(2, 5)), 2], seed=seed)
        lo, hi = -1.5, 2.0
        got = obbt(net, (np.array([lo]), np.array([hi])), relax=False)
        want_lo, want_hi = exact_1d_output_range(net, lo, hi)
        assert np.allclose(got.output_lo, want_lo, atol=1e-6)
        assert np.allclose(got.output_hi, want_hi, atol=1e-6)


def test_bound_tightening_chain():
    # OBBT(milp) subset OBBT(lp) subset IBP, elementwise
    net = init_network([2, 4, 3, 1], seed=11)
    box = (np.array([-1.0, -0.5]), np.array([1.0, 1.5]))
    base = ibp(net, box)
    lp_b = obbt(net, box, relax=True)
    mi_b = obbt(net, box, relax=False)
    for t in range(len(net.layers)):
        assert np.all(lp_b.pre[t][0] >= base.pre[t][0] - 1e-9)
        assert np.all(lp_b.pre[t][1] <= base.pre[t][1] + 1e-9)
        assert np.all(mi_b.pre[t][0] >= lp_b.pre[t][0] - 1e-7)
        assert np.all(mi_b.pre[t][1] <= lp_b.pre[t][1] + 1e-7)


def test_obbt_bounds_contain_sampled_activations():
    rng = np.random.default_rng(31)
    net = init_network([2, 4, 2], seed=19)
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    tight = obbt(net, box, relax=True)
    X = rng.uniform(box[0], box[1], size=(2000, 2))
    h = X
    for t, layer in enumerate(net.layers):
        z = h @ layer.W.T + layer.b
        assert np.all(z >= tight.pre[t][0] - 1e-7)
        assert np.all(z <= tight.pre[t][1] + 1e-7)
        h = np.maximum(z, 0.0) if layer.act == "relu" else z
