"""Dense ReLU multilayer perceptrons with exact reverse-mode gradients.

Kept deliberately tiny: networks here are verification subjects, not
training infrastructure.  Weights are float64 numpy arrays; forward and
gradients are vectorized over leading batch axes; the ReLU subgradient
at exactly zero is taken as 0, matching the piecewise-linear encodings.

The JSON weight schema is

    {"layers": [{"rows": r, "cols": c, "w": [...row-major...],
                 "b": [...], "act": "relu" | "id"}, ...]}

with all floats serialized at full round-trip precision (17 significant
digits), so save/load is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ACTS = ("relu", "id")


@dataclass(frozen=True)
class Layer:
    W: np.ndarray
    b: np.ndarray
    act: str

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if self.act not in ACTS:
            raise ValueError(f"unknown activation {self.act!r}")
        if b.size != W.shape[0]:
            raise ValueError("bias length does not match rows of W")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("weights must be finite")
        W.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class MlpNetwork:
    """Sequence of dense layers; the final activation must be identity."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise ValueError("layer width mismatch")
        if layers[-1].act != "id":
            raise ValueError("final layer activation must be 'id'")
        object.__setattr__(self, "layers", layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def n_out(self) -> int:
        return self.layers[-1].W.shape[0]


def forward(net: MlpNetwork, x) -> np.ndarray:
    """Evaluate the network; x may carry leading batch axes."""
    h = np.asarray(x, dtype=float)
    if h.shape[-1] != net.n_in:
        raise ValueError(f"expected {net.n_in} inputs, got {h.shape[-1]}")
    for layer in net.layers:
        h = h @ layer.W.T + layer.b
        if layer.act == "relu":
            h = np.maximum(h, 0.0)
    return h


def _trace(net: MlpNetwork, x):
    """Pre-activations and post-activations per layer for one input."""
    h = np.asarray(x, dtype=float).ravel()
    pres, posts = [], [h]
    for layer in net.layers:
        z = layer.W @ h + layer.b
        pres.append(z)
        h = np.maximum(z, 0.0) if layer.act == "relu" else z
        posts.append(h)
    return pres, posts


def input_gradient(net: MlpNetwork, x, cotangent=None) -> np.ndarray:
    """Reverse-mode gradient of `cotangent @ output` with respect to x.

    With cotangent None and a single output the result is the plain
    gradient; with several outputs it is the full (n_out, n_in)
    Jacobian.  ReLU contributes subgradient 0 where its input is
    exactly zero.
    """
    x = np.asarray(x, dtype=float).ravel()
    pres, _ = _trace(net, x)
    if cotangent is None:
        if net.n_out == 1:
            g = np.ones(1)
        else:
            jac = np.eye(net.n_out)
            for layer, z in zip(reversed(net.layers), reversed(pres)):
                if layer.act == "relu":
                    jac = jac * (z > 0.0)
                jac = jac @ layer.W
            return jac
    else:
        g = np.asarray(cotangent, dtype=float).ravel()
        if g.size != net.n_out:
            raise ValueError("cotangent length mismatch")
    for layer, z in zip(reversed(net.layers), reversed(pres)):
        if layer.act == "relu":
            g = g * (z > 0.0)
        g = g @ layer.W
    return g


def weight_gradients(net: MlpNetwork, x, cotangent):
    """Per-layer (dW, db) of `cotangent @ output` for one input."""
    x = np.asarray(x, dtype=float).ravel()
    pres, posts = _trace(net, x)
    g = np.asarray(cotangent, dtype=float).ravel()
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.act == "relu":
            g = g * (pres[i] > 0.0)
        grads[i] = (np.outer(g, posts[i]), g.copy())
        g = g @ layer.W
    return grads


def init_network(sizes, seed: int = 0) -> MlpNetwork:
    """Seeded uniform(+-1/sqrt(fan_in)) init; sizes = (n0, ..., nL).

    Hidden layers are ReLU, the output layer is identity.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        s = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-s, s, size=(sizes[i + 1], fan_in))
        b = rng.uniform(-s, s, size=sizes[i + 1])
        act = "id" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(W=W, b=b, act=act))
    return MlpNetwork(layers=tuple(layers))


def toy_train(case, samples, epochs: int, lr: float, hidden=(16, 16),
              seed: int = 0, penalty: float | None = None,
              on_epoch=None) -> MlpNetwork:
    """Plain full-batch gradient descent for the two proxy families.

    Dispatch is on the case type: a knapsack case trains score
    regression toward value/weight ratios; a DC-OPF case trains
    self-supervised dispatch cost (plus `penalty` times the thermal
    violation, default the case's own penalty weight) through the
    feasibility layers, using their subgradients.

    epochs=0 returns the seeded initialization unchanged.  `on_epoch`,
    if given, is called as on_epoch(epoch, loss) after each epoch.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n == 0:
        raise ValueError("no training samples")

    if hasattr(case, "d_ref"):  # DC-OPF family
        from . import dcopf
        sizes = (case.B, *hidden, case.B)
        net = init_network(sizes, seed=seed)
        pen = case.M_th if penalty is None else float(penalty)
        for epoch in range(int(epochs)):
            total = 0.0
            acc = [(np.zeros_like(l.W), np.zeros_like(l.b))
                   for l in net.layers]
            for d in samples:
                cost, cot = dcopf.proxy_output_cotangent(case, net, d, pen)
                total += cost
                for i, (gW, gb) in enumerate(weight_gradients(net, d, cot)):
                    acc[i] = (acc[i][0] + gW, acc[i][1] + gb)
            net = _gd_step(net, acc, lr / n)
            if on_epoch is not None:
                on_epoch(epoch, total / n)
        return net

    if hasattr(case, "w"):  # knapsack family: inputs [v_scaled..., l_scaled]
        K = case.K
        sizes = (K + 1, *hidden, K)
        net = init_network(sizes, seed=seed)
        w = np.asarray(case.w, dtype=float)
        for epoch in range(int(epochs)):
            total = 0.0
            acc = [(np.zeros_like(l.W), np.zeros_like(l.b))
                   for l in net.layers]
            for row in samples:
                target = row[:K] / w
                s = forward(net, row)
                err = s - target
                total += float(err @ err)
                for i, (gW, gb) in enumerate(
                        weight_gradients(net, row, 2.0 * err)):
                    acc[i] = (acc[i][0] + gW, acc[i][1] + gb)
            net = _gd_step(net, acc, lr / n)
            if on_epoch is not None:
                on_epoch(epoch, total / n)
        return net

    raise TypeError(f"unsupported case type {type(case).__name__}")


def _gd_step(net: MlpNetwork, grads, step: float) -> MlpNetwork:
    layers = []
    for layer, (gW, gb) in zip(net.layers, grads):
        layers.append(Layer(W=layer.W - step * gW,
                            b=layer.b - step * gb, act=layer.act))
    return MlpNetwork(layers=tuple(layers))


def save_weights(net: MlpNetwork, path):
    doc = {"layers": [{
        "rows": int(l.W.shape[0]),
        "cols": int(l.W.shape[1]),
        "w": [float(v) for v in l.W.ravel()],
        "b": [float(v) for v in l.b],
        "act": l.act,
    } for l in net.layers]}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_weights(path) -> MlpNetwork:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ValueError("weight file missing 'layers'")
    layers = []
    for i, spec in enumerate(doc["layers"]):
        try:
            rows, cols = int(spec["rows"]), int(spec["cols"])
            W = np.array(spec["w"], dtype=float).reshape(rows, cols)
            b = np.array(spec["b"], dtype=float)
            act = spec["act"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed layer {i}: {exc}") from exc
        layers.append(Layer(W=W, b=b, act=act))
    return MlpNetwork(layers=tuple(layers))
