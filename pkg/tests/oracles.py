"""Independent reference implementations used by the tests.

Everything here is deliberately naive: scalar loops, explicit sums, no
shared code with the package beyond its data classes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from lgn import gates, model
from lgn.hard import HardLayer, HardNetwork

# Relaxations written out term by term, indexed like the package's operator ids.
RELAX = [
    lambda a, b: 0.0,
    lambda a, b: a * b,
    lambda a, b: a - a * b,
    lambda a, b: a,
    lambda a, b: b - a * b,
    lambda a, b: b,
    lambda a, b: a + b - 2 * a * b,
    lambda a, b: a + b - a * b,
    lambda a, b: 1 - (a + b - a * b),
    lambda a, b: 1 - (a + b - 2 * a * b),
    lambda a, b: 1 - b,
    lambda a, b: 1 - b + a * b,
    lambda a, b: 1 - a,
    lambda a, b: 1 - a + a * b,
    lambda a, b: 1 - a * b,
    lambda a, b: 1.0,
]

BOOL = [lambda a, b, f=f: int(round(f(a, b))) for f in RELAX]


def softmax(w, t):
    m = max(w)
    e = [math.exp((x - m) / t) for x in w]
    s = sum(e)
    return [x / s for x in e]


def soft_forward(net: model.SoftNetwork, bits) -> list[float]:
    """Scores for one input vector, evaluated gate by gate in float64."""
    prev = [float(v) for v in bits]
    for layer in net.layers:
        conn = layer.conn
        cand_a = conn.candidates("a")
        cand_b = conn.candidates("b")
        out = []
        for k in range(layer.width):
            pa = softmax([float(v) for v in conn.w_a[k]], conn.t_c)
            pb = softmax([float(v) for v in conn.w_b[k]], conn.t_c)
            a = sum(p * prev[j] for p, j in zip(pa, cand_a[k]))
            b = sum(p * prev[j] for p, j in zip(pb, cand_b[k]))
            pg = softmax([float(v) for v in layer.w_g[k]], layer.t_g)
            out.append(sum(p * RELAX[i](a, b) for i, p in enumerate(pg)))
        prev = out
    return [sum(prev[s:e]) / net.head_tau for s, e in net.group_bounds]


def hard_forward(net: HardNetwork, bits) -> list[int]:
    """Per-class counts for one input vector, gate by gate."""
    prev = [int(v) for v in bits]
    for layer in net.layers:
        prev = [BOOL[int(op)](prev[a], prev[b]) for op, a, b in zip(layer.ops, layer.src_a, layer.src_b)]
    return [sum(prev[s:e]) + int(bias) for (s, e), bias in zip(net.group_bounds, net.group_bias)]


def hard_predict(net: HardNetwork, bits) -> int:
    counts = hard_forward(net, bits)
    best = 0
    for c in range(1, len(counts)):
        if counts[c] > counts[best]:
            best = c
    return best


def random_soft_network(rng, input_width, widths, n_classes, n_candidates=None, dtype="float64", scale=1.0, path="auto"):
    """Soft network with random weights; n_candidates entries may be None (full)."""
    if n_candidates is None:
        n_candidates = []
        prev = input_width
        for w in widths:
            n_candidates.append(int(rng.integers(1, prev + 1)))
            prev = w
    arch = model.Architecture(
        input_width, list(widths), list(n_candidates), n_classes, uneven_groups=True, dtype=dtype, conn_path=path
    )
    net = model.build_network(arch, int(rng.integers(1 << 30)))
    for layer in net.layers:
        layer.w_g[...] = rng.normal(0, scale, layer.w_g.shape)
        layer.conn.w_a[...] = rng.normal(0, scale, layer.conn.w_a.shape)
        layer.conn.w_b[...] = rng.normal(0, scale, layer.conn.w_b.shape)
    return net


def random_hard_network(rng, input_width, widths, n_classes, bias=False):
    layers = []
    prev = input_width
    for w in widths:
        layers.append(
            HardLayer(
                rng.integers(0, 16, w).astype(np.uint8),
                rng.integers(0, prev, w).astype(np.int32),
                rng.integers(0, prev, w).astype(np.int32),
            )
        )
        prev = w
    bounds = model.group_bounds(widths[-1], n_classes, uneven=True)
    gb = rng.integers(0, 3, n_classes) if bias else np.zeros(n_classes)
    return HardNetwork(input_width, layers, n_classes, bounds, gb.astype(np.int64))


def loss_of(net, x, y):
    scores, _ = model.forward(net, x)
    loss, _ = model.cross_entropy_loss(scores, y)
    return loss


def bernoulli_expectation(op, a, b):
    """Brute-force E[f(A, B)] with A ~ Bernoulli(a), B ~ Bernoulli(b) independent."""
    total = 0.0
    for x, y in itertools.product((0, 1), repeat=2):
        weight = (a if x else 1 - a) * (b if y else 1 - b)
        total += weight * gates.eval_boolean(op, x, y)
    return total


def finite_difference_check(net, x, y, h=1e-4, details=False):
    """Largest relative error of backward() against central differences.

    Entries whose absolute deviation is within 1e-6 are not counted.  With
    ``details`` the largest absolute deviation is returned as well.
    """
    scores, trace = model.forward(net, x)
    _, d = model.cross_entropy_loss(scores, y)
    grads = model.backward(net, trace, d)
    analytic = []
    for g in grads:
        analytic += [g.w_g, g.w_a, g.w_b]
    worst = worst_abs = 0.0
    for (_, p), ga in zip(net.parameters(), analytic):
        assert ga.shape == p.shape
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_of(net, x, y)
            p[idx] = old - h
            down = loss_of(net, x, y)
            p[idx] = old
            num = (up - down) / (2 * h)
            dev = abs(num - ga[idx])
            worst_abs = max(worst_abs, dev)
            if dev > 1e-6:
                worst = max(worst, dev / max(abs(num), abs(ga[idx])))
    return (worst, worst_abs) if details else worst
