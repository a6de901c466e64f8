"""Soft (trainable) logic gate network with learnable connections.

Each gate input is a softmax-weighted mixture over ``n_candidates`` source
signals of the previous layer; each gate output is a softmax-weighted
mixture over the 16 relaxed two-input operators.  The last layer is split
into per-class groups whose sums, divided by ``head_tau``, are the class
scores.

Internally activations are feature-major, ``(features, batch)``.  The
public helpers accept ``(batch, features)`` arrays or single vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gates, kernels

DEFAULT_RESIDUAL_WEIGHT = 5.0


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class NumericError(FloatingPointError):
    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


@dataclass
class ConnectionSpec:
    """Connection distributions for both inputs of every gate in one layer.

    ``cand_a``/``cand_b`` are ``(width, n_candidates)`` int32 index tables
    into the previous layer, or ``None`` in full-connection mode where the
    candidates are implicitly ``0..prev_width-1``.
    """

    prev_width: int
    n_candidates: int
    w_a: np.ndarray
    w_b: np.ndarray
    cand_a: np.ndarray | None = None
    cand_b: np.ndarray | None = None
    t_c: float = 1.0

    @property
    def full(self) -> bool:
        return self.cand_a is None

    def candidates(self, which: str) -> np.ndarray:
        cand = self.cand_a if which == "a" else self.cand_b
        if cand is None:
            n = self.w_a.shape[0]
            return np.broadcast_to(np.arange(self.prev_width, dtype=np.int32), (n, self.prev_width))
        return cand


@dataclass
class SoftLayer:
    width: int
    w_g: np.ndarray
    conn: ConnectionSpec
    t_g: float = 1.0
    # "auto" uses the dense matrix path in full-connection mode, else gather.
    path: str = "auto"

    @property
    def uses_dense(self) -> bool:
        if self.path == "dense":
            return True
        if self.path == "gather":
            return False
        return self.conn.full


@dataclass
class SoftNetwork:
    input_width: int
    layers: list[SoftLayer]
    n_classes: int
    head_tau: float
    group_bounds: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.group_bounds:
            self.group_bounds = group_bounds(self.layers[-1].width, self.n_classes)

    @property
    def dtype(self):
        return self.layers[0].w_g.dtype

    @property
    def widths(self) -> list[int]:
        return [layer.width for layer in self.layers]

    @property
    def n_gates(self) -> int:
        return sum(self.widths)

    def set_temperatures(self, t_c: float | None = None, t_g: float | None = None) -> None:
        for layer in self.layers:
            if t_c is not None:
                layer.conn.t_c = float(t_c)
            if t_g is not None:
                layer.t_g = float(t_g)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"layers.{i}.w_g", layer.w_g))
            out.append((f"layers.{i}.w_a", layer.conn.w_a))
            out.append((f"layers.{i}.w_b", layer.conn.w_b))
        return out

    def copy(self) -> "SoftNetwork":
        layers = []
        for layer in self.layers:
            c = layer.conn
            conn = ConnectionSpec(
                c.prev_width,
                c.n_candidates,
                c.w_a.copy(),
                c.w_b.copy(),
                None if c.cand_a is None else c.cand_a.copy(),
                None if c.cand_b is None else c.cand_b.copy(),
                c.t_c,
            )
            layers.append(SoftLayer(layer.width, layer.w_g.copy(), conn, layer.t_g, layer.path))
        return SoftNetwork(self.input_width, layers, self.n_classes, self.head_tau, list(self.group_bounds))


@dataclass
class LayerTrace:
    x: np.ndarray  # (prev_width, B) input to the layer
    a: np.ndarray  # (width, B)
    b: np.ndarray
    g: np.ndarray
    p_a: np.ndarray  # (width, n_candidates)
    p_b: np.ndarray
    p_g: np.ndarray  # (width, 16)
    coef: np.ndarray  # (width, 4) mixed multilinear coefficients


@dataclass
class ForwardTrace:
    layers: list[LayerTrace]
    scores: np.ndarray  # (B, n_classes)
    single: bool = False


@dataclass
class LayerGrads:
    w_g: np.ndarray
    w_a: np.ndarray
    w_b: np.ndarray


def group_bounds(width: int, n_classes: int, uneven: bool = True) -> list[tuple[int, int]]:
    """Contiguous per-class groups of the output layer.

    When the width is not divisible the first ``width % n_classes`` groups
    get one extra gate (only if ``uneven`` is allowed).
    """
    if width < n_classes:
        raise ConfigError(f"output width {width} is smaller than n_classes {n_classes}")
    if width % n_classes and not uneven:
        raise ConfigError(f"output width {width} is not divisible by n_classes {n_classes}")
    base, extra = divmod(width, n_classes)
    bounds, start = [], 0
    for c in range(n_classes):
        stop = start + base + (1 if c < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def softmax_rows(w: np.ndarray, t: float) -> np.ndarray:
    z = w / np.asarray(t, dtype=w.dtype)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(p: np.ndarray, dp: np.ndarray, t: float) -> np.ndarray:
    return p * (dp - (p * dp).sum(axis=-1, keepdims=True)) / np.asarray(t, dtype=p.dtype)


# ----------------------------------------------------------------------------
# Layer pieces


def _mix_connections_fm(layer: SoftLayer, x: np.ndarray):
    conn = layer.conn
    if x.shape[0] != conn.prev_width:
        raise ShapeError(f"expected {conn.prev_width} input signals, got {x.shape[0]}")
    p_a = softmax_rows(conn.w_a, conn.t_c)
    p_b = softmax_rows(conn.w_b, conn.t_c)
    if layer.uses_dense:
        pa_full, pb_full = _dense_probs(conn, p_a, p_b)
        a = pa_full @ x
        b = pb_full @ x
    else:
        a = kernels.gather_mix(x, conn.candidates("a"), p_a)
        b = kernels.gather_mix(x, conn.candidates("b"), p_b)
    return a, b, p_a, p_b


def _dense_probs(conn: ConnectionSpec, p_a, p_b):
    if conn.full:
        return p_a, p_b
    n = p_a.shape[0]
    rows = np.arange(n)[:, None]
    out_a = np.zeros((n, conn.prev_width), dtype=p_a.dtype)
    out_b = np.zeros((n, conn.prev_width), dtype=p_b.dtype)
    out_a[rows, conn.cand_a] = p_a
    out_b[rows, conn.cand_b] = p_b
    return out_a, out_b


def _mix_gates_fm(layer: SoftLayer, a: np.ndarray, b: np.ndarray):
    p_g = softmax_rows(layer.w_g, layer.t_g)
    coef = p_g @ gates.COEFFS.astype(p_g.dtype)
    c0, c1, c2, c3 = (coef[:, i : i + 1] for i in range(4))
    g = c0 + c1 * a + c2 * b + c3 * (a * b)
    return g, p_g, coef


def _as_fm(x, width: int, dtype) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"expected inputs of width {width}, got shape {np.shape(x)}")
    return np.ascontiguousarray(x.T), single


def mix_connections(layer: SoftLayer, prev_activations):
    """Connection mixing for one layer; returns the (a, b) gate inputs."""
    x, single = _as_fm(prev_activations, layer.conn.prev_width, layer.w_g.dtype)
    a, b, _, _ = _mix_connections_fm(layer, x)
    if single:
        return a[:, 0], b[:, 0]
    return a.T, b.T


def mix_gates(layer: SoftLayer, a, b):
    """Operator mixing for one layer given its gate inputs."""
    a_fm, single = _as_fm(a, layer.width, layer.w_g.dtype)
    b_fm, _ = _as_fm(b, layer.width, layer.w_g.dtype)
    g, _, _ = _mix_gates_fm(layer, a_fm, b_fm)
    return g[:, 0] if single else g.T


# ----------------------------------------------------------------------------
# Network forward / backward


def forward(net: SoftNetwork, inputs) -> tuple[np.ndarray, ForwardTrace]:
    """Evaluate the soft network.

    ``inputs`` is ``(batch, input_width)`` or a single vector.  Returns the
    class scores (``(batch, n_classes)`` or ``(n_classes,)``) and the trace
    needed by :func:`backward`.
    """
    x, single = _as_fm(inputs, net.input_width, net.dtype)
    traces = []
    for layer in net.layers:
        a, b, p_a, p_b = _mix_connections_fm(layer, x)
        g, p_g, coef = _mix_gates_fm(layer, a, b)
        traces.append(LayerTrace(x, a, b, g, p_a, p_b, p_g, coef))
        x = g
    starts = [s for s, _ in net.group_bounds]
    scores = (np.add.reduceat(x, starts, axis=0) / np.asarray(net.head_tau, dtype=x.dtype)).T
    if not np.isfinite(scores).all():
        for i, t in enumerate(traces):
            if not np.isfinite(t.g).all():
                raise NumericError(f"non-finite activation in layer {i}", layer=i)
        raise NumericError("non-finite class scores")
    trace = ForwardTrace(traces, scores, single)
    return (scores[0] if single else scores), trace


def backward(net: SoftNetwork, trace: ForwardTrace, dL_dscores) -> list[LayerGrads]:
    """Reverse-mode gradients of a loss w.r.t. every w_g, w_a, w_b."""
    if len(trace.layers) != len(net.layers):
        raise ShapeError("trace does not match network depth")
    d = np.asarray(dL_dscores, dtype=net.dtype)
    if d.ndim == 1:
        d = d[None, :]
    if d.shape != trace.scores.shape:
        raise ShapeError(f"dL_dscores shape {d.shape} does not match scores {trace.scores.shape}")

    sizes = [e - s for s, e in net.group_bounds]
    dg = np.repeat(d.T / np.asarray(net.head_tau, dtype=d.dtype), sizes, axis=0)
    coeffs_t = gates.COEFFS.T.astype(d.dtype)

    grads: list[LayerGrads] = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer, t = net.layers[i], trace.layers[i]
        if t.g.shape[0] != layer.width or t.p_a.shape != layer.conn.w_a.shape:
            raise ShapeError(f"trace/parameter mismatch in layer {i}")
        c1, c2, c3 = t.coef[:, 1:2], t.coef[:, 2:3], t.coef[:, 3:4]
        da = dg * (c1 + c3 * t.b)
        db = dg * (c2 + c3 * t.a)

        dga = dg * t.a
        sums = np.stack(
            [dg.sum(axis=1), dga.sum(axis=1), (dg * t.b).sum(axis=1), (dga * t.b).sum(axis=1)],
            axis=1,
        )
        dw_g = _softmax_backward(t.p_g, sums @ coeffs_t, layer.t_g)

        conn = layer.conn
        if layer.uses_dense:
            pa_full, pb_full = _dense_probs(conn, t.p_a, t.p_b)
            dpa_full = da @ t.x.T
            dpb_full = db @ t.x.T
            if conn.full:
                dp_a, dp_b = dpa_full, dpb_full
            else:
                rows = np.arange(layer.width)[:, None]
                dp_a, dp_b = dpa_full[rows, conn.cand_a], dpb_full[rows, conn.cand_b]
            dx = pa_full.T @ da + pb_full.T @ db if i > 0 else None
        else:
            need = i > 0
            dp_a, dx_a = kernels.gather_mix_backward(da, t.x, conn.candidates("a"), t.p_a, need)
            dp_b, dx_b = kernels.gather_mix_backward(db, t.x, conn.candidates("b"), t.p_b, need)
            dx = dx_a + dx_b if need else None
        grads[i] = LayerGrads(
            dw_g.astype(d.dtype, copy=False),
            _softmax_backward(t.p_a, dp_a, conn.t_c).astype(d.dtype, copy=False),
            _softmax_backward(t.p_b, dp_b, conn.t_c).astype(d.dtype, copy=False),
        )
        dg = dx
    return grads


def cross_entropy_loss(scores, label):
    """Softmax cross-entropy.

    For a single score vector and integer label returns ``(loss, grad)``.
    For a ``(batch, n_classes)`` matrix and label vector returns the mean
    loss and the gradient of that mean.
    """
    s = np.asarray(scores)
    single = s.ndim == 1
    if single:
        s = s[None, :]
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != s.shape[0]:
        raise ShapeError("one label per score row required")
    if labels.min() < 0 or labels.max() >= s.shape[1]:
        raise ValueError(f"label out of range for {s.shape[1]} classes")
    z = s - s.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(s.shape[0])
    losses = -logp[rows, labels]
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    if single:
        return float(losses[0]), grad[0]
    n = s.shape[0]
    return float(losses.mean()), grad / np.asarray(n, dtype=grad.dtype)


def predict(net: SoftNetwork, inputs, batch_size: int = 4096) -> np.ndarray:
    """Soft-network class predictions (argmax of scores, lowest index on ties)."""
    inputs = np.asarray(inputs)
    out = []
    for s in range(0, inputs.shape[0], batch_size):
        scores, _ = forward(net, inputs[s : s + batch_size])
        out.append(np.argmax(scores, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# ----------------------------------------------------------------------------
# Construction


@dataclass
class Architecture:
    """What :func:`build_network` needs.

    ``n_candidates`` holds one entry per layer; ``None`` (or the previous
    width) selects full-connection mode, 1 gives fixed random wiring.
    """

    input_width: int
    widths: list[int]
    n_candidates: list[int | None]
    n_classes: int
    head_tau: float | None = None
    residual_weight: float = DEFAULT_RESIDUAL_WEIGHT
    cover_inputs: bool = True
    conn_init_std: float = 0.0
    gate_init_std: float = 0.0
    uneven_groups: bool = False
    conn_path: str = "auto"
    dtype: str = "float32"

    def validate(self) -> None:
        if self.input_width <= 0:
            raise ConfigError("input_width must be positive")
        if not self.widths:
            raise ConfigError("at least one layer is required")
        if len(self.n_candidates) != len(self.widths):
            raise ConfigError(
                f"n_candidates has {len(self.n_candidates)} entries for {len(self.widths)} layers"
            )
        prev = self.input_width
        for i, (w, nc) in enumerate(zip(self.widths, self.n_candidates)):
            if w <= 0:
                raise ConfigError(f"layer {i}: width must be positive")
            if nc is not None and not 1 <= nc <= prev:
                raise ConfigError(f"layer {i}: n_candidates={nc} must be in [1, {prev}]")
            prev = w
        if self.n_classes <= 0:
            raise ConfigError("n_classes must be positive")
        group_bounds(self.widths[-1], self.n_classes, uneven=self.uneven_groups)
        if self.head_tau is not None and not self.head_tau > 0:
            raise ConfigError("head_tau must be positive")
        if not self.conn_init_std >= 0:
            raise ConfigError("conn_init_std must be non-negative")
        if not self.gate_init_std >= 0:
            raise ConfigError("gate_init_std must be non-negative")
        if self.conn_path not in ("auto", "gather", "dense"):
            raise ConfigError(f"unknown conn_path {self.conn_path!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    def default_head_tau(self) -> float:
        return (self.widths[-1] // self.n_classes) / 10.0


def build_network(arch: Architecture, rng_seed: int) -> SoftNetwork:
    """Fresh network: residual-initialised gates, uniform connection weights,
    candidate lists drawn reproducibly from ``rng_seed``.

    A positive ``conn_init_std`` replaces the uniform start with Gaussian
    connection weights; full-connection layers need this, since with equal
    weights every gate sees the same inputs and gets the same gradient.
    ``gate_init_std`` adds Gaussian noise to the residual gate init.  Both
    also separate choices that receive identical gradients forever, e.g.
    candidates or operators that agree on inputs which never change.
    """
    arch.validate()
    rng = np.random.default_rng(rng_seed)
    # separate stream so the wiring does not depend on the weight init
    init_rng = np.random.default_rng([rng_seed, 1])
    dt = np.dtype(arch.dtype)
    layers = []
    prev = arch.input_width
    for i, (width, nc) in enumerate(zip(arch.widths, arch.n_candidates)):
        nc = prev if nc is None else nc
        w_g = np.zeros((width, gates.N_OPS), dtype=dt)
        w_g[:, gates.PASS_A] = arch.residual_weight
        if arch.gate_init_std > 0:
            w_g += init_rng.normal(0.0, arch.gate_init_std, w_g.shape).astype(dt)
        if nc == prev:
            cand_a = cand_b = None
        else:
            cover = arch.cover_inputs and i == 0
            cand_a, cand_b = sample_candidates(rng, prev, width, nc, cover=cover)
        if arch.conn_init_std > 0:
            w_a = init_rng.normal(0.0, arch.conn_init_std, (width, nc)).astype(dt)
            w_b = init_rng.normal(0.0, arch.conn_init_std, (width, nc)).astype(dt)
        else:
            w_a = np.zeros((width, nc), dtype=dt)
            w_b = np.zeros((width, nc), dtype=dt)
        conn = ConnectionSpec(
            prev,
            nc,
            w_a,
            w_b,
            cand_a,
            cand_b,
        )
        layers.append(SoftLayer(width, w_g, conn, path=arch.conn_path))
        prev = width
    tau = arch.head_tau if arch.head_tau is not None else arch.default_head_tau()
    bounds = group_bounds(arch.widths[-1], arch.n_classes, uneven=arch.uneven_groups)
    return SoftNetwork(arch.input_width, layers, arch.n_classes, float(tau), bounds)


def sample_candidates(rng: np.random.Generator, prev: int, width: int, nc: int, cover: bool = False):
    """Per-gate-input candidate lists, distinct within each list.

    With ``cover`` the first candidate slots of all ``2*width`` lists are
    filled round-robin from a permutation of the sources, so every source is
    referenced at least once when there are enough slots.
    """
    n_lists = 2 * width
    table = np.full((n_lists, nc), -1, dtype=np.int64)
    if cover:
        perm = rng.permutation(prev)
        n_fill = min(prev, n_lists * nc)
        j = np.arange(n_fill)
        table[j % n_lists, j // n_lists] = perm[:n_fill]
    for row in table:
        have = row[row >= 0]
        need = nc - have.size
        if need == 0:
            rng.shuffle(row)
            continue
        if have.size == 0:
            row[:] = rng.choice(prev, size=nc, replace=False)
            continue
        pool = np.setdiff1d(np.arange(prev), have, assume_unique=True)
        row[have.size :] = rng.choice(pool, size=need, replace=False)
        rng.shuffle(row)
    table = table.astype(np.int32)
    return np.ascontiguousarray(table[:width]), np.ascontiguousarray(table[width:])
