"""Discrete logic networks: hardening, bit-packed evaluation, netlist passes.

A :class:`HardNetwork` is strictly layered.  Gate ``k`` of layer ``l`` reads
two signals of layer ``l-1`` (the input bits for ``l == 0``).  The class
score of group ``c`` is the number of active gates in its slice of the last
layer plus a constant ``group_bias[c]`` (non-zero only after constant
folding removed always-true output gates).
"""

from __future__ import annotations

import io
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import gates, kernels
from .model import ShapeError, SoftNetwork

WORD_BITS = 64
NETLIST_HEADER = "LGN-NETLIST v1"

# truth-table masks used by the per-gate pass below
_DEP_A = np.array([gates.depends_on(i)[0] for i in range(16)])
_DEP_B = np.array([gates.depends_on(i)[1] for i in range(16)])


@dataclass
class HardLayer:
    ops: np.ndarray  # (n,) uint8
    src_a: np.ndarray  # (n,) int32
    src_b: np.ndarray  # (n,) int32

    def __post_init__(self):
        self.ops = np.ascontiguousarray(self.ops, dtype=np.uint8)
        self.src_a = np.ascontiguousarray(self.src_a, dtype=np.int32)
        self.src_b = np.ascontiguousarray(self.src_b, dtype=np.int32)

    @property
    def width(self) -> int:
        return int(self.ops.shape[0])


@dataclass
class HardNetwork:
    input_width: int
    layers: list[HardLayer]
    n_classes: int
    group_bounds: list[tuple[int, int]]
    group_bias: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.group_bias is None or len(self.group_bias) == 0:
            self.group_bias = [0] * self.n_classes
        self.group_bounds = [(int(s), int(e)) for s, e in self.group_bounds]
        self.group_bias = [int(b) for b in self.group_bias]
        self.validate()

    @property
    def widths(self) -> list[int]:
        return [layer.width for layer in self.layers]

    @property
    def n_gates(self) -> int:
        return sum(self.widths)

    def validate(self) -> None:
        prev = self.input_width
        for i, layer in enumerate(self.layers):
            if layer.src_a.shape != layer.ops.shape or layer.src_b.shape != layer.ops.shape:
                raise ShapeError(f"layer {i}: ops/src length mismatch")
            if layer.width and int(layer.ops.max()) > 15:
                raise ValueError(f"layer {i}: operator id out of range")
            for name, src, dep in (("a", layer.src_a, _DEP_A), ("b", layer.src_b, _DEP_B)):
                used = dep[layer.ops]
                if np.any(src < 0):
                    raise ShapeError(f"layer {i}: negative source index on input {name}")
                limit = max(prev, 1)
                if np.any(src[used] >= prev) or np.any(src >= limit):
                    raise ShapeError(f"layer {i}: source index on input {name} outside previous width {prev}")
            prev = layer.width
        if len(self.group_bounds) != self.n_classes or len(self.group_bias) != self.n_classes:
            raise ShapeError("need one group and one bias per class")
        last = self.layers[-1].width if self.layers else self.input_width
        pos = 0
        for s, e in self.group_bounds:
            if s != pos or e < s:
                raise ShapeError("output groups must be contiguous and ordered")
            pos = e
        if pos != last:
            raise ShapeError(f"output groups cover {pos} gates, last layer has {last}")

    def canonical(self) -> "HardNetwork":
        """Copy with every ignored source index set to 0."""
        layers = []
        for layer in self.layers:
            sa = np.where(_DEP_A[layer.ops], layer.src_a, 0)
            sb = np.where(_DEP_B[layer.ops], layer.src_b, 0)
            layers.append(HardLayer(layer.ops.copy(), sa, sb))
        return HardNetwork(self.input_width, layers, self.n_classes, list(self.group_bounds), list(self.group_bias))

    def equals(self, other: "HardNetwork") -> bool:
        if (self.input_width, self.n_classes, self.group_bounds, self.group_bias) != (
            other.input_width, other.n_classes, other.group_bounds, other.group_bias
        ):
            return False
        if len(self.layers) != len(other.layers):
            return False
        return all(
            np.array_equal(x.ops, y.ops) and np.array_equal(x.src_a, y.src_a) and np.array_equal(x.src_b, y.src_b)
            for x, y in zip(self.layers, other.layers)
        )


def discretize(net: SoftNetwork) -> HardNetwork:
    """Replace every softmax by its argmax (lowest index wins ties)."""
    layers = []
    for layer in net.layers:
        ops = np.argmax(layer.w_g, axis=1)
        ia = np.argmax(layer.conn.w_a, axis=1)
        ib = np.argmax(layer.conn.w_b, axis=1)
        if layer.conn.full:
            sa, sb = ia, ib
        else:
            rows = np.arange(layer.width)
            sa = layer.conn.cand_a[rows, ia]
            sb = layer.conn.cand_b[rows, ib]
        layers.append(HardLayer(ops, sa, sb))
    return HardNetwork(net.input_width, layers, net.n_classes, list(net.group_bounds))


# ----------------------------------------------------------------------------
# Bit-packed evaluation


@dataclass
class PackedBatch:
    words: np.ndarray  # (width, n_words) uint64, sample s in bit s % 64 of word s // 64
    n_samples: int

    @property
    def width(self) -> int:
        return int(self.words.shape[0])


def pack_bits(inputs) -> PackedBatch:
    """Pack ``(n_samples, width)`` bits into 64-lane words; spare lanes are 0."""
    x = np.asarray(inputs, dtype=np.uint8)
    if x.ndim != 2:
        raise ShapeError("inputs must be (n_samples, width)")
    n, width = x.shape
    n_words = max(1, -(-n // WORD_BITS))
    packed = np.packbits(x.T, axis=1, bitorder="little")  # (width, ceil(n/8))
    buf = np.zeros((width, n_words * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    words = buf.view("<u8")
    if sys.byteorder != "little":
        words = words.astype(np.uint64)
    return PackedBatch(np.ascontiguousarray(words, dtype=np.uint64), n)


def eval_layers_packed(net: HardNetwork, batch: PackedBatch) -> list[np.ndarray]:
    """Packed outputs of every layer."""
    if batch.width != net.input_width:
        raise ShapeError(f"batch width {batch.width} does not match network input width {net.input_width}")
    x = batch.words
    outs = []
    for layer in net.layers:
        if x.shape[0] == 0:
            x = np.zeros((1, batch.words.shape[1]), dtype=np.uint64)
        x = kernels.eval_gates_packed(x, layer.ops, layer.src_a, layer.src_b)
        outs.append(x)
    return outs


def hard_scores(net: HardNetwork, batch: PackedBatch) -> np.ndarray:
    """Per-sample group popcounts plus bias, ``(n_samples, n_classes)`` int32."""
    outs = eval_layers_packed(net, batch)
    last = outs[-1] if outs else batch.words
    starts = [s for s, _ in net.group_bounds]
    stops = [e for _, e in net.group_bounds]
    counts = kernels.group_counts(last, starts, stops, batch.n_samples)
    return counts + np.asarray(net.group_bias, dtype=np.int32)


def eval_hard(net: HardNetwork, batch: PackedBatch) -> np.ndarray:
    """Class predictions: argmax of group popcounts, lowest class on ties."""
    return np.argmax(hard_scores(net, batch), axis=1)


def predict_hard(net: HardNetwork, inputs, chunk: int = 1 << 16) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.uint8)
    out = [eval_hard(net, pack_bits(inputs[s : s + chunk])) for s in range(0, inputs.shape[0], chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# ----------------------------------------------------------------------------
# Netlist optimisation


def _negate_input(op: int, which: str) -> int:
    f00, f01, f10, f11 = gates.truth_table(op)
    if which == "a":
        return gates.op_from_table(f10, f11, f00, f01)
    return gates.op_from_table(f01, f00, f11, f10)


def optimize_netlist(net: HardNetwork) -> HardNetwork:
    """Semantics-preserving simplification.

    Forward pass per layer: substitute constant sources, reduce gates whose
    two inputs are the same signal, fold gates that end up constant, and
    merge duplicate gates (also complements, whose inversion is pushed into
    the consumers).  Constant output gates move into ``group_bias``.  A
    backward pass then drops every gate without a path to an output group.
    """
    n_layers = len(net.layers)
    # per layer: list of (kind, payload); kind "const" -> value, "alias" -> (rep, neg), "gate"
    ops_l, sa_l, sb_l, kind_l = [], [], [], []
    prev_kind = None  # None means the input layer: every signal is a plain gate
    for li, layer in enumerate(net.layers):
        is_out = li == n_layers - 1
        ops = layer.ops.astype(np.int64).copy()
        sa = layer.src_a.astype(np.int64).copy()
        sb = layer.src_b.astype(np.int64).copy()
        kinds: list[tuple] = []
        seen: dict[tuple[int, int, int], int] = {}
        for k in range(layer.width):
            op, a, b = int(ops[k]), int(sa[k]), int(sb[k])
            dep_a, dep_b = gates.depends_on(op)
            for which in ("a", "b"):
                used = dep_a if which == "a" else dep_b
                if not used or prev_kind is None:
                    continue
                src = a if which == "a" else b
                kd = prev_kind[src]
                if kd[0] == "const":
                    op = gates.restrict(op, **{which: kd[1]})
                elif kd[0] == "alias":
                    rep, neg = kd[1]
                    if neg:
                        op = _negate_input(op, which)
                    if which == "a":
                        a = rep
                    else:
                        b = rep
                dep_a, dep_b = gates.depends_on(op)
            if dep_a and dep_b and a == b:
                op = gates.same_input(op)
            dep_a, dep_b = gates.depends_on(op)
            if not dep_a and dep_b:
                op, a, b = gates.swap_inputs(op), b, 0
            elif not dep_b:
                b = 0
            dep_a, dep_b = gates.depends_on(op)
            if not dep_a:
                a = 0
            ops[k], sa[k], sb[k] = op, a, b
            if not dep_a and not dep_b:
                kinds.append(("const", gates.truth_table(op)[0]))
                continue
            if is_out:
                kinds.append(("gate",))
                continue
            key_a, key_b, key_op = a, b, op
            if dep_b and key_a > key_b:
                key_a, key_b, key_op = b, a, gates.swap_inputs(op)
            key = (key_op, key_a, key_b)
            ckey = (15 - key_op, key_a, key_b)
            if key in seen:
                kinds.append(("alias", (seen[key], False)))
            elif ckey in seen:
                kinds.append(("alias", (seen[ckey], True)))
            else:
                seen[key] = k
                kinds.append(("gate",))
        ops_l.append(ops)
        sa_l.append(sa)
        sb_l.append(sb)
        kind_l.append(kinds)
        prev_kind = kinds

    if n_layers == 0:
        return HardNetwork(net.input_width, [], net.n_classes, list(net.group_bounds), list(net.group_bias))

    # output layer: constants become group bias
    bias = list(net.group_bias)
    out_kinds = kind_l[-1]
    keep_out = np.array([kd[0] == "gate" for kd in out_kinds], dtype=bool)
    bounds = []
    pos = 0
    for c, (s, e) in enumerate(net.group_bounds):
        for k in range(s, e):
            if out_kinds[k][0] == "const":
                bias[c] += out_kinds[k][1]
        n_keep = int(keep_out[s:e].sum())
        bounds.append((pos, pos + n_keep))
        pos += n_keep

    # backward liveness
    live = [None] * n_layers
    live[-1] = keep_out
    for li in range(n_layers - 1, 0, -1):
        need = np.zeros(net.layers[li - 1].width, dtype=bool)
        ops = ops_l[li]
        mask = live[li]
        da = _DEP_A[ops] & mask
        db = _DEP_B[ops] & mask
        need[sa_l[li][da]] = True
        need[sb_l[li][db]] = True
        kinds = kind_l[li - 1]
        for k in np.flatnonzero(need):
            if kinds[k][0] != "gate":
                raise AssertionError("consumer references a folded signal")
        live[li - 1] = need

    layers = []
    remap_prev = None
    for li in range(n_layers):
        keep = np.flatnonzero(live[li])
        ops = ops_l[li][keep]
        sa = sa_l[li][keep]
        sb = sb_l[li][keep]
        if remap_prev is not None:
            sa = np.where(_DEP_A[ops], remap_prev[sa], 0)
            sb = np.where(_DEP_B[ops], remap_prev[sb], 0)
        layers.append(HardLayer(ops, sa, sb))
        remap = np.full(net.layers[li].width, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        remap_prev = remap
    return HardNetwork(net.input_width, layers, net.n_classes, bounds, bias)


def gate_counts(net: HardNetwork) -> list[int]:
    return net.widths


# ----------------------------------------------------------------------------
# Netlist text


def _src_name(layer: int, idx: int) -> str:
    return f"i{idx}" if layer == 0 else f"g{layer - 1}_{idx}"


def export_netlist(net: HardNetwork, sink=None) -> str:
    """Deterministic text form; ignored gate inputs are written as ``-``."""
    lines = [
        NETLIST_HEADER,
        f"inputs {net.input_width}",
        "widths " + " ".join(str(w) for w in net.widths),
        f"classes {net.n_classes}",
    ]
    for li, layer in enumerate(net.layers):
        for k in range(layer.width):
            op = int(layer.ops[k])
            dep_a, dep_b = gates.depends_on(op)
            a = _src_name(li, int(layer.src_a[k])) if dep_a else "-"
            b = _src_name(li, int(layer.src_b[k])) if dep_b else "-"
            lines.append(f"g{li}_{k} = {gates.NAMES[op]}({a}, {b})")
    for c, ((s, e), bias) in enumerate(zip(net.group_bounds, net.group_bias)):
        lines.append(f"group {c} {s} {e} bias {bias}")
    text = "\n".join(lines) + "\n"
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", encoding="ascii", newline="\n") as f:
                f.write(text)
    return text


class NetlistError(ValueError):
    pass


_GATE_RE = re.compile(r"^g(\d+)_(\d+) = ([A-Z_]+)\(([^,]+), ([^)]+)\)$")
_GROUP_RE = re.compile(r"^group (\d+) (\d+) (\d+) bias (-?\d+)$")


def import_netlist(text) -> HardNetwork:
    if hasattr(text, "read"):
        text = text.read()
    lines = io.StringIO(text).read().splitlines()
    if not lines or lines[0] != NETLIST_HEADER:
        raise NetlistError(f"missing {NETLIST_HEADER!r} header")
    try:
        input_width = int(lines[1].split()[1])
        wtoks = lines[2].split()
        if wtoks[0] != "widths":
            raise NetlistError("expected widths line")
        widths = [int(t) for t in wtoks[1:]]
        n_classes = int(lines[3].split()[1])
    except (IndexError, ValueError) as e:
        raise NetlistError(f"malformed header: {e}") from None

    pos = 4
    layers = []
    for li, w in enumerate(widths):
        ops = np.zeros(w, dtype=np.uint8)
        sa = np.zeros(w, dtype=np.int32)
        sb = np.zeros(w, dtype=np.int32)
        for k in range(w):
            if pos >= len(lines):
                raise NetlistError("unexpected end of netlist")
            m = _GATE_RE.match(lines[pos])
            if not m or int(m.group(1)) != li or int(m.group(2)) != k:
                raise NetlistError(f"line {pos + 1}: expected gate g{li}_{k}")
            ops[k] = gates.lookup(m.group(3))
            sa[k] = _parse_src(m.group(4), li, pos)
            sb[k] = _parse_src(m.group(5), li, pos)
            pos += 1
        layers.append(HardLayer(ops, sa, sb))
    bounds, bias = [], []
    for c in range(n_classes):
        m = _GROUP_RE.match(lines[pos]) if pos < len(lines) else None
        if not m or int(m.group(1)) != c:
            raise NetlistError(f"line {pos + 1}: expected group {c}")
        bounds.append((int(m.group(2)), int(m.group(3))))
        bias.append(int(m.group(4)))
        pos += 1
    if pos != len(lines):
        raise NetlistError(f"trailing content at line {pos + 1}")
    try:
        return HardNetwork(input_width, layers, n_classes, bounds, bias)
    except ShapeError as e:
        raise NetlistError(str(e)) from None


def _parse_src(tok: str, layer: int, pos: int) -> int:
    tok = tok.strip()
    if tok == "-":
        return 0
    if layer == 0 and tok.startswith("i"):
        return int(tok[1:])
    prefix = f"g{layer - 1}_"
    if layer > 0 and tok.startswith(prefix):
        return int(tok[len(prefix) :])
    raise NetlistError(f"line {pos + 1}: bad source {tok!r}")
