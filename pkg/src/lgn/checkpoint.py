"""Binary checkpoint container.

Layout::

    b"LGNCKPT1"
    uint64 LE    length of the metadata block
    metadata     UTF-8 JSON, sorted keys, one section table
    payload      raw little-endian arrays, in section-table order

Weights are IEEE-754 float32 (float64 only for networks built that way),
index tables int32.  Reading a container with another format version is
an error.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .train import SGD, TrainPlan

MAGIC = b"LGNCKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    net: model.SoftNetwork
    epoch: int = 0
    optimizer: dict | None = None  # {"kind", "t", "m", "v"}
    plan: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)


def _arch_meta(net: model.SoftNetwork) -> dict:
    return {
        "input_width": net.input_width,
        "widths": net.widths,
        "n_candidates": [layer.conn.n_candidates for layer in net.layers],
        "full": [layer.conn.full for layer in net.layers],
        "paths": [layer.path for layer in net.layers],
        "n_classes": net.n_classes,
        "head_tau": net.head_tau,
        "group_bounds": [list(b) for b in net.group_bounds],
        "t_c": [layer.conn.t_c for layer in net.layers],
        "t_g": [layer.t_g for layer in net.layers],
        "dtype": str(net.dtype),
    }


def to_bytes(ck: Checkpoint) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = []
    for i, layer in enumerate(ck.net.layers):
        arrays.append((f"layers.{i}.w_g", layer.w_g))
        arrays.append((f"layers.{i}.w_a", layer.conn.w_a))
        arrays.append((f"layers.{i}.w_b", layer.conn.w_b))
        if not layer.conn.full:
            arrays.append((f"layers.{i}.cand_a", layer.conn.cand_a))
            arrays.append((f"layers.{i}.cand_b", layer.conn.cand_b))
    opt_meta = None
    if ck.optimizer is not None:
        opt_meta = {"kind": ck.optimizer["kind"], "t": int(ck.optimizer["t"])}
        for j, m in enumerate(ck.optimizer.get("m", [])):
            arrays.append((f"opt.m.{j}", m))
        for j, v in enumerate(ck.optimizer.get("v", [])):
            arrays.append((f"opt.v.{j}", v))

    sections = []
    offset = 0
    blobs = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            dt = np.dtype("<f4") if arr.dtype.itemsize == 4 else np.dtype("<f8")
        else:
            dt = np.dtype("<i4")
        blob = np.ascontiguousarray(arr, dtype=dt).tobytes()
        sections.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)

    meta = {
        "format_version": FORMAT_VERSION,
        "architecture": _arch_meta(ck.net),
        "epoch": ck.epoch,
        "optimizer": opt_meta,
        "plan": ck.plan,
        "dataset": ck.dataset,
        "seed": ck.seed,
        "config": ck.config,
        "sections": sections,
    }
    head = json.dumps(meta, sort_keys=True, indent=1).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blobs)


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not an LGN checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", data[8:16])
    if 16 + n > len(data):
        raise CheckpointError("truncated metadata block")
    try:
        meta = json.loads(data[16 : 16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt metadata: {e}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {meta.get('format_version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    base = 16 + n
    arrays = {}
    for s in meta["sections"]:
        start = base + s["offset"]
        if start + s["nbytes"] > len(data):
            raise CheckpointError(f"truncated section {s['name']}")
        arr = np.frombuffer(data, dtype=np.dtype(s["dtype"]), count=s["nbytes"] // np.dtype(s["dtype"]).itemsize, offset=start)
        arrays[s["name"]] = arr.reshape(s["shape"]).astype(np.dtype(s["dtype"]).newbyteorder("="))

    a = meta["architecture"]
    dt = np.dtype(a["dtype"])
    layers = []
    prev = a["input_width"]
    for i, width in enumerate(a["widths"]):
        full = a["full"][i]
        conn = model.ConnectionSpec(
            prev,
            a["n_candidates"][i],
            arrays[f"layers.{i}.w_a"].astype(dt),
            arrays[f"layers.{i}.w_b"].astype(dt),
            None if full else arrays[f"layers.{i}.cand_a"].astype(np.int32),
            None if full else arrays[f"layers.{i}.cand_b"].astype(np.int32),
            a["t_c"][i],
        )
        layers.append(model.SoftLayer(width, arrays[f"layers.{i}.w_g"].astype(dt), conn, a["t_g"][i], a["paths"][i]))
        prev = width
    net = model.SoftNetwork(
        a["input_width"], layers, a["n_classes"], a["head_tau"], [tuple(b) for b in a["group_bounds"]]
    )
    opt = None
    if meta["optimizer"] is not None:
        k = sum(1 for name in arrays if name.startswith("opt.m."))
        opt = {
            "kind": meta["optimizer"]["kind"],
            "t": meta["optimizer"]["t"],
            "m": [arrays[f"opt.m.{j}"] for j in range(k)],
            "v": [arrays[f"opt.v.{j}"] for j in range(k)],
        }
    return Checkpoint(net, meta["epoch"], opt, meta["plan"], meta["dataset"], meta["seed"], meta["config"])


def save(ck: Checkpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ck))


def load(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e}") from None
    return from_bytes(data)


def optimizer_state(opt) -> dict:
    kind = "sgd" if isinstance(opt, SGD) else "adam"
    st = opt.state()
    return {"kind": kind, "t": st["t"], "m": st["m"], "v": st["v"]}


def restore_optimizer(net: model.SoftNetwork, plan: TrainPlan, state: dict | None):
    from .train import make_optimizer

    opt = make_optimizer(net, plan)
    if state is not None:
        if state["kind"] != plan.optimizer:
            raise CheckpointError(f"checkpoint optimizer {state['kind']!r} does not match plan {plan.optimizer!r}")
        opt.load_state(state)
    return opt


