"""Bit-vector datasets: Yin-Yang points and IDX-format image sets."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# label 1 is the region containing the upper half ("yin"), 0 the other, 2 the dots
YINYANG_CLASSES = ("yang", "yin", "dot")


@dataclass
class BitDataset:
    inputs: np.ndarray  # (n, width) uint8 in {0, 1}
    labels: np.ndarray  # (n,) int64
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs must be (n, width) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_width(self) -> int:
        return self.inputs.shape[1]

    def subset(self, n: int) -> "BitDataset":
        return BitDataset(self.inputs[:n], self.labels[:n], self.n_classes, dict(self.meta, subset=n))


# ----------------------------------------------------------------------------
# Yin-Yang


def yinyang_class(x, y, r_small: float = 0.1, r_big: float = 0.5):
    """Region label (0 yang, 1 yin, 2 dot) for points in ``[0, 2*r_big]^2``.

    Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d_right = np.hypot(x - 1.5 * r_big, y - r_big)
    d_left = np.hypot(x - 0.5 * r_big, y - r_big)
    crit1 = d_right <= r_small
    crit2 = (d_left > r_small) & (d_left <= 0.5 * r_big)
    crit3 = (y > r_big) & (d_right > 0.5 * r_big)
    is_yin = crit1 | crit2 | crit3
    is_dot = (d_right < r_small) | (d_left < r_small)
    return np.where(is_dot, 2, is_yin.astype(np.int64))


def generate_yinyang(n: int, seed: int, r_small: float = 0.1, r_big: float = 0.5, n_classes: int = 3):
    """Sample ``n`` labelled points uniformly from the yin-yang disc.

    Each sample first draws a target class uniformly, then rejection-samples
    points in the disc until one falls in that class, which balances the
    classes.  Returns ``(x, y, labels)`` with coordinates in ``[0, 2*r_big)``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n_classes != 3:
        raise ValueError("the yin-yang construction has exactly 3 regions")
    rng = np.random.default_rng(seed)
    goal = rng.integers(0, n_classes, size=n)
    xs = np.empty(n)
    ys = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        # oversample: roughly a quarter of the square's draws land usefully
        m = todo.size
        cand = rng.random((4 * m, 2)) * (2.0 * r_big)
        inside = np.hypot(cand[:, 0] - r_big, cand[:, 1] - r_big) <= r_big
        cand = cand[inside]
        cls = yinyang_class(cand[:, 0], cand[:, 1], r_small, r_big)
        filled = []
        # deterministic first-fit: candidates are consumed in draw order
        for c in range(n_classes):
            want = todo[goal[todo] == c]
            pool = np.flatnonzero(cls == c)
            k = min(want.size, pool.size)
            xs[want[:k]] = cand[pool[:k], 0]
            ys[want[:k]] = cand[pool[:k], 1]
            filled.append(want[:k])
        done = np.concatenate(filled)
        todo = np.setdiff1d(todo, done, assume_unique=True)
    return xs, ys, goal.astype(np.int64)


def encode_coordinates(x, y, bits_per_coord: int = 12, encoding: str = "binary") -> np.ndarray:
    """Fixed-point (MSB first) or thermometer code of two coordinates in [0, 1).

    Accepts scalars or equal-length arrays; returns ``(2*bits,)`` or
    ``(n, 2*bits)`` uint8.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scalar = x.ndim == 0
    both = np.stack([np.atleast_1d(x), np.atleast_1d(y)], axis=1)
    if not np.all((both >= 0.0) & (both < 1.0)):
        raise ValueError("coordinates must lie in [0, 1)")
    if encoding == "binary":
        q = np.floor(both * (1 << bits_per_coord)).astype(np.int64)
        shifts = np.arange(bits_per_coord - 1, -1, -1)
        bits = (q[:, :, None] >> shifts) & 1
    elif encoding == "thermometer":
        levels = (np.arange(bits_per_coord) + 1) / (bits_per_coord + 1)
        bits = both[:, :, None] >= levels
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    out = bits.reshape(both.shape[0], 2 * bits_per_coord).astype(np.uint8)
    return out[0] if scalar else out


def decode_coordinate(bits) -> float:
    """Inverse of the binary fixed-point code for one coordinate."""
    bits = np.asarray(bits, dtype=np.int64)
    return float((bits * 2.0 ** -np.arange(1, bits.size + 1)).sum())


def yinyang_dataset(
    n: int,
    seed: int,
    *,
    bits_per_coord: int = 12,
    encoding: str = "binary",
    r_small: float = 0.1,
    r_big: float = 0.5,
) -> BitDataset:
    xs, ys, labels = generate_yinyang(n, seed, r_small, r_big)
    scale = 2.0 * r_big
    inputs = encode_coordinates(xs / scale, ys / scale, bits_per_coord, encoding)
    meta = {
        "source": "yinyang",
        "n": n,
        "seed": seed,
        "encoding": encoding,
        "bits_per_coord": bits_per_coord,
        "r_small": r_small,
        "r_big": r_big,
    }
    return BitDataset(inputs, labels, 3, meta)


# ----------------------------------------------------------------------------
# IDX


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxDimensionError(IdxError):
    pass


@dataclass(frozen=True)
class IdxHeader:
    magic: bytes
    dtype_code: int
    n_dims: int
    dims: tuple[int, ...]

    @property
    def size(self) -> int:
        return 4 + 4 * self.n_dims


MAX_IDX_ITEMS = 1 << 34


def parse_idx_header(data: bytes) -> IdxHeader:
    if len(data) < 4:
        raise IdxTruncatedError("stream shorter than the 4-byte magic")
    if data[0] != 0 or data[1] != 0:
        raise IdxMagicError(f"bad magic bytes {data[:4].hex()}")
    dtype_code, n_dims = data[2], data[3]
    if dtype_code != 0x08:
        raise IdxMagicError(f"unsupported IDX dtype 0x{dtype_code:02x} (only unsigned byte)")
    if n_dims == 0:
        raise IdxDimensionError("IDX stream declares zero dimensions")
    head = 4 + 4 * n_dims
    if len(data) < head:
        raise IdxTruncatedError(f"header needs {head} bytes, stream has {len(data)}")
    dims = struct.unpack(f">{n_dims}I", data[4:head])
    return IdxHeader(bytes(data[:4]), dtype_code, n_dims, dims)


def parse_idx(data: bytes) -> np.ndarray:
    """Parse an unsigned-byte IDX container into a row-major uint8 array."""
    data = bytes(data)
    header = parse_idx_header(data)
    dims, head = header.dims, header.size
    total = 1
    for d in dims:
        total *= d
        if total > MAX_IDX_ITEMS:
            raise IdxDimensionError(f"dimensions {dims} exceed the supported size")
    payload = len(data) - head
    if payload < total:
        raise IdxTruncatedError(f"payload has {payload} bytes, dimensions {dims} need {total}")
    if payload > total:
        raise IdxDimensionError(f"payload has {payload - total} trailing bytes beyond dimensions {dims}")
    return np.frombuffer(data, dtype=np.uint8, count=total, offset=head).reshape(dims).copy()


def read_idx(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def binarize(images, thresholds) -> np.ndarray:
    """Threshold normalised pixels: bit (p, t) is 1 iff pixel p > thresholds[t].

    ``images`` is ``(n, ...)`` with values in [0, 1]; the output is
    ``(n, n_pixels * n_thresholds)`` uint8, pixel-major.
    """
    thr = np.asarray(thresholds, dtype=np.float64)
    if thr.size == 0:
        raise ValueError("at least one threshold is required")
    if thr.size > 1 and not np.all(np.diff(thr) > 0):
        raise ValueError("thresholds must be strictly increasing")
    x = np.asarray(images)
    flat = x.reshape(x.shape[0], -1)
    bits = flat[:, :, None] > thr
    return bits.reshape(flat.shape[0], -1).astype(np.uint8)


IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

THRESHOLDS = {"mnist": (0.5,), "fashion-mnist": (0.25, 0.5, 0.75)}


def data_dir() -> Path:
    return Path(os.environ.get("LGN_DATA_DIR", Path.home() / ".cache" / "lgn"))


def find_idx(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_idx_dataset(name: str, split: str, directory=None, thresholds=None) -> BitDataset:
    """Load and binarise MNIST or Fashion-MNIST from IDX files."""
    if name not in THRESHOLDS:
        raise ValueError(f"unknown IDX dataset {name!r}")
    directory = Path(directory) if directory is not None else data_dir() / name
    thr = tuple(THRESHOLDS[name] if thresholds is None else thresholds)
    img_stem, lbl_stem = IDX_FILES[split]
    images = read_idx(find_idx(directory, img_stem))
    labels = read_idx(find_idx(directory, lbl_stem))
    if images.shape[0] != labels.shape[0]:
        raise IdxDimensionError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    inputs = binarize(images.astype(np.float32) / np.float32(255.0), thr)
    meta = {"source": name, "split": split, "thresholds": list(thr), "n": int(images.shape[0])}
    return BitDataset(inputs, labels.astype(np.int64), 10, meta)
