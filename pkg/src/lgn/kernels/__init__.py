"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; setting ``LGN_PURE_PYTHON=1``
forces the numpy implementations.  ``BACKEND`` names the active one.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import _fallback

_native = None
if os.environ.get("LGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        _native = importlib.import_module(".kernels._native", "lgn")
    except ImportError:  # extension not built
        _native = None

BACKEND = "native" if _native is not None else "numpy"


def _real(x):
    x = np.asarray(x)
    dt = np.float64 if x.dtype == np.float64 else np.float32
    return np.ascontiguousarray(x, dtype=dt)


def _i32(x):
    return np.ascontiguousarray(x, dtype=np.int32)


def gather_mix(prev, cand, prob, backend=None):
    impl = _pick(backend)
    prev = _real(prev)
    return impl.gather_mix(prev, _i32(cand), np.ascontiguousarray(prob, dtype=prev.dtype))


def gather_mix_backward(dout, prev, cand, prob, with_dprev=True, backend=None):
    impl = _pick(backend)
    prev = _real(prev)
    dt = prev.dtype
    return impl.gather_mix_backward(
        np.ascontiguousarray(dout, dtype=dt), prev, _i32(cand), np.ascontiguousarray(prob, dtype=dt), with_dprev
    )


def eval_gates_packed(words, ops, src_a, src_b, backend=None):
    impl = _pick(backend)
    return impl.eval_gates_packed(
        np.ascontiguousarray(words, dtype=np.uint64),
        np.ascontiguousarray(ops, dtype=np.uint8),
        _i32(src_a),
        _i32(src_b),
    )


def group_counts(words, starts, stops, n_samples, backend=None):
    impl = _pick(backend)
    return impl.group_counts(
        np.ascontiguousarray(words, dtype=np.uint64),
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(stops, dtype=np.int64),
        int(n_samples),
    )


def _pick(backend):
    if backend is None:
        return _native if _native is not None else _fallback
    if backend == "numpy":
        return _fallback
    if backend == "native":
        if _native is None:
            raise RuntimeError("compiled kernels are not available")
        return _native
    raise ValueError(f"unknown kernel backend {backend!r}")


def available_backends():
    return ["numpy"] + (["native"] if _native is not None else [])
