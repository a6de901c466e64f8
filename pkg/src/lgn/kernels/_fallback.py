"""Pure numpy implementations of the hot kernels.

Activations are stored feature-major: ``(features, batch)``, float32.
Packed bit planes are ``(signals, words)`` uint64, one sample per bit lane.
"""

from __future__ import annotations

import numpy as np

from ..gates import TABLES

_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def gather_mix(prev, cand, prob):
    """out[n, :] = sum_c prob[n, c] * prev[cand[n, c], :]"""
    x = prev[cand]  # (N, C, B)
    return np.matmul(prob[:, None, :], x)[:, 0, :]


def gather_mix_backward(dout, prev, cand, prob, with_dprev=True):
    """Gradients of ``gather_mix`` w.r.t. prob and prev.

    dprev rows are accumulated in (gate, candidate) order so the result
    does not depend on hashing or threading.
    """
    n, c = cand.shape
    x = prev[cand]
    dprob = np.matmul(x, dout[:, :, None])[:, :, 0]
    if not with_dprev:
        return dprob, None

    flat = cand.reshape(-1)
    order = np.argsort(flat, kind="stable")
    contrib = (prob[:, :, None] * dout[:, None, :]).reshape(n * c, -1)[order]
    keys = flat[order]
    uniq, starts = np.unique(keys, return_index=True)
    dprev = np.zeros_like(prev)
    dprev[uniq] = np.add.reduceat(contrib, starts, axis=0)
    return dprob, dprev


def eval_gates_packed(words, ops, src_a, src_b):
    a = words[src_a]
    b = words[src_b]
    t = TABLES[ops].astype(bool)
    m = np.where(t, _ONES, np.uint64(0))[:, :, None]
    na = ~a
    nb = ~b
    return (m[:, 0] & na & nb) | (m[:, 1] & na & b) | (m[:, 2] & a & nb) | (m[:, 3] & a & b)


def unpack_lanes(words, n_samples):
    """(signals, words) uint64 -> (signals, n_samples) uint8 bits."""
    w = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(w.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :n_samples]


def group_counts(words, starts, stops, n_samples):
    bits = unpack_lanes(words, n_samples)
    out = np.zeros((n_samples, len(starts)), dtype=np.int32)
    for g, (s, e) in enumerate(zip(starts, stops)):
        if e > s:
            out[:, g] = bits[s:e].sum(axis=0, dtype=np.int32)
    return out
