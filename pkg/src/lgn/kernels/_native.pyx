# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics mirror lgn.kernels._fallback."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int32_t, uint8_t, int64_t

cnp.import_array()

ctypedef fused real:
    float
    double

cdef object _dtype(const real[:, ::1] x):
    if real is float:
        return np.float32
    return np.float64


def gather_mix(const real[:, ::1] prev, const int32_t[:, ::1] cand,
               const real[:, ::1] prob):
    cdef Py_ssize_t n_gates = cand.shape[0], n_cand = cand.shape[1]
    cdef Py_ssize_t batch = prev.shape[1]
    cdef Py_ssize_t n, c, k
    cdef int32_t j
    cdef real w
    out_arr = np.zeros((n_gates, batch), dtype=_dtype(prev))
    cdef real[:, ::1] out = out_arr
    with nogil:
        for n in range(n_gates):
            for c in range(n_cand):
                j = cand[n, c]
                w = prob[n, c]
                for k in range(batch):
                    out[n, k] += w * prev[j, k]
    return out_arr


def gather_mix_backward(const real[:, ::1] dout, const real[:, ::1] prev,
                        const int32_t[:, ::1] cand, const real[:, ::1] prob,
                        bint with_dprev=True):
    cdef Py_ssize_t n_gates = cand.shape[0], n_cand = cand.shape[1]
    cdef Py_ssize_t batch = prev.shape[1]
    cdef Py_ssize_t n, c, k
    cdef int32_t j
    cdef real w, acc
    dprob_arr = np.empty((n_gates, n_cand), dtype=_dtype(prev))
    dprev_arr = np.zeros((prev.shape[0] if with_dprev else 0, batch), dtype=_dtype(prev))
    cdef real[:, ::1] dprob = dprob_arr
    cdef real[:, ::1] dprev = dprev_arr
    with nogil:
        for n in range(n_gates):
            for c in range(n_cand):
                j = cand[n, c]
                acc = 0.0
                for k in range(batch):
                    acc = acc + dout[n, k] * prev[j, k]
                dprob[n, c] = acc
                if with_dprev:
                    w = prob[n, c]
                    for k in range(batch):
                        dprev[j, k] += w * dout[n, k]
    if not with_dprev:
        return dprob_arr, None
    return dprob_arr, dprev_arr


def eval_gates_packed(const uint64_t[:, ::1] words, const uint8_t[::1] ops,
                      const int32_t[::1] src_a, const int32_t[::1] src_b):
    cdef Py_ssize_t n_gates = ops.shape[0], n_words = words.shape[1]
    cdef Py_ssize_t n, k
    cdef int op
    cdef int32_t ia, ib
    cdef uint64_t m00, m01, m10, m11, a, b
    out_arr = np.empty((n_gates, n_words), dtype=np.uint64)
    cdef uint64_t[:, ::1] out = out_arr
    with nogil:
        for n in range(n_gates):
            op = ops[n]
            ia = src_a[n]
            ib = src_b[n]
            # all-ones mask for every truth-table row that outputs 1
            m00 = <uint64_t>0 - <uint64_t>((op >> 3) & 1)
            m01 = <uint64_t>0 - <uint64_t>((op >> 2) & 1)
            m10 = <uint64_t>0 - <uint64_t>((op >> 1) & 1)
            m11 = <uint64_t>0 - <uint64_t>(op & 1)
            for k in range(n_words):
                a = words[ia, k]
                b = words[ib, k]
                out[n, k] = (m00 & ~a & ~b) | (m01 & ~a & b) | (m10 & a & ~b) | (m11 & a & b)
    return out_arr


# _SPREAD[v] has byte i equal to bit i of v, so adding it to a uint64
# advances eight independent byte-wide lane counters at once.
cdef uint64_t _SPREAD[256]
cdef int _v, _i
for _v in range(256):
    _SPREAD[_v] = 0
    for _i in range(8):
        _SPREAD[_v] |= (<uint64_t>((_v >> _i) & 1)) << (8 * _i)


cdef inline void _flush(uint64_t* acc8, int32_t* tot) noexcept nogil:
    cdef int j, i
    for j in range(8):
        for i in range(8):
            tot[8 * j + i] += <int32_t>((acc8[j] >> (8 * i)) & 255)
        acc8[j] = 0


def group_counts(const uint64_t[:, ::1] words, const int64_t[::1] starts,
                 const int64_t[::1] stops, Py_ssize_t n_samples):
    cdef Py_ssize_t n_groups = starts.shape[0], n_words = words.shape[1]
    cdef Py_ssize_t g, n, k, bit, lane, last
    cdef int j, pending
    cdef uint64_t w
    cdef uint64_t acc8[8]
    cdef int32_t tot[64]
    out_arr = np.zeros((n_samples, n_groups), dtype=np.int32)
    cdef int32_t[:, ::1] out = out_arr
    with nogil:
        for k in range(n_words):
            lane = k * 64
            last = 64
            if lane + last > n_samples:
                last = n_samples - lane
            for g in range(n_groups):
                for j in range(8):
                    acc8[j] = 0
                for bit in range(64):
                    tot[bit] = 0
                pending = 0
                for n in range(starts[g], stops[g]):
                    w = words[n, k]
                    for j in range(8):
                        acc8[j] += _SPREAD[(w >> (8 * j)) & 255]
                    pending += 1
                    if pending == 255:
                        _flush(acc8, tot)
                        pending = 0
                _flush(acc8, tot)
                for bit in range(last):
                    out[lane + bit, g] = tot[bit]
    return out_arr
