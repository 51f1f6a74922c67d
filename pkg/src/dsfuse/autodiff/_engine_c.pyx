# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter: the hot-loop engine.

Mirrors _engine_py op for op; reductions are sequential left-to-right, so the
last bits can differ from numpy's pairwise sums. Keep both engines in sync.
"""

from libc.math cimport exp, log, fabs

import numpy as np

cimport numpy as cnp

from . import ops as _ops

NAME = "cython"

cdef double GUARD = 1e-300

cdef int LEAF = 0, ADD = 1, SUB = 2, MUL = 3, DIV = 4, NEG = 5, EXP = 6
cdef int LOG = 7, SUM = 8, DOT = 9, AFFINE = 10, RELU = 11, SIGMOID = 12
cdef int SOFTMAX = 13, SQDIST = 14, NORMSUM = 15, CONCAT = 16, SLICE = 17
cdef int CLAMPMIN = 18


cdef inline double _guard(double x) nogil:
    if x >= 0.0:
        return x if x >= GUARD else GUARD
    return x if x <= -GUARD else -GUARD


def run_forward(cnp.int32_t[::1] code, cnp.int32_t[::1] out, cnp.int32_t[::1] a,
                cnp.int32_t[::1] b, cnp.int32_t[::1] c, cnp.int32_t[::1] i0,
                double[::1] f0, cnp.int64_t[::1] off, cnp.int64_t[::1] ln,
                double[::1] values, int start, int end):
    """Execute ops [start, end); returns (error_kind, op_index)."""
    cdef int k, op, j, r
    cdef long oo, lo, oa, la, ob, lb, oc, base
    cdef double acc, d, m, s, x, t
    with nogil:
        for k in range(start, end):
            op = code[k]
            if op == LEAF:
                continue
            oo = off[out[k]]; lo = ln[out[k]]
            if a[k] >= 0:
                oa = off[a[k]]; la = ln[a[k]]
            else:
                oa = 0; la = 0
            if b[k] >= 0:
                ob = off[b[k]]; lb = ln[b[k]]
            else:
                ob = 0; lb = 0
            if op == ADD:
                for j in range(lo):
                    values[oo + j] = values[oa + (j if la > 1 else 0)] + values[ob + (j if lb > 1 else 0)]
            elif op == SUB:
                for j in range(lo):
                    values[oo + j] = values[oa + (j if la > 1 else 0)] - values[ob + (j if lb > 1 else 0)]
            elif op == MUL:
                for j in range(lo):
                    values[oo + j] = values[oa + (j if la > 1 else 0)] * values[ob + (j if lb > 1 else 0)]
            elif op == DIV:
                for j in range(lb):
                    if values[ob + j] == 0.0:
                        with gil:
                            return _ops.ERR_ZERO_DENOM, k
                for j in range(lo):
                    d = _guard(values[ob + (j if lb > 1 else 0)])
                    values[oo + j] = values[oa + (j if la > 1 else 0)] / d
            elif op == NEG:
                for j in range(lo):
                    values[oo + j] = -values[oa + j]
            elif op == EXP:
                for j in range(lo):
                    values[oo + j] = exp(values[oa + j])
            elif op == LOG:
                for j in range(lo):
                    x = values[oa + j]
                    if x <= 0.0:
                        with gil:
                            return _ops.ERR_LOG_DOMAIN, k
                    values[oo + j] = log(x if x >= GUARD else GUARD)
            elif op == SUM:
                acc = 0.0
                for j in range(la):
                    acc += values[oa + j]
                values[oo] = acc
            elif op == DOT:
                acc = 0.0
                for j in range(la):
                    acc += values[oa + j] * values[ob + j]
                values[oo] = acc
            elif op == AFFINE:
                oc = off[c[k]]
                for r in range(lo):
                    acc = values[oc + r]
                    base = oa + r * lb
                    for j in range(lb):
                        acc += values[base + j] * values[ob + j]
                    values[oo + r] = acc
            elif op == RELU:
                for j in range(lo):
                    x = values[oa + j]
                    values[oo + j] = x if x > 0.0 else 0.0
            elif op == SIGMOID:
                for j in range(lo):
                    x = values[oa + j]
                    if x >= 0.0:
                        t = exp(-x)
                        values[oo + j] = 1.0 / (1.0 + t)
                    else:
                        t = exp(x)
                        values[oo + j] = t / (1.0 + t)
            elif op == SOFTMAX:
                m = values[oa]
                for j in range(1, lo):
                    if values[oa + j] > m:
                        m = values[oa + j]
                s = 0.0
                for j in range(lo):
                    x = exp(values[oa + j] - m)
                    values[oo + j] = x
                    s += x
                for j in range(lo):
                    values[oo + j] /= s
            elif op == SQDIST:
                acc = 0.0
                for j in range(la):
                    d = values[oa + j] - values[ob + j]
                    acc += d * d
                values[oo] = acc
            elif op == NORMSUM:
                s = 0.0
                for j in range(la):
                    s += values[oa + j]
                if s == 0.0:
                    with gil:
                        return _ops.ERR_ZERO_DENOM, k
                s = _guard(s)
                for j in range(lo):
                    values[oo + j] = values[oa + j] / s
            elif op == CONCAT:
                for j in range(la):
                    values[oo + j] = values[oa + j]
                for j in range(lb):
                    values[oo + la + j] = values[ob + j]
            elif op == SLICE:
                for j in range(lo):
                    values[oo + j] = values[oa + i0[k] + j]
            elif op == CLAMPMIN:
                for j in range(lo):
                    x = values[oa + j]
                    values[oo + j] = x if x > f0[k] else f0[k]
            else:
                with gil:
                    raise AssertionError(f"unknown opcode {op}")
    return _ops.OK, -1


def run_backward(cnp.int32_t[::1] code, cnp.int32_t[::1] out, cnp.int32_t[::1] a,
                 cnp.int32_t[::1] b, cnp.int32_t[::1] c, cnp.int32_t[::1] i0,
                 double[::1] f0, cnp.int64_t[::1] off, cnp.int64_t[::1] ln,
                 double[::1] values, double[::1] grads, int start, int end):
    """Accumulate adjoints for ops [start, end), visited in reverse order."""
    cdef int k, op, j, r
    cdef long oo, lo, oa, la, ob, lb, oc, base
    cdef double gj, d, s, t, x
    with nogil:
        for k in range(end - 1, start - 1, -1):
            op = code[k]
            if op == LEAF:
                continue
            oo = off[out[k]]; lo = ln[out[k]]
            if a[k] >= 0:
                oa = off[a[k]]; la = ln[a[k]]
            else:
                oa = 0; la = 0
            if b[k] >= 0:
                ob = off[b[k]]; lb = ln[b[k]]
            else:
                ob = 0; lb = 0
            if op == ADD:
                for j in range(lo):
                    gj = grads[oo + j]
                    grads[oa + (j if la > 1 else 0)] += gj
                    grads[ob + (j if lb > 1 else 0)] += gj
            elif op == SUB:
                for j in range(lo):
                    gj = grads[oo + j]
                    grads[oa + (j if la > 1 else 0)] += gj
                    grads[ob + (j if lb > 1 else 0)] -= gj
            elif op == MUL:
                for j in range(lo):
                    gj = grads[oo + j]
                    grads[oa + (j if la > 1 else 0)] += gj * values[ob + (j if lb > 1 else 0)]
                    grads[ob + (j if lb > 1 else 0)] += gj * values[oa + (j if la > 1 else 0)]
            elif op == DIV:
                for j in range(lo):
                    gj = grads[oo + j]
                    d = _guard(values[ob + (j if lb > 1 else 0)])
                    grads[oa + (j if la > 1 else 0)] += gj / d
                    grads[ob + (j if lb > 1 else 0)] -= gj * values[oo + j] / d
            elif op == NEG:
                for j in range(lo):
                    grads[oa + j] -= grads[oo + j]
            elif op == EXP:
                for j in range(lo):
                    grads[oa + j] += grads[oo + j] * values[oo + j]
            elif op == LOG:
                for j in range(lo):
                    x = values[oa + j]
                    grads[oa + j] += grads[oo + j] / (x if x >= GUARD else GUARD)
            elif op == SUM:
                for j in range(la):
                    grads[oa + j] += grads[oo]
            elif op == DOT:
                for j in range(la):
                    grads[oa + j] += grads[oo] * values[ob + j]
                    grads[ob + j] += grads[oo] * values[oa + j]
            elif op == AFFINE:
                oc = off[c[k]]
                for r in range(lo):
                    gj = grads[oo + r]
                    grads[oc + r] += gj
                    base = r * lb
                    for j in range(lb):
                        grads[oa + base + j] += gj * values[ob + j]
                        grads[ob + j] += gj * values[oa + base + j]
            elif op == RELU:
                for j in range(lo):
                    if values[oa + j] > 0.0:
                        grads[oa + j] += grads[oo + j]
            elif op == SIGMOID:
                for j in range(lo):
                    x = values[oo + j]
                    grads[oa + j] += grads[oo + j] * x * (1.0 - x)
            elif op == SOFTMAX:
                t = 0.0
                for j in range(lo):
                    t += grads[oo + j] * values[oo + j]
                for j in range(lo):
                    grads[oa + j] += values[oo + j] * (grads[oo + j] - t)
            elif op == SQDIST:
                for j in range(la):
                    d = 2.0 * grads[oo] * (values[oa + j] - values[ob + j])
                    grads[oa + j] += d
                    grads[ob + j] -= d
            elif op == NORMSUM:
                s = 0.0
                for j in range(la):
                    s += values[oa + j]
                s = _guard(s)
                t = 0.0
                for j in range(lo):
                    t += grads[oo + j] * values[oo + j]
                for j in range(lo):
                    grads[oa + j] += (grads[oo + j] - t) / s
            elif op == CONCAT:
                for j in range(la):
                    grads[oa + j] += grads[oo + j]
                for j in range(lb):
                    grads[ob + j] += grads[oo + la + j]
            elif op == SLICE:
                for j in range(lo):
                    grads[oa + i0[k] + j] += grads[oo + j]
            elif op == CLAMPMIN:
                for j in range(lo):
                    if values[oa + j] >= f0[k]:
                        grads[oa + j] += grads[oo + j]
            else:
                with gil:
                    raise AssertionError(f"unknown opcode {op}")
