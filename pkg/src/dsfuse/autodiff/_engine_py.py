"""Pure-numpy tape interpreter: the fallback engine.

Semantically identical to the Cython engine in _engine_c.pyx; every change
here must be mirrored there (the parity tests compare the two op by op).
Reductions use numpy's pairwise summation, so results can differ from the
compiled engine in the last bits; tests compare with tolerances.
"""

import numpy as np

from . import ops

NAME = "python"


def _guarded(x):
    """Clamp denominators away from zero, preserving sign."""
    return np.where(np.abs(x) < ops.GUARD, np.copysign(ops.GUARD, x), x)


def run_forward(code, out, a, b, c, i0, f0, off, ln, values, start, end):
    """Execute ops [start, end); returns (error_kind, op_index)."""
    for k in range(start, end):
        op = code[k]
        if op == ops.LEAF:
            continue
        oo, lo = off[out[k]], ln[out[k]]
        ov = values[oo:oo + lo]
        av = values[off[a[k]]:off[a[k]] + ln[a[k]]] if a[k] >= 0 else None
        bv = values[off[b[k]]:off[b[k]] + ln[b[k]]] if b[k] >= 0 else None
        if op == ops.ADD:
            ov[:] = av + bv
        elif op == ops.SUB:
            ov[:] = av - bv
        elif op == ops.MUL:
            ov[:] = av * bv
        elif op == ops.DIV:
            if np.any(bv == 0.0):
                return ops.ERR_ZERO_DENOM, k
            ov[:] = av / _guarded(bv)
        elif op == ops.NEG:
            ov[:] = -av
        elif op == ops.EXP:
            ov[:] = np.exp(av)
        elif op == ops.LOG:
            if np.any(av <= 0.0):
                return ops.ERR_LOG_DOMAIN, k
            ov[:] = np.log(np.maximum(av, ops.GUARD))
        elif op == ops.SUM:
            ov[0] = np.sum(av)
        elif op == ops.DOT:
            ov[0] = av @ bv
        elif op == ops.AFFINE:
            cv = values[off[c[k]]:off[c[k]] + ln[c[k]]]
            ov[:] = av.reshape(lo, len(bv)) @ bv + cv
        elif op == ops.RELU:
            np.maximum(av, 0.0, out=ov)
        elif op == ops.SIGMOID:
            neg = av < 0.0
            t = np.exp(np.where(neg, av, -av))
            ov[:] = np.where(neg, t / (1.0 + t), 1.0 / (1.0 + t))
        elif op == ops.SOFTMAX:
            e = np.exp(av - av.max())
            ov[:] = e / e.sum()
        elif op == ops.SQDIST:
            d = av - bv
            ov[0] = d @ d
        elif op == ops.NORMSUM:
            s = np.sum(av)
            if s == 0.0:
                return ops.ERR_ZERO_DENOM, k
            ov[:] = av / (s if abs(s) >= ops.GUARD else np.copysign(ops.GUARD, s))
        elif op == ops.CONCAT:
            la = len(av)
            ov[:la] = av
            ov[la:] = bv
        elif op == ops.SLICE:
            ov[:] = av[i0[k]:i0[k] + lo]
        elif op == ops.CLAMPMIN:
            np.maximum(av, f0[k], out=ov)
        else:
            raise AssertionError(f"unknown opcode {op}")
    return ops.OK, -1


def run_backward(code, out, a, b, c, i0, f0, off, ln, values, grads, start, end):
    """Accumulate adjoints for ops [start, end), visited in reverse order."""
    for k in range(end - 1, start - 1, -1):
        op = code[k]
        if op == ops.LEAF:
            continue
        oo, lo = off[out[k]], ln[out[k]]
        g = grads[oo:oo + lo]
        ov = values[oo:oo + lo]
        ai, bi = a[k], b[k]
        av = values[off[ai]:off[ai] + ln[ai]] if ai >= 0 else None
        bv = values[off[bi]:off[bi] + ln[bi]] if bi >= 0 else None
        ga = grads[off[ai]:off[ai] + ln[ai]] if ai >= 0 else None
        gb = grads[off[bi]:off[bi] + ln[bi]] if bi >= 0 else None
        if op == ops.ADD:
            _acc(ga, g)
            _acc(gb, g)
        elif op == ops.SUB:
            _acc(ga, g)
            _acc(gb, -g)
        elif op == ops.MUL:
            _acc(ga, g * bv)
            _acc(gb, g * av)
        elif op == ops.DIV:
            d = _guarded(bv)
            _acc(ga, g / d)
            _acc(gb, -g * ov / d)
        elif op == ops.NEG:
            ga -= g
        elif op == ops.EXP:
            ga += g * ov
        elif op == ops.LOG:
            ga += g / np.maximum(av, ops.GUARD)
        elif op == ops.SUM:
            ga += g[0]
        elif op == ops.DOT:
            ga += g[0] * bv
            gb += g[0] * av
        elif op == ops.AFFINE:
            ci = c[k]
            cols = len(bv)
            grads[off[ai]:off[ai] + ln[ai]] += np.outer(g, bv).ravel()
            gb += values[off[ai]:off[ai] + ln[ai]].reshape(lo, cols).T @ g
            grads[off[ci]:off[ci] + ln[ci]] += g
        elif op == ops.RELU:
            ga += g * (av > 0.0)
        elif op == ops.SIGMOID:
            ga += g * ov * (1.0 - ov)
        elif op == ops.SOFTMAX:
            t = g @ ov
            ga += ov * (g - t)
        elif op == ops.SQDIST:
            d = 2.0 * g[0] * (av - bv)
            ga += d
            gb -= d
        elif op == ops.NORMSUM:
            s = np.sum(av)
            s = s if abs(s) >= ops.GUARD else np.copysign(ops.GUARD, s)
            t = g @ ov
            ga += (g - t) / s
        elif op == ops.CONCAT:
            la = len(av)
            ga += g[:la]
            gb += g[la:]
        elif op == ops.SLICE:
            ga[i0[k]:i0[k] + lo] += g
        elif op == ops.CLAMPMIN:
            ga += g * (av >= f0[k])
        else:
            raise AssertionError(f"unknown opcode {op}")


def _acc(g, delta):
    """Accumulate delta into g, reducing over the broadcast axis if needed."""
    if g.shape == np.shape(delta):
        g += delta
    else:
        g += np.sum(delta)
