"""Reverse-mode differentiation over a flat operation tape.

A Tape records a static graph of scalar/vector nodes (a Wengert list): leaves
are parameters, inputs, or constants; interior nodes are produced by the
primitives below. Values live in one contiguous float64 buffer; forward() and
backward() hand the op arrays to an interpreter engine (compiled or numpy).
Replaying the same inputs through the same engine is bit-identical.

Shape errors surface at record time; value errors (log of a non-positive
number, a zero denominator) surface when forward() executes the op.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import DomainError, NotScalar, ShapeMismatch
from . import ops
from .engine import active as _default_engine

log = logging.getLogger(__name__)


class Node:
    """Handle to one tape entry."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def length(self) -> int:
        return self.tape._lengths[self.idx]

    @property
    def value(self) -> np.ndarray:
        return self.tape.value(self)

    def __repr__(self) -> str:
        return f"Node(idx={self.idx}, len={self.length})"


class Tape:
    """Recording tape plus its value/gradient buffers."""

    def __init__(self, engine=None):
        self.engine = engine if engine is not None else _default_engine
        self._lengths: list[int] = []
        self._leaf_vals: dict[int, np.ndarray] = {}
        self._rows: list[tuple] = []          # (code, out, a, b, c, i0, f0)
        self._params: dict[str, int] = {}
        self._param_shapes: dict[str, tuple] = {}
        self._inputs: dict[str, int] = {}
        self._frozen = False
        self._dirty = True
        self._reach_cache: dict[int, frozenset] = {}

    # -- leaves ----------------------------------------------------------

    def _leaf(self, value) -> Node:
        if self._frozen:
            raise RuntimeError("tape is frozen; no new nodes can be recorded")
        arr = np.asarray(value, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ShapeMismatch("nodes must have at least one element")
        idx = len(self._lengths)
        self._lengths.append(arr.size)
        self._leaf_vals[idx] = arr.copy()
        return Node(self, idx)

    def param(self, name: str, value) -> Node:
        """Register a named trainable leaf; 2-D values are stored row-major."""
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        node = self._leaf(value)
        self._params[name] = node.idx
        self._param_shapes[name] = np.asarray(value).shape
        return node

    def input(self, name: str, value) -> Node:
        """Register a named leaf whose value is replaced between replays."""
        if name in self._inputs:
            raise ValueError(f"duplicate input name {name!r}")
        node = self._leaf(value)
        self._inputs[name] = node.idx
        return node

    def constant(self, value) -> Node:
        return self._leaf(value)

    # -- primitives --------------------------------------------------------

    def _push(self, code: int, out_len: int, a=-1, b=-1, c=-1, i0=0, f0=0.0) -> Node:
        if self._frozen:
            raise RuntimeError("tape is frozen; no new nodes can be recorded")
        idx = len(self._lengths)
        self._lengths.append(out_len)
        self._rows.append((code, idx, a, b, c, i0, f0))
        self._dirty = True
        return Node(self, idx)

    def _bin_len(self, x: Node, y: Node, opname: str) -> int:
        lx, ly = x.length, y.length
        if lx == ly or lx == 1 or ly == 1:
            return max(lx, ly)
        raise ShapeMismatch(f"{opname}: lengths {lx} and {ly} are incompatible")

    def add(self, x: Node, y: Node) -> Node:
        return self._push(ops.ADD, self._bin_len(x, y, "add"), x.idx, y.idx)

    def subtract(self, x: Node, y: Node) -> Node:
        return self._push(ops.SUB, self._bin_len(x, y, "subtract"), x.idx, y.idx)

    def multiply(self, x: Node, y: Node) -> Node:
        return self._push(ops.MUL, self._bin_len(x, y, "multiply"), x.idx, y.idx)

    def divide(self, x: Node, y: Node) -> Node:
        return self._push(ops.DIV, self._bin_len(x, y, "divide"), x.idx, y.idx)

    def negate(self, x: Node) -> Node:
        return self._push(ops.NEG, x.length, x.idx)

    def exp(self, x: Node) -> Node:
        return self._push(ops.EXP, x.length, x.idx)

    def log(self, x: Node) -> Node:
        return self._push(ops.LOG, x.length, x.idx)

    def sum(self, x: Node) -> Node:
        return self._push(ops.SUM, 1, x.idx)

    def dot(self, x: Node, y: Node) -> Node:
        if x.length != y.length:
            raise ShapeMismatch(f"dot: lengths {x.length} and {y.length} differ")
        return self._push(ops.DOT, 1, x.idx, y.idx)

    def affine(self, weight: Node, bias: Node, x: Node) -> Node:
        """weight @ x + bias, with weight a (len(bias) x len(x)) row-major matrix."""
        rows, cols = bias.length, x.length
        if weight.length != rows * cols:
            raise ShapeMismatch(
                f"affine: weight has {weight.length} entries, need {rows}x{cols}")
        return self._push(ops.AFFINE, rows, weight.idx, x.idx, bias.idx)

    def relu(self, x: Node) -> Node:
        return self._push(ops.RELU, x.length, x.idx)

    def sigmoid(self, x: Node) -> Node:
        return self._push(ops.SIGMOID, x.length, x.idx)

    def softmax(self, x: Node) -> Node:
        return self._push(ops.SOFTMAX, x.length, x.idx)

    def squared_distance(self, x: Node, w: Node) -> Node:
        if x.length != w.length:
            raise ShapeMismatch(
                f"squared_distance: lengths {x.length} and {w.length} differ")
        return self._push(ops.SQDIST, 1, x.idx, w.idx)

    def normalize_by_sum(self, x: Node) -> Node:
        return self._push(ops.NORMSUM, x.length, x.idx)

    def concat(self, x: Node, y: Node) -> Node:
        return self._push(ops.CONCAT, x.length + y.length, x.idx, y.idx)

    def slice_of(self, x: Node, start: int, length: int) -> Node:
        if start < 0 or length < 1 or start + length > x.length:
            raise ShapeMismatch(
                f"slice [{start}:{start + length}] out of range for length {x.length}")
        return self._push(ops.SLICE, length, x.idx, i0=start)

    def clamp_min(self, x: Node, lo: float) -> Node:
        return self._push(ops.CLAMPMIN, x.length, x.idx, f0=float(lo))

    # -- execution ---------------------------------------------------------

    def freeze(self) -> None:
        if self._frozen:
            return
        self._off = np.zeros(len(self._lengths), dtype=np.int64)
        np.cumsum(self._lengths[:-1], out=self._off[1:])
        self._ln = np.asarray(self._lengths, dtype=np.int64)
        total = int(self._off[-1] + self._ln[-1]) if self._lengths else 0
        self._values = np.zeros(total, dtype=np.float64)
        self._grads = np.zeros(total, dtype=np.float64)
        for idx, val in self._leaf_vals.items():
            self._values[self._off[idx]:self._off[idx] + val.size] = val
        rows = self._rows or [(ops.LEAF, 0, -1, -1, -1, 0, 0.0)]
        cols = list(zip(*rows))
        self._code = np.asarray(cols[0], dtype=np.int32)
        self._out = np.asarray(cols[1], dtype=np.int32)
        self._a = np.asarray(cols[2], dtype=np.int32)
        self._b = np.asarray(cols[3], dtype=np.int32)
        self._c = np.asarray(cols[4], dtype=np.int32)
        self._i0 = np.asarray(cols[5], dtype=np.int32)
        self._f0 = np.asarray(cols[6], dtype=np.float64)
        self._n_ops = len(self._rows)
        self._producer = {row[1]: (row[2], row[3], row[4]) for row in self._rows}
        self._param_slices = [
            (int(self._off[i]), int(self._off[i] + self._ln[i]))
            for i in self._params.values()]
        self._leaf_vals.clear()
        self._frozen = True

    def forward(self) -> None:
        """Execute every op in recording order."""
        self.freeze()
        kind, at = self.engine.run_forward(
            self._code, self._out, self._a, self._b, self._c, self._i0, self._f0,
            self._off, self._ln, self._values, 0, self._n_ops)
        if kind != ops.OK:
            name = ops.NAMES[int(self._code[at])]
            if kind == ops.ERR_LOG_DOMAIN:
                raise DomainError(f"log of a non-positive value (op {at}: {name})")
            raise DomainError(f"zero denominator (op {at}: {name})")
        self._dirty = False

    def value(self, node: Node) -> np.ndarray:
        if self._dirty:
            self.forward()
        off = self._off[node.idx]
        return self._values[off:off + self._ln[node.idx]].copy()

    def scalar(self, node: Node) -> float:
        return float(self.value(node)[0])

    def run_backward_only(self, out: Node) -> None:
        """Seed d(out)=1 and accumulate adjoints into the gradient buffer."""
        if out.length != 1:
            raise NotScalar(f"backward output must be scalar, got length {out.length}")
        if self._dirty:
            self.forward()
        self._grads[:] = 0.0
        self._grads[self._off[out.idx]] = 1.0
        self.engine.run_backward(
            self._code, self._out, self._a, self._b, self._c, self._i0, self._f0,
            self._off, self._ln, self._values, self._grads, 0, self._n_ops)

    def backward(self, out: Node) -> dict[str, np.ndarray]:
        """Gradient of a scalar node w.r.t. every registered parameter."""
        self.run_backward_only(out)
        reach = self._reachable(out.idx)
        result = {}
        for name, idx in self._params.items():
            off, ln = self._off[idx], self._ln[idx]
            g = self._grads[off:off + ln].copy()
            if idx not in reach:
                log.warning("parameter %r is unreachable from the output; "
                            "its gradient is reported as zero", name)
            result[name] = g.reshape(self._param_shapes[name])
        return result

    def _reachable(self, out_idx: int) -> frozenset:
        cached = self._reach_cache.get(out_idx)
        if cached is not None:
            return cached
        seen = {out_idx}
        stack = [out_idx]
        while stack:
            for dep in self._producer.get(stack.pop(), ()):
                if dep >= 0 and dep not in seen:
                    seen.add(dep)
                    stack.append(dep)
        cached = frozenset(seen)
        self._reach_cache[out_idx] = cached
        return cached

    def apply_gradient_step(self, lr: float) -> None:
        """SGD update of all parameters from the current gradient buffer."""
        for lo, hi in self._param_slices:
            self._values[lo:hi] -= lr * self._grads[lo:hi]
        self._dirty = True

    # -- leaf mutation -----------------------------------------------------

    def _write_leaf(self, idx: int, value, what: str) -> None:
        arr = np.asarray(value, dtype=np.float64).ravel()
        if arr.size != self._lengths[idx]:
            raise ShapeMismatch(
                f"{what}: got {arr.size} values, node holds {self._lengths[idx]}")
        if self._frozen:
            self._values[self._off[idx]:self._off[idx] + arr.size] = arr
        else:
            self._leaf_vals[idx] = arr.copy()
        self._dirty = True

    def set_param(self, name: str, value) -> None:
        self._write_leaf(self._params[name], value, f"parameter {name!r}")

    def set_input(self, name: str, value) -> None:
        self._write_leaf(self._inputs[name], value, f"input {name!r}")

    def param_value(self, name: str) -> np.ndarray:
        idx = self._params[name]
        if self._frozen:
            off = self._off[idx]
            flat = self._values[off:off + self._ln[idx]].copy()
        else:
            flat = self._leaf_vals[idx].copy()
        return flat.reshape(self._param_shapes[name])

    def param_names(self) -> list[str]:
        return list(self._params)

    def param_values(self) -> dict[str, np.ndarray]:
        return {name: self.param_value(name) for name in self._params}

    @property
    def n_ops(self) -> int:
        return len(self._rows)


def grad_check(tape: Tape, loss: Node, h: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    Returns max over parameter elements of
    ``|analytic - central| / max(1, |central|)``. The function under test is
    the tape itself, evaluated at its current parameter values.
    """
    analytic = tape.backward(loss)
    worst = 0.0
    for name in tape.param_names():
        base = tape.param_value(name).ravel()
        work = base.copy()
        ana = analytic[name].ravel()
        for i in range(base.size):
            work[i] = base[i] + h
            tape.set_param(name, work)
            up = tape.scalar(loss)
            work[i] = base[i] - h
            tape.set_param(name, work)
            down = tape.scalar(loss)
            work[i] = base[i]
            central = (up - down) / (2.0 * h)
            err = abs(ana[i] - central) / max(1.0, abs(central))
            worst = max(worst, err)
        tape.set_param(name, base)
    return worst
