"""Minimal reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D ``numpy.ndarray`` (scalars are 1x1).  Operations on plain
arrays run eagerly with no bookkeeping; as soon as one operand is a
:class:`Var`, the result is recorded on that variable's :class:`Tape`.

Primitives live in the :data:`PRIMITIVES` registry and are looked up by name
both when recording and when back-propagating, so a rule can be swapped out
(the self-test does this to prove the gradient checks have teeth).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

Tensor2 = np.ndarray


class NonFiniteError(FloatingPointError):
    """Raised when a recorded op produces NaN or inf."""

    def __init__(self, op: str, node: int):
        super().__init__(f"non-finite value produced by op '{op}' at tape node {node}")
        self.op = op
        self.node = node


@dataclass(frozen=True)
class Primitive:
    forward: Callable[..., np.ndarray]
    # vjp(g, out, *inputs, **kw) -> tuple of input cotangents (None for constants)
    vjp: Callable[..., tuple]


PRIMITIVES: dict[str, Primitive] = {}


def primitive(name: str, forward, vjp) -> None:
    PRIMITIVES[name] = Primitive(forward, vjp)


class Tape:
    """Ordered record of op nodes; creation order is a topological order."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[tuple[str, tuple, dict, int]] = []
        self.values: list[np.ndarray] = []
        self.check_finite = check_finite

    def leaf(self, value) -> "Var":
        arr = as_tensor(value)
        self.values.append(arr)
        self.nodes.append(("leaf", (), {}, len(self.values) - 1))
        return Var(self, len(self.values) - 1)

    def record(self, name: str, inputs: tuple, kw: dict, out: np.ndarray) -> "Var":
        idx = len(self.values)
        if self.check_finite and not np.all(np.isfinite(out)):
            raise NonFiniteError(name, idx)
        self.values.append(out)
        self.nodes.append((name, inputs, kw, idx))
        return Var(self, idx)

    def backward(self, root: "Var") -> list:
        """Return cotangents for every node, seeded with d(root)/d(root) = 1."""
        grads: list = [None] * len(self.values)
        grads[root.index] = np.ones_like(self.values[root.index])
        for name, inputs, kw, idx in reversed(self.nodes[: root.index + 1]):
            g = grads[idx]
            if g is None or name == "leaf":
                continue
            in_vals = tuple(self.values[i] if isinstance(i, int) else i.value for i in inputs)
            parts = PRIMITIVES[name].vjp(g, self.values[idx], *in_vals, **kw)
            for src, part in zip(inputs, parts):
                if part is None or not isinstance(src, int):
                    continue
                grads[src] = part if grads[src] is None else grads[src] + part
        return grads


class _Const:
    """Constant operand captured on the tape (receives no gradient)."""

    __slots__ = ("value",)

    def __init__(self, value: np.ndarray):
        self.value = value


class Var:
    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self) -> str:
        return f"Var(node={self.index}, shape={self.shape})"


def as_tensor(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


def _value(x):
    if isinstance(x, Var):
        return x.value
    if isinstance(x, np.ndarray):
        return x
    return as_tensor(x)


def apply(name: str, *args, **kw):
    """Run primitive ``name``; record it if any argument is a Var."""
    tape = None
    for a in args:
        if isinstance(a, Var):
            tape = a.tape
            break
    vals = tuple(_value(a) for a in args)
    out = PRIMITIVES[name].forward(*vals, **kw)
    if tape is None:
        return out
    inputs = tuple(a.index if isinstance(a, Var) else _Const(v) for a, v in zip(args, vals))
    return tape.record(name, inputs, kw, out)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives

primitive(
    "add",
    lambda a, b: a + b,
    lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
)
primitive(
    "sub",
    lambda a, b: a - b,
    lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
)
primitive(
    "mul",
    lambda a, b: a * b,
    lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
)
primitive(
    "matmul",
    lambda a, b: a @ b,
    lambda g, out, a, b: (g @ b.T, a.T @ g),
)
primitive("scale", lambda a, c: a * c, lambda g, out, a, c: (g * c,))
primitive("transpose", lambda a: a.T.copy(), lambda g, out, a: (g.T,))
primitive("cos", np.cos, lambda g, out, a: (-g * np.sin(a),))
primitive("tanh", np.tanh, lambda g, out, a: (g * (1.0 - out * out),))
primitive("relu", lambda a: np.maximum(a, 0.0), lambda g, out, a: (g * (a > 0),))
primitive("exp", np.exp, lambda g, out, a: (g * out,))
primitive("square", lambda a: a * a, lambda g, out, a: (2.0 * g * a,))
primitive(
    "sum",
    lambda a: np.array([[a.sum()]]),
    lambda g, out, a: (np.full(a.shape, g[0, 0]),),
)
primitive(
    "mean",
    lambda a: np.array([[a.mean()]]),
    lambda g, out, a: (np.full(a.shape, g[0, 0] / a.size),),
)
primitive(
    "colsum",
    lambda a: a.sum(axis=0, keepdims=True),
    lambda g, out, a: (np.broadcast_to(g, a.shape).copy(),),
)
primitive(
    "rowsum",
    lambda a: a.sum(axis=1, keepdims=True),
    lambda g, out, a: (np.broadcast_to(g, a.shape).copy(),),
)
# column centering, i.e. left-multiplication by H = I - 11^T/n; H is symmetric
# and idempotent so the adjoint is centering again
primitive(
    "center",
    lambda a: a - a.mean(axis=0, keepdims=True),
    lambda g, out, a: (g - g.mean(axis=0, keepdims=True),),
)
primitive(
    "cols",
    lambda a, start, stop: a[:, start:stop].copy(),
    lambda g, out, a, start, stop: (_pad_cols(g, a.shape, start, stop),),
)
primitive(
    "concat",
    lambda a, b: np.concatenate([a, b], axis=1),
    lambda g, out, a, b: (g[:, : a.shape[1]], g[:, a.shape[1] :]),
)
primitive("sqdist", lambda a: _sqdist(a), lambda g, out, a: (_sqdist_vjp(g, a),))


def _pad_cols(g, shape, start, stop):
    full = np.zeros(shape)
    full[:, start:stop] = g
    return full


def _sqdist(a: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", a, a)
    d = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _sqdist_vjp(g: np.ndarray, a: np.ndarray) -> np.ndarray:
    s = g + g.T
    np.fill_diagonal(s, 0.0)
    return 2.0 * (s.sum(axis=1, keepdims=True) * a - s @ a)


# ---------------------------------------------------------------- public ops


def add(a, b):
    return apply("add", a, b)


def sub(a, b):
    return apply("sub", a, b)


def mul(a, b):
    return apply("mul", a, b)


def matmul(a, b):
    return apply("matmul", a, b)


def scale(a, c: float):
    return apply("scale", a, c=float(c))


def transpose(a):
    return apply("transpose", a)


def cos(a):
    return apply("cos", a)


def tanh(a):
    return apply("tanh", a)


def relu(a):
    return apply("relu", a)


def exp(a):
    return apply("exp", a)


def square(a):
    return apply("square", a)


def total(a):
    """Sum of all entries as a 1x1 tensor."""
    return apply("sum", a)


def mean(a):
    return apply("mean", a)


def colsum(a):
    return apply("colsum", a)


def rowsum(a):
    return apply("rowsum", a)


def center(a):
    return apply("center", a)


def cols(a, start: int, stop: int):
    return apply("cols", a, start=int(start), stop=int(stop))


def concat(a, b):
    return apply("concat", a, b)


def sqdist(a):
    """Pairwise squared Euclidean distances between rows."""
    return apply("sqdist", a)


ACTIVATIONS = {"tanh": tanh, "relu": relu, "identity": lambda a: a}


def value_and_grad(
    fn: Callable[[dict], object],
    params: Mapping[str, np.ndarray],
    check_finite: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate scalar ``fn(vars)`` and its gradient with respect to ``params``.

    ``fn`` receives a dict of :class:`Var` leaves with the same keys and shapes
    as ``params`` (1-D arrays are lifted to 1xN rows; gradients come back in the
    original shapes).
    """
    tape = Tape(check_finite=check_finite)
    leaves = {name: tape.leaf(p) for name, p in params.items()}
    out = fn(leaves)
    if not isinstance(out, Var):
        # loss does not depend on any parameter
        val = float(np.asarray(out).reshape(-1)[0])
        return val, {k: np.zeros_like(np.asarray(p, dtype=float)) for k, p in params.items()}
    if out.shape != (1, 1):
        raise ValueError(f"value_and_grad needs a scalar output, got shape {out.shape}")
    grads = tape.backward(out)
    result = {}
    for name, leaf in leaves.items():
        g = grads[leaf.index]
        shape = np.shape(params[name])
        result[name] = np.zeros(shape) if g is None else g.reshape(shape)
    return float(out.value[0, 0]), result


def numeric_grad(
    fn: Callable[[dict], object], params: Mapping[str, np.ndarray], step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar ``fn`` evaluated on plain arrays."""

    def evaluate(p):
        out = fn({k: as_tensor(v) if np.ndim(v) < 2 else v for k, v in p.items()})
        return float(np.asarray(out).reshape(-1)[0])

    base = {k: np.array(v, dtype=float) for k, v in params.items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = evaluate(base)
            flat[i] = orig - step
            lo = evaluate(base)
            flat[i] = orig
            g.reshape(-1)[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(
    analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray], floor: float = 1e-6
) -> dict[str, float]:
    """Per-parameter worst coordinate of |a - n| / max(|a|, |n|, floor)."""
    out = {}
    for k in analytic:
        a, n = np.asarray(analytic[k]), np.asarray(numeric[k])
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        out[k] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return out
