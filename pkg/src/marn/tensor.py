"""Dense float64 tensors with a define-by-run reverse-mode tape.

Operations are plain functions.  When a :class:`Tape` is active (``with Tape()
as tape:``) and at least one input requires a gradient, the operation appends a
node holding its inputs, outputs and a vector-Jacobian product.  Outside a tape
the same functions just compute values, which is what decoding uses.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = tsum(w * w)
    >>> backward(loss, tape)[w]
    array([2., 4.])
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "marn_active_tape", default=None
)


class Tensor:
    """A float64 array plus a ``requires_grad`` flag.

    Identity (not value) is used for hashing, so tensors can key gradient maps.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_fail(self)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # Arithmetic sugar; all routes go through the recorded ops below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def _scalar_fail(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    outputs: tuple[Tensor, ...]
    vjp: Callable[[list[np.ndarray]], Sequence[np.ndarray | None]]
    op: str = ""


class Tape:
    """Append-only record of operations; backward walks it in reverse."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def record(op: str, inputs: Sequence[Tensor], outputs: Sequence[np.ndarray], vjp) -> tuple[Tensor, ...]:
    """Wrap output arrays as tensors and register a node when differentiation is live.

    ``vjp`` receives one gradient array per output (zeros for unused outputs)
    and returns one gradient (or ``None``) per input.
    """
    tape = _ACTIVE_TAPE.get()
    live = tape is not None and any(t.requires_grad for t in inputs)
    outs = tuple(Tensor(o, requires_grad=live) for o in outputs)
    if live:
        tape.nodes.append(Node(tuple(inputs), outs, vjp, op))
    return outs


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    (res,) = record("add", (a, b), (out,),
                    lambda g: (_unbroadcast(g[0], a.shape), _unbroadcast(g[0], b.shape)))
    return res


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    (res,) = record("sub", (a, b), (out,),
                    lambda g: (_unbroadcast(g[0], a.shape), -_unbroadcast(g[0], b.shape)))
    return res


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    (res,) = record("mul", (a, b), (out,),
                    lambda g: (_unbroadcast(g[0] * b.data, a.shape),
                               _unbroadcast(g[0] * a.data, b.shape)))
    return res


def neg(a) -> Tensor:
    a = as_tensor(a)
    (res,) = record("neg", (a,), (-a.data,), lambda g: (-g[0],))
    return res


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    (res,) = record("scale", (a,), (a.data * c,), lambda g: (g[0] * c,))
    return res


def matmul(a, b) -> Tensor:
    """Matrix/vector product for 1-D and 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        g = g[0]
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2:
            return np.outer(g, bd), ad.T @ g
        if bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    (res,) = record("matmul", (a, b), (out,), vjp)
    return res


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    (res,) = record("tanh", (a,), (y,), lambda g: (g[0] * (1.0 - y * y),))
    return res


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    (res,) = record("sigmoid", (a,), (y,), lambda g: (g[0] * y * (1.0 - y),))
    return res


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    (res,) = record("exp", (a,), (y,), lambda g: (g[0] * y,))
    return res


def log(a) -> Tensor:
    a = as_tensor(a)
    (res,) = record("log", (a,), (np.log(a.data),), lambda g: (g[0] / a.data,))
    return res


def clamp_min(a, lo: float) -> Tensor:
    """max(a, lo); the gradient is passed only where the input was above ``lo``."""
    a = as_tensor(a)
    mask = a.data > lo
    out = np.where(mask, a.data, lo)
    (res,) = record("clamp_min", (a,), (out,), lambda g: (g[0] * mask,))
    return res


def absolute(a) -> Tensor:
    """|a| with subgradient 0 at exactly zero."""
    a = as_tensor(a)
    sign = np.sign(a.data)
    (res,) = record("abs", (a,), (np.abs(a.data),), lambda g: (g[0] * sign,))
    return res


def softmax(a) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ContractError("softmax of an empty vector")
    y = softmax_array(a.data)

    def vjp(g):
        g = g[0]
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    (res,) = record("softmax", (a,), (y,), vjp)
    return res


def softmax_array(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def tsum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def vjp(g):
        g = g[0]
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    (res,) = record("sum", (a,), (out,), vjp)
    return res


def transpose(a) -> Tensor:
    a = as_tensor(a)
    (res,) = record("transpose", (a,), (a.data.T.copy(),), lambda g: (g[0].T,))
    return res


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    (res,) = record("reshape", (a,), (a.data.reshape(shape),),
                    lambda g: (g[0].reshape(a.shape),))
    return res


def getitem(a, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate in the gradient."""
    a = as_tensor(a)
    out = np.array(a.data[index], dtype=np.float64)

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g[0])
        return (ga,)

    (res,) = record("getitem", (a,), (out,), vjp)
    return res


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    (res,) = record("concat", parts, (out,),
                    lambda g: tuple(np.split(g[0], bounds, axis=axis)))
    return res


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("stack of zero tensors")
    out = np.stack([p.data for p in parts], axis=axis)
    n = len(parts)
    (res,) = record("stack", parts, (out,),
                    lambda g: tuple(np.take(g[0], i, axis=axis) for i in range(n)))
    return res


def column(mat, j: int) -> Tensor:
    """Column ``j`` of a 2-D tensor (embedding lookup for a d'xK matrix)."""
    mat = as_tensor(mat)
    j = int(j)
    out = mat.data[:, j].copy()

    def vjp(g):
        gm = np.zeros_like(mat.data)
        gm[:, j] = g[0]
        return (gm,)

    (res,) = record("column", (mat,), (out,), vjp)
    return res


# ---------------------------------------------------------------------------
# reverse sweep


def backward(loss: Tensor, tape: Tape, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` recorded on ``tape``.

    Returns a map from leaf tensor to gradient array.  When ``params`` is given,
    every one of them is present in the result, with exact zeros for tensors the
    loss does not depend on.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        leaves[id(loss)] = loss
    produced: set[int] = set()
    for node in reversed(tape.nodes):
        outs = [grads.pop(id(o), None) for o in node.outputs]
        for o in node.outputs:
            produced.add(id(o))
        if all(g is None for g in outs):
            continue
        outs = [np.zeros_like(o.data) if g is None else g for g, o in zip(outs, node.outputs)]
        gins = node.vjp(outs)
        for t, g in zip(node.inputs, gins):
            if g is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = np.asarray(g, dtype=np.float64).reshape(t.shape)
                leaves[key] = t
    result = {leaves[k]: g for k, g in grads.items() if k not in produced}
    if params is not None:
        full = {}
        for p in params:
            g = result.get(p)
            full[p] = np.zeros_like(p.data) if g is None else g
        return full
    return result


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
               coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and reads the current values of ``params``.  The
    error per coordinate is ``|a - n| / max(1, |a|, |n|)``.  ``coords`` limits the
    check to a random subset of coordinates per parameter.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ContractError(f"finite-difference step {h} outside [1e-7, 1e-3]")
    params = list(params)
    for p in params:
        p.data = np.ascontiguousarray(p.data)
    with Tape() as tape:
        loss = f()
    analytic = backward(loss, tape, params)
    base = loss.item()
    again = f().item()
    if base != again:
        raise ContractError(f"function is not deterministic: {base!r} != {again!r}")
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if coords is not None and coords < flat.size:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=coords, replace=False)
        ga = analytic[p].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            err = abs(ga[i] - num) / max(1.0, abs(ga[i]), abs(num))
            worst = max(worst, err)
    return worst
