"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors hold 64-bit float data. Operations record nodes on an explicitly
opened Tape (define-by-run); replaying the tape in reverse propagates
gradients. Without an open tape every op is a plain numpy computation,
which is how evaluation-only forward passes run.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class TapeError(RuntimeError):
    """Tape misuse: backward on a consumed tape, non-scalar loss, etc."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"


class TapeNode:
    __slots__ = ("op", "inputs", "outputs", "backward")

    def __init__(self, op, inputs, outputs, backward):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops; nodes appear in execution
    order, so reversal is a valid topological order for backprop."""

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.consumed = False
        self._previous = None

    def record(self, op, inputs, outputs, backward):
        self.nodes.append(TapeNode(op, inputs, outputs, backward))

    def __enter__(self):
        global _ACTIVE_TAPE
        self._previous = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._previous
        self._previous = None
        return False


_ACTIVE_TAPE: Tape | None = None


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _recording(*tensors) -> bool:
    return _ACTIVE_TAPE is not None and any(t.requires_grad for t in tensors)


def _emit(op, inputs, outputs, backward):
    for out in outputs:
        out.requires_grad = True
    _ACTIVE_TAPE.record(op, inputs, outputs, backward)


def backward(loss: Tensor, tape: Tape) -> None:
    """Propagate d(loss)/d(x) into every tensor on the tape.

    Parameters that require grad but are unreachable from the loss end up
    with an explicit zero gradient. A tape can be replayed only once.
    """
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    tape.consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        grads = [out.grad for out in node.outputs]
        if all(g is None for g in grads):
            continue
        grads = [
            g if g is not None else np.zeros_like(out.data)
            for g, out in zip(grads, node.outputs)
        ]
        node.backward(*grads)
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# numpy kernels shared with non-differentiable callers

def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def stable_softmax(x: np.ndarray, axis=-1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product [m,k] @ [k,n] -> [m,n], or [m,k] @ [k] -> [m]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} do not align")
    out = Tensor(a.data @ b.data)
    if _recording(a, b):
        a_data, b_data = a.data, b.data

        def back(g):
            if a.requires_grad:
                a.accumulate_grad(np.outer(g, b_data) if b_data.ndim == 1 else g @ b_data.T)
            if b.requires_grad:
                b.accumulate_grad(a_data.T @ g)

        _emit("matmul", (a, b), (out,), back)
    return out


def concat(parts, axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`; gradient splits back exactly."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: empty part sequence")
    if len(parts) == 1:
        return parts[0]
    ndim = parts[0].data.ndim
    ax = axis if axis >= 0 else axis + ndim
    for p in parts[1:]:
        if p.data.ndim != ndim:
            raise ShapeError(
                f"concat: rank mismatch {parts[0].data.shape} vs {p.data.shape}")
        for d in range(ndim):
            if d != ax and p.data.shape[d] != parts[0].data.shape[d]:
                raise ShapeError(
                    f"concat: shapes {parts[0].data.shape} and {p.data.shape} "
                    f"differ off axis {ax}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=ax))
    if _recording(*parts):
        sizes = [p.data.shape[ax] for p in parts]
        offsets = np.cumsum(sizes)[:-1]

        def back(g):
            for p, piece in zip(parts, np.split(g, offsets, axis=ax)):
                if p.requires_grad:
                    p.accumulate_grad(piece)

        _emit("concat", tuple(parts), (out,), back)
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise sigmoid or tanh; the output is saved for backward."""
    x = _as_tensor(x)
    if kind == "sigmoid":
        y = stable_sigmoid(x.data)
    elif kind == "tanh":
        y = np.tanh(x.data)
    else:
        raise ValueError(f"unknown activation kind: {kind!r}")
    out = Tensor(y)
    if _recording(x):
        def back(g):
            if kind == "sigmoid":
                x.accumulate_grad(g * y * (1.0 - y))
            else:
                x.accumulate_grad(g * (1.0 - y * y))

        _emit(kind, (x,), (out,), back)
    return out


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over a vector; outputs are positive and sum to 1."""
    x = _as_tensor(x)
    if x.data.ndim != 1 or x.data.size == 0:
        raise ShapeError(f"softmax expects a non-empty vector, got shape {x.data.shape}")
    y = stable_softmax(x.data)
    out = Tensor(y)
    if _recording(x):
        def back(g):
            x.accumulate_grad(y * (g - float(g @ y)))

        _emit("softmax", (x,), (out,), back)
    return out


def log_softmax(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 1 or x.data.size == 0:
        raise ShapeError(f"log_softmax expects a non-empty vector, got shape {x.data.shape}")
    m = np.max(x.data)
    shifted = x.data - m
    lse = m + np.log(np.sum(np.exp(shifted)))
    out = Tensor(x.data - lse)
    if _recording(x):
        probs = np.exp(out.data)

        def back(g):
            x.accumulate_grad(g - probs * np.sum(g))

        _emit("log_softmax", (x,), (out,), back)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data + b.data)
    if _recording(a, b):
        def back(g):
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(g)

        _emit("add", (a, b), (out,), back)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data - b.data)
    if _recording(a, b):
        def back(g):
            if a.requires_grad:
                a.accumulate_grad(g)
            if b.requires_grad:
                b.accumulate_grad(-g)

        _emit("sub", (a, b), (out,), back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data * b.data)
    if _recording(a, b):
        a_data, b_data = a.data, b.data

        def back(g):
            if a.requires_grad:
                a.accumulate_grad(g * b_data)
            if b.requires_grad:
                b.accumulate_grad(g * a_data)

        _emit("mul", (a, b), (out,), back)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c)
    if _recording(x):
        def back(g):
            x.accumulate_grad(g * c)

        _emit("scale", (x,), (out,), back)
    return out


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.data.shape}")
    out = Tensor(x.data.T.copy())
    if _recording(x):
        def back(g):
            x.accumulate_grad(g.T)

        _emit("transpose", (x,), (out,), back)
    return out


def flip_columns(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"flip_columns expects a matrix, got shape {x.data.shape}")
    out = Tensor(x.data[:, ::-1].copy())
    if _recording(x):
        def back(g):
            x.accumulate_grad(g[:, ::-1])

        _emit("flip_columns", (x,), (out,), back)
    return out


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a vector as a scalar tensor."""
    x = _as_tensor(x)
    if x.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got shape {x.data.shape}")
    if not 0 <= index < x.data.size:
        raise IndexError(f"pick index {index} out of range for length {x.data.size}")
    out = Tensor(x.data[index])
    if _recording(x):
        def back(g):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[index] += g

        _emit("pick", (x,), (out,), back)
    return out


def sum_squares(x: Tensor) -> Tensor:
    """Scalar sum of squared entries."""
    x = _as_tensor(x)
    out = Tensor(np.sum(x.data * x.data))
    if _recording(x):
        x_data = x.data

        def back(g):
            x.accumulate_grad(2.0 * x_data * g)

        _emit("sum_squares", (x,), (out,), back)
    return out


def embed_columns(table: Tensor, indices) -> Tensor:
    """Rows of `table` selected by `indices`, laid out as columns [dim, k].

    Gradients scatter-add back into the table rows, so sparse lookups into
    a trainable embedding table behave like a dense linear map.
    """
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    if table.data.ndim != 2 or idx.ndim != 1:
        raise ShapeError(
            f"embed_columns expects a matrix and index vector, got "
            f"{table.data.shape} and {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding index out of range [0, {table.data.shape[0]}): "
            f"{int(idx.min())}..{int(idx.max())}")
    out = Tensor(table.data[idx].T.copy())
    if _recording(table):
        def back(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g.T)

        _emit("embed_columns", (table,), (out,), back)
    return out
