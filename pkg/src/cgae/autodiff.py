"""Minimal dense tensors with reverse-mode differentiation.

Operations record themselves on the active :class:`Tape`. Outside a tape
they run as plain numpy arithmetic, which is what inference uses.

    with Tape() as tape:
        loss = square(x).sum()
    grads = tape.backward(loss)
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "ShapeError", "DomainError", "TapeError", "NonFiniteGradientError",
    "matmul", "add", "sub", "mul", "exp", "log", "square", "elementwise", "relu",
    "clip", "tsum", "reshape", "concat", "scale", "sgd_step",
]


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str, iteration: int | None = None):
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"non-finite gradient for parameter {name!r}{where}")
        self.name = name
        self.iteration = iteration


class Tensor:
    """Row-major float64 array that can take part in differentiation."""

    __slots__ = ("data", "name", "__weakref__")

    def __init__(self, data, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    @classmethod
    def zeros(cls, shape, name=None):
        return cls(np.zeros(shape), name)

    @classmethod
    def ones_like(cls, t: "Tensor"):
        return cls(np.ones(t.shape))

    def __matmul__(self, other):
        return matmul(self, other)

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
        return scale(self, -1.0)

    def sum(self):
        return tsum(self)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of primitive operations, replayed in reverse by backward()."""

    _stack: list["Tape"] = []

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def __len__(self):
        return len(self.records)

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
        """Gradients of the scalar ``loss``, keyed by ``id(tensor)``.

        When ``wrt`` is given, every listed tensor gets an entry (zeros if the
        loss does not depend on it).
        """
        if not self.records:
            raise TapeError("backward called on an empty tape")
        if loss.size != 1:
            raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
        # creation order is a topological order, so reverse replay sees every
        # consumer of a value before the value itself
        for rec in reversed(self.records):
            g = grads.get(id(rec.out))
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not isinstance(inp, Tensor):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        if wrt is not None:
            for p in wrt:
                grads.setdefault(id(p), np.zeros(p.shape))
        return grads


def _record(out: Tensor, inputs: Sequence, backward: Callable) -> Tensor:
    tape = Tape.active()
    if tape is not None:
        tape.records.append(_Record(out, tuple(inputs), backward))
    return out


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def _binary(op: str, a, b) -> Tensor:
    if _is_scalar(a) and isinstance(b, Tensor):
        if op == "sub":
            return scale(b, -1.0) + float(a)
        return _binary(op, b, a)
    if isinstance(a, Tensor) and _is_scalar(b):
        c = float(b)
        if op == "add":
            return _record(Tensor(a.data + c), (a,), lambda g: (g,))
        if op == "sub":
            return _record(Tensor(a.data - c), (a,), lambda g: (g,))
        if op == "mul":
            return scale(a, c)
    if not (isinstance(a, Tensor) and isinstance(b, Tensor)):
        raise TypeError(f"{op}: unsupported operands {type(a).__name__}, {type(b).__name__}")
    _check_same(a, b, op)
    if op == "add":
        return _record(Tensor(a.data + b.data), (a, b), lambda g: (g, g))
    if op == "sub":
        return _record(Tensor(a.data - b.data), (a, b), lambda g: (g, -g))
    if op == "mul":
        return _record(Tensor(a.data * b.data), (a, b), lambda g: (g * b.data, g * a.data))
    raise ValueError(f"unknown binary op {op!r}")


def add(a, b) -> Tensor:
    return _binary("add", a, b)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b)


def mul(a, b) -> Tensor:
    return _binary("mul", a, b)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(Tensor(a.data * c), (a,), lambda g: (g * c,))


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    return _record(out, (a,), lambda g: (g * out.data,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive entry")
    return _record(Tensor(np.log(a.data)), (a,), lambda g: (g / a.data,))


def square(a: Tensor) -> Tensor:
    return _record(Tensor(a.data * a.data), (a,), lambda g: (2.0 * g * a.data,))


_UNARY = {"exp": exp, "log": log, "square": square}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name: add, sub, mul (binary) or exp, log, square (unary)."""
    if op in _BINARY:
        if b is None:
            raise TypeError(f"{op} needs two operands")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a)
    raise ValueError(f"unknown elementwise op {op!r}")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at exactly 0
    return _record(Tensor(np.where(mask, a.data, 0.0)), (a,), lambda g: (g * mask,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    return _record(Tensor(np.clip(a.data, low, high)), (a,), lambda g: (g * inside,))


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(Tensor(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    out = Tensor(a.data.reshape(shape))
    if out.size != a.size:
        raise ShapeError(f"reshape: cannot view {old} as {shape}")
    return _record(out, (a,), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    arrays = [p.data for p in parts]
    try:
        out = Tensor(np.concatenate(arrays, axis=axis))
    except ValueError as err:
        raise ShapeError(f"concat: {[p.shape for p in parts]}: {err}") from None
    bounds = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
    return _record(out, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def sgd_step(params: Sequence[Tensor], grads: dict[int, np.ndarray], eta: float,
             iteration: int | None = None) -> None:
    """In-place p <- p - eta * g. Raises before touching anything if a gradient is non-finite."""
    for i, p in enumerate(params):
        g = grads[id(p)]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(p.name or f"param[{i}]", iteration)
    for p in params:
        p.data -= eta * grads[id(p)]
