"""Minimal reverse-mode differentiation over a fixed set of array primitives.

A :class:`Tape` records every primitive applied to :class:`Var` handles.
``Tape.backward`` walks the records in reverse and applies the adjoint rule
registered for each op. Forward and adjoint rules live in two module-level
tables so a tape can be built with a deliberately broken rule (gradient-check
negative control) and so ``Tape.replay`` can re-run the forward pass.
"""
from __future__ import annotations

from typing import Any, Callable

import numpy as np


class NumericFailure(FloatingPointError):
    pass


class Var:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _huber(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


# forward rules: (input values, ctx) -> output value
FORWARD: dict[str, Callable[..., Any]] = {
    "matmul": lambda v, c: v[0] @ v[1],
    "add": lambda v, c: v[0] + v[1],
    "sub": lambda v, c: v[0] - v[1],
    "scale": lambda v, c: c * v[0],
    "transpose": lambda v, c: v[0].T,
    "relu": lambda v, c: np.maximum(v[0], 0.0),
    "tanh": lambda v, c: np.tanh(v[0]),
    "gather_diff": lambda v, c: c @ v[0],
    "scatter_sum": lambda v, c: c @ v[0],
    "dropout": lambda v, c: v[0] * c,
    "mean_pool": lambda v, c: c @ v[0],
    "mse": lambda v, c: np.mean((v[0] - c) ** 2),
    "huber": lambda v, c: np.mean(_huber(v[0] - c[0], c[1])),
}

# adjoint rules: (upstream grad, input values, output value, ctx) -> input grads
ADJOINTS: dict[str, Callable[..., tuple]] = {
    "matmul": lambda g, v, out, c: (g @ v[1].T, v[0].T @ g),
    "add": lambda g, v, out, c: (_unbroadcast(g, np.shape(v[0])), _unbroadcast(g, np.shape(v[1]))),
    "sub": lambda g, v, out, c: (_unbroadcast(g, np.shape(v[0])), -_unbroadcast(g, np.shape(v[1]))),
    "scale": lambda g, v, out, c: (c * g,),
    "transpose": lambda g, v, out, c: (g.T,),
    "relu": lambda g, v, out, c: (g * (v[0] > 0),),
    "tanh": lambda g, v, out, c: (g * (1.0 - out * out),),
    # gather is x -> M x; its adjoint scatters with signs: y -> M^T y
    "gather_diff": lambda g, v, out, c: (c.T @ g,),
    "scatter_sum": lambda g, v, out, c: (c.T @ g,),
    "dropout": lambda g, v, out, c: (g * c,),
    "mean_pool": lambda g, v, out, c: (c.T @ g,),
    "mse": lambda g, v, out, c: (g * 2.0 * (v[0] - c) / np.size(v[0]),),
    "huber": lambda g, v, out, c: (g * np.clip(v[0] - c[0], -c[1], c[1]) / np.size(v[0]),),
}


class Tape:
    """Records primitive ops; ``enabled=False`` evaluates without recording."""

    def __init__(self, enabled: bool = True, adjoints: dict | None = None):
        self.enabled = enabled
        self.records: list[tuple[str, Var, tuple[Var, ...], Any]] = []
        self.leaves: list[Var] = []
        self.adjoints = dict(ADJOINTS) if adjoints is None else adjoints

    def leaf(self, value, requires_grad: bool = True) -> Var:
        v = Var(np.asarray(value, dtype=np.float64), requires_grad and self.enabled)
        self.leaves.append(v)
        return v

    def constant(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), False)

    def _apply(self, op: str, inputs: tuple[Var, ...], ctx=None) -> Var:
        value = FORWARD[op](tuple(x.value for x in inputs), ctx)
        out = Var(value, any(x.requires_grad for x in inputs))
        if self.enabled and out.requires_grad:
            self.records.append((op, out, inputs, ctx))
        return out

    def matmul(self, a: Var, b: Var) -> Var:
        return self._apply("matmul", (a, b))

    def add(self, a: Var, b: Var) -> Var:
        return self._apply("add", (a, b))

    def sub(self, a: Var, b: Var) -> Var:
        return self._apply("sub", (a, b))

    def scale(self, a: Var, c: float) -> Var:
        return self._apply("scale", (a,), float(c))

    def transpose(self, a: Var) -> Var:
        return self._apply("transpose", (a,))

    def relu(self, a: Var) -> Var:
        return self._apply("relu", (a,))

    def tanh(self, a: Var) -> Var:
        return self._apply("tanh", (a,))

    def activation(self, a: Var, kind: str) -> Var:
        if kind == "identity":
            return a
        if kind == "relu":
            return self.relu(a)
        if kind == "tanh":
            return self.tanh(a)
        raise ValueError(f"unknown activation {kind!r}")

    def gather_diff(self, x: Var, gather_matrix) -> Var:
        """Per directed edge ``x[src] - x[dst]`` via the graph's sparse gather matrix."""
        return self._apply("gather_diff", (x,), gather_matrix)

    def scatter_sum(self, e: Var, scatter_matrix) -> Var:
        """Per node, the sum of its outgoing directed-edge rows."""
        return self._apply("scatter_sum", (e,), scatter_matrix)

    def dropout(self, a: Var, rate: float, rng: np.random.Generator) -> Var:
        """Inverted dropout; the sampled scaled mask is stored on the tape."""
        if rate == 0.0:
            return a
        mask = (rng.random(np.shape(a.value)) >= rate) / (1.0 - rate)
        return self._apply("dropout", (a,), mask)

    def mean_pool(self, x: Var, pool_matrix) -> Var:
        return self._apply("mean_pool", (x,), pool_matrix)

    def mse(self, pred: Var, target) -> Var:
        return self._apply("mse", (pred,), np.asarray(target, dtype=np.float64))

    def huber(self, pred: Var, target, delta: float = 1.0) -> Var:
        return self._apply("huber", (pred,), (np.asarray(target, dtype=np.float64), float(delta)))

    def backward(self, out: Var) -> None:
        """Accumulate ``d out / d leaf`` into ``leaf.grad`` for every recorded path."""
        if not self.enabled:
            raise RuntimeError("backward on a disabled tape")
        if np.size(out.value) != 1:
            raise ValueError("backward needs a scalar output")
        if not np.all(np.isfinite(out.value)):
            raise NumericFailure("non-finite loss; refusing to backpropagate")
        grads: dict[int, np.ndarray] = {id(out): np.ones_like(out.value)}
        for op, o, inputs, ctx in reversed(self.records):
            g = grads.pop(id(o), None)
            if g is None:
                continue
            in_grads = self.adjoints[op](g, tuple(x.value for x in inputs), o.value, ctx)
            for x, gx in zip(inputs, in_grads):
                if not x.requires_grad:
                    continue
                if id(x) in grads:
                    grads[id(x)] = grads[id(x)] + gx
                else:
                    grads[id(x)] = gx
        for leaf in self.leaves:
            if leaf.requires_grad:
                g = grads.get(id(leaf))
                leaf.grad = np.zeros_like(leaf.value) if g is None else g

    def replay(self) -> float:
        """Re-run the recorded program from the leaves; return the max abs deviation."""
        fresh: dict[int, np.ndarray] = {}
        worst = 0.0
        for op, o, inputs, ctx in self.records:
            v = FORWARD[op](tuple(fresh.get(id(x), x.value) for x in inputs), ctx)
            fresh[id(o)] = v
            worst = max(worst, float(np.max(np.abs(v - o.value), initial=0.0)))
        return worst
