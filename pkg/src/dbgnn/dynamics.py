"""Forward-only graph dynamics: linear Dirac-Bianconi steps and MPNN baselines.

Features are stored row-wise: ``node`` is ``(num_nodes, d_n)`` and ``edge`` is
``(num_directed, d_e)``. A weight ``W`` acting on a column feature vector is
applied to the row matrix as ``X @ W.T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import Graph
from . import metrics


class NumericOverflow(FloatingPointError):
    def __init__(self, step: int, msg: str = ""):
        super().__init__(msg or f"non-finite values at step {step}")
        self.step = step


@dataclass(frozen=True)
class FeatureState:
    node: np.ndarray
    edge: np.ndarray

    def check(self, g: Graph) -> None:
        if self.node.ndim != 2 or self.node.shape[0] != g.num_nodes:
            raise ValueError(f"node features {self.node.shape} do not match {g.num_nodes} nodes")
        if self.edge.ndim != 2 or self.edge.shape[0] != g.num_directed:
            raise ValueError(f"edge features {self.edge.shape} do not match {g.num_directed} directed edges")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.node).all() and np.isfinite(self.edge).all())

    @classmethod
    def zeros(cls, g: Graph, d_n: int, d_e: int) -> FeatureState:
        return cls(np.zeros((g.num_nodes, d_n)), np.zeros((g.num_directed, d_e)))


@dataclass(frozen=True)
class DBWeights:
    W_ne: np.ndarray  # d_n x d_e
    W_en: np.ndarray  # d_e x d_n
    W_beta_n: np.ndarray  # d_n x d_n
    W_beta_e: np.ndarray  # d_e x d_e

    @property
    def d_n(self) -> int:
        return self.W_ne.shape[0]

    @property
    def d_e(self) -> int:
        return self.W_ne.shape[1]

    def __post_init__(self):
        d_n, d_e = self.W_ne.shape
        expect = {"W_en": (d_e, d_n), "W_beta_n": (d_n, d_n), "W_beta_e": (d_e, d_e)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def is_oscillatory(self, atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.W_ne, -self.W_en.T, rtol=0, atol=atol)
            and np.allclose(self.W_beta_n, -self.W_beta_n.T, rtol=0, atol=atol)
            and np.allclose(self.W_beta_e, -self.W_beta_e.T, rtol=0, atol=atol)
        )

    @classmethod
    def zeros(cls, d_n: int, d_e: int) -> DBWeights:
        return cls(np.zeros((d_n, d_e)), np.zeros((d_e, d_n)), np.zeros((d_n, d_n)), np.zeros((d_e, d_e)))


@dataclass(frozen=True)
class MPNNWeights:
    W_n: np.ndarray  # d_n x d_e
    W_e: np.ndarray  # d_e x d_n
    beta_n: np.ndarray  # d_n x d_n

    @classmethod
    def from_db(cls, w: DBWeights) -> MPNNWeights:
        """Share DB weights: W_n <- W_ne, W_e <- W_en, beta_n <- W_beta_n."""
        return cls(w.W_ne, w.W_en, w.W_beta_n)


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh": np.tanh,
    "relu": lambda a: np.maximum(a, 0.0),
    "identity": lambda a: a,
}


def _relu(a):
    return np.maximum(a, 0.0)


def lindb_step(g: Graph, w: DBWeights, s: FeatureState) -> FeatureState:
    """One step of the generalized linear DB recurrence (all terms read time-t values)."""
    x, e = s.node, s.edge
    if x.shape[1] != w.d_n or e.shape[1] != w.d_e:
        raise ValueError(f"state dims ({x.shape[1]}, {e.shape[1]}) != weight dims ({w.d_n}, {w.d_e})")
    x_new = x + (g.scatter_matrix @ e) @ w.W_ne.T + x @ w.W_beta_n.T
    e_new = e + (g.gather_matrix @ x) @ w.W_en.T - e @ w.W_beta_e.T
    return FeatureState(x_new, e_new)


def _messages(g: Graph, w: MPNNWeights, x: np.ndarray) -> np.ndarray:
    if x.shape[1] != w.W_e.shape[1]:
        raise ValueError(f"node dim {x.shape[1]} != W_e input dim {w.W_e.shape[1]}")
    return (g.gather_matrix @ x) @ w.W_e.T


def mpnn_linear_step(g: Graph, w: MPNNWeights, s: FeatureState) -> FeatureState:
    """Linear MPNN; the returned edge rows are the messages computed from the input x."""
    x = s.node
    msg = _messages(g, w, x)
    x_new = x + (g.scatter_matrix @ msg) @ w.W_n.T + x @ w.beta_n.T
    return FeatureState(x_new, msg)


def mpnn_sigma_step(g: Graph, w: MPNNWeights, s: FeatureState, edge_nonlinearity: bool = True) -> FeatureState:
    """ReLU MPNN with optionally rectified messages."""
    x = s.node
    msg = _messages(g, w, x)
    if edge_nonlinearity:
        msg = _relu(msg)
    x_new = _relu((g.scatter_matrix @ msg) @ w.W_n.T + x @ w.beta_n.T)
    return FeatureState(x_new, msg)


def dropout(a: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: keep with prob ``1 - rate`` and rescale by ``1 / (1 - rate)``."""
    if rate == 0.0:
        return a
    mask = rng.random(a.shape) >= rate
    return a * mask / (1.0 - rate)


def db1s_step(g: Graph, w: DBWeights, s: FeatureState, dropout_rate: float = 0.0,
              train_mode: bool = False, rng: np.random.Generator | None = None,
              activation: str = "tanh", edge_dropout_rate: float | None = None) -> FeatureState:
    """Linear DB step, then dropout (training only), then the nonlinearity."""
    if edge_dropout_rate is None:
        edge_dropout_rate = dropout_rate
    for r in (dropout_rate, edge_dropout_rate):
        if not 0.0 <= r < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {r}")
    act = ACTIVATIONS[activation]
    nxt = lindb_step(g, w, s)
    x, e = nxt.node, nxt.edge
    if train_mode and (dropout_rate > 0 or edge_dropout_rate > 0):
        if rng is None:
            raise ValueError("train_mode dropout needs an rng")
        x = dropout(x, dropout_rate, rng)
        e = dropout(e, edge_dropout_rate, rng)
    return FeatureState(act(x), act(e))


def init_weights(d_n: int, d_e: int, spread: float = 0.1, oscillatory: bool = False,
                 rng: np.random.Generator | None = None) -> DBWeights:
    """Normal(0, spread^2) weights; in oscillatory mode W_ne = -W_en^T and the mass matrices are antisymmetric."""
    if spread <= 0:
        raise ValueError(f"spread must be > 0, got {spread}")
    rng = np.random.default_rng() if rng is None else rng
    W_en = rng.normal(0.0, spread, (d_e, d_n))
    if not oscillatory:
        return DBWeights(
            rng.normal(0.0, spread, (d_n, d_e)),
            W_en,
            rng.normal(0.0, spread, (d_n, d_n)),
            rng.normal(0.0, spread, (d_e, d_e)),
        )

    def antisym(d):
        upper = np.triu(rng.normal(0.0, spread, (d, d)), k=1)
        return upper - upper.T

    return DBWeights(-W_en.T.copy(), W_en, antisym(d_n), antisym(d_e))


def spreading_initial_state(g: Graph, d_n: int, d_e: int, rng: np.random.Generator) -> FeatureState:
    """Random normal features on the nodes of grid column 0, zeros elsewhere."""
    if g.grid_shape is None:
        raise ValueError("spreading_initial_state needs a graph built by make_grid")
    rows, cols = g.grid_shape
    s = FeatureState.zeros(g, d_n, d_e)
    s.node[np.arange(rows) * cols] = rng.normal(0.0, 1.0, (rows, d_n))
    return s


def single_node_state(g: Graph, d_n: int, d_e: int, rng: np.random.Generator, node: int = 0) -> FeatureState:
    """Random normal features on one node, zeros elsewhere."""
    s = FeatureState.zeros(g, d_n, d_e)
    s.node[node] = rng.normal(0.0, 1.0, d_n)
    return s


@dataclass
class Trajectory:
    states: list[FeatureState]
    activation: np.ndarray  # (T + 1, num_nodes)
    dirichlet: np.ndarray  # (T + 1,)
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def steps(self) -> int:
        return len(self.states) - 1


STEPPERS = ("lindb", "db1s", "mpnn_linear", "mpnn_sigma", "mpnn_sigma_linear_msg")


def make_stepper(kind: str, weights, **kwargs) -> Callable[[Graph, FeatureState], FeatureState]:
    """Bind a stepper kind to weights. ``weights`` is a DBWeights; MPNN kinds reuse it via ``MPNNWeights.from_db``."""
    if kind == "lindb":
        return lambda g, s: lindb_step(g, weights, s)
    if kind == "db1s":
        return lambda g, s: db1s_step(g, weights, s, **kwargs)
    mw = weights if isinstance(weights, MPNNWeights) else MPNNWeights.from_db(weights)
    if kind == "mpnn_linear":
        return lambda g, s: mpnn_linear_step(g, mw, s)
    if kind == "mpnn_sigma":
        return lambda g, s: mpnn_sigma_step(g, mw, s, edge_nonlinearity=True)
    if kind == "mpnn_sigma_linear_msg":
        return lambda g, s: mpnn_sigma_step(g, mw, s, edge_nonlinearity=False)
    raise ValueError(f"unknown stepper {kind!r}; expected one of {STEPPERS}")


def evolve(g: Graph, stepper, weights, s0: FeatureState, T: int, **stepper_kwargs) -> Trajectory:
    """Apply a stepper ``T`` times, recording node activations and Dirichlet energy.

    ``stepper`` is a kind name from ``STEPPERS`` or a callable ``(g, state) -> state``.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    s0.check(g)
    step = make_stepper(stepper, weights, **stepper_kwargs) if isinstance(stepper, str) else stepper
    s = FeatureState(s0.node.copy(), s0.edge.copy())
    states = [s]
    act = [np.linalg.norm(s.node, axis=1)]
    de = [metrics.dirichlet_edges(g, s.node)]
    for t in range(1, T + 1):
        s = step(g, s)
        if not s.is_finite():
            raise NumericOverflow(t)
        states.append(s)
        act.append(np.linalg.norm(s.node, axis=1))
        de.append(metrics.dirichlet_edges(g, s.node))
    degenerate = np.array([np.all(a == 0) for a in act])
    return Trajectory(states, np.array(act), np.array(de), degenerate)
