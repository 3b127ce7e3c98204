"""DBGNN: encoders, K shared-weight DB T-step blocks with input skips, MLP decoder.

Parameters are a flat ``dict[str, np.ndarray]``. The forward pass is written
once against :class:`~dbgnn.autodiff.Tape`; evaluation runs it on a disabled
tape, training on a recording one.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .autodiff import Tape, Var
from .dynamics import DBWeights, FeatureState, NumericOverflow, db1s_step, init_weights
from .graph import Graph, adjacency

CHECKPOINT_FORMAT = "dbgnn-ckpt-v1"


@dataclass(frozen=True)
class DBGNNConfig:
    # defaults follow the power-grid hyperparameter table (dataset20)
    d_n_in: int = 1
    d_e_in: int = 1
    d_n_hidden: int = 113
    d_e_hidden: int = 109
    d_out: int = 1
    K: int = 2
    T: int = 68
    node_dropout: float = 1.4e-2
    edge_dropout: float = 1.9e-3
    activation: str = "tanh"
    pooling: str = "none"
    head: bool = False
    spread: float = 0.1
    oscillatory_init: bool = False
    layer_kind: str = "db"  # "db", or "mpnn_sigma" for the equal-depth message-passing baseline

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ValueError(f"K and T must be >= 1, got K={self.K}, T={self.T}")
        if self.pooling not in ("none", "mean"):
            raise ValueError(f"pooling must be 'none' or 'mean', got {self.pooling!r}")
        if self.layer_kind not in ("db", "mpnn_sigma"):
            raise ValueError(f"unknown layer_kind {self.layer_kind!r}")
        if self.activation not in ("tanh", "relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        for r in (self.node_dropout, self.edge_dropout):
            if not 0.0 <= r < 1.0:
                raise ValueError(f"dropout must be in [0, 1), got {r}")

    @property
    def total_steps(self) -> int:
        return self.K * self.T

    @classmethod
    def desk(cls, **overrides) -> DBGNNConfig:
        """Desk-scale preset: K=2, T=16, hidden 32, no dropout."""
        base = dict(d_n_hidden=32, d_e_hidden=32, K=2, T=16, node_dropout=0.0, edge_dropout=0.0)
        base.update(overrides)
        return cls(**base)


def _linear_init(rng, fan_in, fan_out, bias=True):
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, (fan_in, fan_out))
    return (w, rng.uniform(-bound, bound, fan_out)) if bias else (w, None)


def init_params(cfg: DBGNNConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    dn, de = cfg.d_n_hidden, cfg.d_e_hidden
    p["node_enc.W"], p["node_enc.b"] = _linear_init(rng, cfg.d_n_in, dn)
    p["edge_enc.W"], p["edge_enc.b"] = _linear_init(rng, cfg.d_e_in, de)
    for k in range(cfg.K):
        w = init_weights(dn, de, cfg.spread, cfg.oscillatory_init, rng)
        p[f"layer{k}.W_ne"] = w.W_ne
        p[f"layer{k}.W_en"] = w.W_en
        p[f"layer{k}.W_beta_n"] = w.W_beta_n
        p[f"layer{k}.W_beta_e"] = w.W_beta_e
        p[f"skip{k}.node"] = _linear_init(rng, dn, dn, bias=False)[0]
        p[f"skip{k}.edge"] = _linear_init(rng, de, de, bias=False)[0]
    p["dec.W1"], p["dec.b1"] = _linear_init(rng, dn, dn)
    p["dec.W2"], p["dec.b2"] = _linear_init(rng, dn, cfg.d_out)
    if cfg.head:
        p["head.W1"], p["head.b1"] = _linear_init(rng, cfg.d_out, dn)
        p["head.W2"], p["head.b2"] = _linear_init(rng, dn, cfg.d_out)
    return p


def layer_weights(params: dict[str, np.ndarray], k: int) -> DBWeights:
    return DBWeights(params[f"layer{k}.W_ne"], params[f"layer{k}.W_en"],
                     params[f"layer{k}.W_beta_n"], params[f"layer{k}.W_beta_e"])


def pool_matrix(graph_index: np.ndarray, n_graphs: int | None = None) -> sp.csr_matrix:
    """Sparse (graphs x nodes) averaging matrix."""
    graph_index = np.asarray(graph_index)
    n_graphs = int(graph_index.max()) + 1 if n_graphs is None else n_graphs
    counts = np.bincount(graph_index, minlength=n_graphs).astype(np.float64)
    vals = 1.0 / counts[graph_index]
    return sp.csr_matrix((vals, (graph_index, np.arange(graph_index.size))),
                         shape=(n_graphs, graph_index.size))


StepHook = Callable[[int, np.ndarray], None]


def dbts_forward(g: Graph, w: DBWeights, T: int, s: FeatureState, train_mode: bool = False,
                 rng: np.random.Generator | None = None, node_dropout: float = 0.0,
                 edge_dropout: float = 0.0, activation: str = "tanh") -> FeatureState:
    """DB T-step layer: ``T`` DB 1-steps sharing one weight set (array-level reference)."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    for t in range(T):
        s = db1s_step(g, w, s, node_dropout, train_mode, rng, activation, edge_dropout)
        if not s.is_finite():
            raise NumericOverflow(t + 1)
    return s


def dbts_tape(tape: Tape, g: Graph, layer: dict[str, Var], T: int, x: Var, e: Var, *,
              activation: str = "tanh", node_dropout: float = 0.0, edge_dropout: float = 0.0,
              train_mode: bool = False, rng: np.random.Generator | None = None,
              on_step: StepHook | None = None, step_offset: int = 0, kind: str = "db") -> tuple[Var, Var]:
    """Differentiable DB T-step layer; adjoints of the shared weights accumulate over all T steps.

    ``kind="mpnn_sigma"`` swaps the step for ReLU message passing, reusing
    W_ne / W_en / W_beta_n as W_n / W_e / beta_n.
    """
    W_neT = tape.transpose(layer["W_ne"])
    W_enT = tape.transpose(layer["W_en"])
    W_bnT = tape.transpose(layer["W_beta_n"])
    W_beT = tape.transpose(layer["W_beta_e"])
    S, G = g.scatter_matrix, g.gather_matrix
    for t in range(T):
        if kind == "mpnn_sigma":
            # messages are recomputed from x each step; ReLU on messages and nodes
            e = tape.relu(tape.matmul(tape.gather_diff(x, G), W_enT))
            if train_mode:
                e = tape.dropout(e, edge_dropout, rng)
            x_new = tape.add(tape.matmul(tape.scatter_sum(e, S), W_neT), tape.matmul(x, W_bnT))
            if train_mode:
                x_new = tape.dropout(x_new, node_dropout, rng)
            x = tape.relu(x_new)
        else:
            x_new = tape.add(tape.add(x, tape.matmul(tape.scatter_sum(e, S), W_neT)), tape.matmul(x, W_bnT))
            e_new = tape.sub(tape.add(e, tape.matmul(tape.gather_diff(x, G), W_enT)), tape.matmul(e, W_beT))
            if train_mode:
                x_new = tape.dropout(x_new, node_dropout, rng)
                e_new = tape.dropout(e_new, edge_dropout, rng)
            x = tape.activation(x_new, activation)
            e = tape.activation(e_new, activation)
        if not (np.isfinite(x.value).all() and np.isfinite(e.value).all()):
            raise NumericOverflow(step_offset + t + 1)
        if on_step is not None:
            on_step(step_offset + t + 1, x.value)
    return x, e


@dataclass
class DBGNN:
    config: DBGNNConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def init(cls, config: DBGNNConfig, rng: np.random.Generator | int = 0) -> DBGNN:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return cls(config, init_params(config, rng))

    @property
    def total_steps(self) -> int:
        return self.config.total_steps

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def bind(self, tape: Tape) -> dict[str, Var]:
        return {k: tape.leaf(v) for k, v in self.params.items()}

    def forward_tape(self, tape: Tape, pv: dict[str, Var], g: Graph, node_in, edge_in, *,
                     train_mode: bool = False, rng: np.random.Generator | None = None,
                     graph_index: np.ndarray | None = None, on_step: StepHook | None = None) -> Var:
        """Inputs may be arrays or tape Vars (the latter to differentiate with respect to inputs)."""
        cfg = self.config
        node_in = node_in if isinstance(node_in, Var) else tape.constant(node_in)
        edge_in = edge_in if isinstance(edge_in, Var) else tape.constant(edge_in)
        if node_in.shape != (g.num_nodes, cfg.d_n_in):
            raise ValueError(f"node_in shape {node_in.shape} != {(g.num_nodes, cfg.d_n_in)}")
        if edge_in.shape != (g.num_directed, cfg.d_e_in):
            raise ValueError(f"edge_in shape {edge_in.shape} != {(g.num_directed, cfg.d_e_in)}")
        if train_mode and rng is None and (cfg.node_dropout > 0 or cfg.edge_dropout > 0):
            raise ValueError("train_mode with dropout needs an rng")

        h0x = tape.add(tape.matmul(node_in, pv["node_enc.W"]), pv["node_enc.b"])
        h0e = tape.add(tape.matmul(edge_in, pv["edge_enc.W"]), pv["edge_enc.b"])
        if on_step is not None:
            on_step(0, h0x.value)
        x, e = h0x, h0e
        for k in range(cfg.K):
            layer = {n: pv[f"layer{k}.{n}"] for n in ("W_ne", "W_en", "W_beta_n", "W_beta_e")}
            x, e = dbts_tape(tape, g, layer, cfg.T, x, e, activation=cfg.activation,
                             node_dropout=cfg.node_dropout, edge_dropout=cfg.edge_dropout,
                             train_mode=train_mode, rng=rng, on_step=on_step, step_offset=k * cfg.T,
                             kind=cfg.layer_kind)
            x = tape.add(x, tape.matmul(h0x, pv[f"skip{k}.node"]))
            e = tape.add(e, tape.matmul(h0e, pv[f"skip{k}.edge"]))

        hidden = tape.relu(tape.add(tape.matmul(x, pv["dec.W1"]), pv["dec.b1"]))
        out = tape.add(tape.matmul(hidden, pv["dec.W2"]), pv["dec.b2"])
        if cfg.pooling == "mean":
            gi = np.zeros(g.num_nodes, dtype=np.int64) if graph_index is None else graph_index
            out = tape.mean_pool(out, pool_matrix(gi))
            if cfg.head:
                hh = tape.relu(tape.add(tape.matmul(out, pv["head.W1"]), pv["head.b1"]))
                out = tape.add(tape.matmul(hh, pv["head.W2"]), pv["head.b2"])
        return out

    def forward(self, g: Graph, node_in, edge_in, *, train_mode: bool = False,
                rng: np.random.Generator | None = None, graph_index: np.ndarray | None = None,
                on_step: StepHook | None = None) -> np.ndarray:
        tape = Tape(enabled=False)
        out = self.forward_tape(tape, self.bind(tape), g, node_in, edge_in, train_mode=train_mode,
                                rng=rng, graph_index=graph_index, on_step=on_step)
        return out.value


def input_sensitivity(model: DBGNN, g: Graph, node_in, edge_in, node: int) -> np.ndarray:
    """Per input node ``u``, the summed absolute gradient of ``out[node]`` with respect to ``node_in[u]``.

    Reverse mode gives the product of Jacobians without the cancellation a
    finite perturbation suffers when a far input's effect is ~1e-40.
    """
    tape = Tape()
    x_in = tape.leaf(node_in)
    out = model.forward_tape(tape, model.bind(tape), g, x_in, np.asarray(edge_in, dtype=np.float64))
    sel = np.zeros((1, out.shape[0]))
    sel[0, node] = 1.0
    total = tape.matmul(tape.matmul(tape.constant(sel), out), tape.constant(np.ones((out.shape[1], 1))))
    tape.backward(total)
    return np.abs(x_in.grad).sum(axis=1)


def dbgnn_forward(model: DBGNN, g: Graph, node_in, edge_in, train_mode: bool = False,
                  rng: np.random.Generator | None = None, **kwargs) -> np.ndarray:
    return model.forward(g, node_in, edge_in, train_mode=train_mode, rng=rng, **kwargs)


def save_checkpoint(path, model: DBGNN, extra: dict | None = None) -> None:
    meta = {"format": CHECKPOINT_FORMAT, "config": asdict(model.config), "extra": extra or {}}
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[DBGNN, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        params = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
    return DBGNN(DBGNNConfig(**meta["config"]), params), meta["extra"]


def normalized_adjacency(g: Graph) -> np.ndarray:
    """``D~^-1/2 (A + I) D~^-1/2`` with self-loops."""
    a = adjacency(g) + np.eye(g.num_nodes)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass
class GCNBaseline:
    weights: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @classmethod
    def init(cls, d_in: int, d_hidden: int, depth: int, spread: float = 0.1,
             rng: np.random.Generator | None = None) -> GCNBaseline:
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        rng = np.random.default_rng() if rng is None else rng
        ws = [rng.normal(0.0, spread, (d_in, d_hidden))]
        ws += [rng.normal(0.0, spread, (d_hidden, d_hidden)) for _ in range(depth - 1)]
        return cls(ws)


def gcn_forward(model: GCNBaseline, g: Graph, node_in, depth: int | None = None) -> list[np.ndarray]:
    """Embeddings after each of the first ``depth`` layers of ``x <- ReLU(A_hat x W)``."""
    depth = model.depth if depth is None else depth
    if not 1 <= depth <= model.depth:
        raise ValueError(f"depth must be in [1, {model.depth}], got {depth}")
    x = np.asarray(node_in, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.num_nodes or x.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"node_in shape {x.shape} does not match graph/model")
    a_hat = normalized_adjacency(g)
    out = []
    for w in model.weights[:depth]:
        x = np.maximum(a_hat @ x @ w, 0.0)
        out.append(x)
    return out
