"""Gradients, Adam, one-cycle schedule, synthetic long-range tasks and the training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import metrics
from .autodiff import Tape
from .graph import Graph, GraphError, disjoint_union, make_grid, make_path
from .model import DBGNN


@dataclass
class Batch:
    graph: Graph
    node_in: np.ndarray
    edge_in: np.ndarray
    target: np.ndarray
    graph_index: np.ndarray


@dataclass
class SyntheticTask:
    kind: str
    graphs: list[Graph]
    node_inputs: list[np.ndarray]
    edge_inputs: list[np.ndarray]
    targets: list[np.ndarray]
    sources: np.ndarray
    splits: dict[str, np.ndarray]

    def batch(self, idx) -> Batch:
        idx = [int(i) for i in idx]
        g, gi = disjoint_union([self.graphs[i] for i in idx])
        return Batch(
            g,
            np.concatenate([self.node_inputs[i] for i in idx]),
            np.concatenate([self.edge_inputs[i] for i in idx]),
            np.concatenate([self.targets[i] for i in idx]),
            gi,
        )


def _family_graph(family: str, size: int) -> Graph:
    if family == "path":
        return make_path(size)
    if family == "grid":
        rows = max(2, int(math.isqrt(size)))
        return make_grid(rows, size // rows)
    raise ValueError(f"unknown graph family {family!r}")


def split_indices(n: int, rng: np.random.Generator, fractions=(0.70, 0.15, 0.15)) -> dict[str, np.ndarray]:
    """Shuffle and cut into train/val/test; rounding leftovers go to train."""
    order = rng.permutation(n)
    n_val = int(math.floor(fractions[1] * n))
    n_test = int(math.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    return {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }


def make_longrange_task(kind: str = "distance_regression", graph_family: str = "path", size: int = 32,
                        n_graphs: int = 32, seed: int = 0) -> SyntheticTask:
    """Node regression from a single marked source node.

    Node input is 1 at the source and 0 elsewhere; every directed edge has
    input 1. ``distance_regression`` targets hop distance to the source divided
    by the graph diameter; ``parity_source`` targets ``(-1)**distance``.
    Sources cycle through a random node permutation so placements repeat only
    once every node has been used.
    """
    if size < 8:
        raise GraphError(f"task size must be >= 8, got {size}")
    if kind not in ("distance_regression", "parity_source"):
        raise ValueError(f"unknown task kind {kind!r}")
    rng = np.random.default_rng(seed)
    g = _family_graph(graph_family, size)
    all_dist = np.stack([g.distances_from(v) for v in range(g.num_nodes)])
    diameter = int(all_dist.max())
    perm = rng.permutation(g.num_nodes)
    sources = np.array([perm[k % g.num_nodes] for k in range(n_graphs)], dtype=np.int64)
    node_inputs, edge_inputs, targets = [], [], []
    for s in sources:
        x = np.zeros((g.num_nodes, 1))
        x[s, 0] = 1.0
        d = all_dist[s].astype(np.float64)
        t = d / diameter if kind == "distance_regression" else (-1.0) ** d
        node_inputs.append(x)
        edge_inputs.append(np.ones((g.num_directed, 1)))
        targets.append(t[:, None])
    return SyntheticTask(kind, [g] * n_graphs, node_inputs, edge_inputs, targets, sources,
                         split_indices(n_graphs, rng))


def loss_on_tape(tape: Tape, pred, target, loss: str = "mse"):
    if loss == "mse":
        return tape.mse(pred, target)
    if loss == "huber":
        return tape.huber(pred, target)
    raise ValueError(f"unknown loss {loss!r}")


def grad(model: DBGNN, batch: Batch, loss: str = "mse", train_mode: bool = False,
         rng: np.random.Generator | None = None, adjoints: dict | None = None,
         params: dict[str, np.ndarray] | None = None) -> tuple[dict[str, np.ndarray], float]:
    """Reverse-mode gradient of the batch loss with respect to every parameter."""
    if params is not None:
        model = DBGNN(model.config, params)
    tape = Tape(adjoints=adjoints)
    pv = model.bind(tape)
    out = model.forward_tape(tape, pv, batch.graph, batch.node_in, batch.edge_in,
                             train_mode=train_mode, rng=rng, graph_index=batch.graph_index)
    value = loss_on_tape(tape, out, batch.target, loss)
    tape.backward(value)
    return {k: v.grad for k, v in pv.items()}, float(value.value)


def batch_loss(model: DBGNN, batch: Batch, loss: str = "mse") -> float:
    pred = model.forward(batch.graph, batch.node_in, batch.edge_in, graph_index=batch.graph_index)
    tape = Tape(enabled=False)
    return float(loss_on_tape(tape, tape.constant(pred), batch.target, loss).value)


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
        """Bias-corrected Adam update; returns new parameter arrays."""
        if set(params) != set(grads):
            raise ValueError("params and grads have different keys")
        self.t += 1
        out = {}
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.shape} for {k}")
            m = self.m.get(k, np.zeros_like(p))
            v = self.v.get(k, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            out[k] = p - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def adam_step(opt: Adam, params, grads, lr):
    return opt.step(params, grads, lr), opt


@dataclass(frozen=True)
class OneCycleLR:
    """Cosine warm-up from ``max_lr / initial_div`` to ``max_lr``, then cosine decay to ``max_lr / final_div``."""

    max_lr: float
    total_steps: int
    initial_div: float = 32.0
    final_div: float = 5.8e5
    warmup_frac: float = 0.3

    @property
    def warmup_steps(self) -> int:
        return max(1, round(self.warmup_frac * self.total_steps))

    def __call__(self, step: int) -> float:
        if not 0 <= step <= self.total_steps:
            raise ValueError(f"step {step} outside [0, {self.total_steps}]")
        start = self.max_lr / self.initial_div
        end = self.max_lr / self.final_div
        w = self.warmup_steps
        if step <= w:
            return _cos_anneal(start, self.max_lr, step / w)
        return _cos_anneal(self.max_lr, end, (step - w) / max(1, self.total_steps - w))


def _cos_anneal(a: float, b: float, frac: float) -> float:
    # weighted form is exact at both ends (frac 0 -> a, frac 1 -> b)
    c = 0.5 * (1.0 + math.cos(math.pi * frac))
    return a * c + b * (1.0 - c)


def one_cycle_lr(sched: OneCycleLR, step: int) -> float:
    return sched(step)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    max_lr: float = 6.1e-4
    initial_div: float = 32.0
    final_div: float = 5.8e5
    warmup_frac: float = 0.3
    loss: str = "mse"
    metric: str = "r2"
    seed: int = 0
    eval_every: int = 1
    patience: int | None = None


@dataclass
class TrainReport:
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    best_params: dict[str, np.ndarray] = field(repr=False)
    final: dict[str, float]

    def csv_rows(self):
        return [(h["epoch"], h["train_loss"], h["val_loss"], h["metric"], h["lr"]) for h in self.history]


def evaluate(model: DBGNN, task: SyntheticTask, split: str = "val", loss: str = "mse") -> dict[str, float]:
    idx = task.splits[split]
    if len(idx) == 0:
        return {"loss": float("nan"), "r2": float("nan"), "mae": float("nan")}
    b = task.batch(idx)
    pred = model.forward(b.graph, b.node_in, b.edge_in, graph_index=b.graph_index)
    tape = Tape(enabled=False)
    lval = float(loss_on_tape(tape, tape.constant(pred), b.target, loss).value)
    return {"loss": lval, "r2": metrics.r_squared(pred, b.target), "mae": metrics.mae(pred, b.target)}


def train(model: DBGNN, task: SyntheticTask, config: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None) -> TrainReport:
    """Minibatch Adam with a one-cycle schedule; keeps the best-validation parameters.

    ``model.params`` is updated in place to the final parameters.
    """
    rng = np.random.default_rng(config.seed)
    train_idx = task.splits["train"]
    n_batches = max(1, math.ceil(len(train_idx) / config.batch_size))
    total = config.epochs * n_batches
    sched = OneCycleLR(config.max_lr, max(total, 1), config.initial_div, config.final_div, config.warmup_frac)
    opt = Adam()
    params = dict(model.params)
    history = []
    best = (math.inf, 0, dict(params))
    step = 0
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_idx)
        losses, sizes = [], []
        lr = sched(step)
        for bi in range(n_batches):
            idx = order[bi * config.batch_size:(bi + 1) * config.batch_size]
            b = task.batch(idx)
            grads, lval = grad(model, b, config.loss, train_mode=True, rng=rng, params=params)
            lr = sched(step)
            params = opt.step(params, grads, lr)
            step += 1
            losses.append(lval)
            sizes.append(b.target.size)
        model.params = params
        row = {"epoch": epoch, "train_loss": float(np.average(losses, weights=sizes)), "val_loss": float("nan"),
               "metric": float("nan"), "lr": lr}
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            ev = evaluate(model, task, "val", config.loss)
            row["val_loss"] = ev["loss"]
            row["metric"] = ev[config.metric]
            # no validation graphs: select on training loss instead
            score = ev["loss"] if math.isfinite(ev["loss"]) else row["train_loss"]
            if score < best[0]:
                best = (score, epoch, dict(params))
                stale = 0
            else:
                stale += 1
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if config.patience is not None and stale > config.patience:
            break
    final = {f"{split}_{k}": v for split in ("train", "val", "test")
             for k, v in evaluate(DBGNN(model.config, best[2]), task, split, config.loss).items()}
    return TrainReport(history, best[1], best[0], best[2], final)
