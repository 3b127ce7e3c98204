"""Dirichlet energy, regression metrics and activation-front statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, laplacian

NOT_REACHED = -1


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def dirichlet_trace(g: Graph, x) -> float:
    """``tr(x^T L x) / tr(x^T x)``; 0 for an all-zero embedding."""
    x = _as_2d(x)
    denom = float(np.sum(x * x))
    if denom == 0.0:
        return 0.0
    return float(np.trace(x.T @ laplacian(g) @ x)) / denom


def dirichlet_edges(g: Graph, x) -> float:
    """Squared row differences summed once per undirected edge, over ``sum ||x_i||^2``."""
    x = _as_2d(x)
    denom = float(np.sum(x * x))
    if denom == 0.0 or g.num_edges == 0:
        return 0.0
    e = g.edge_array
    diff = x[e[:, 0]] - x[e[:, 1]]
    return float(np.sum(diff * diff)) / denom


@dataclass(frozen=True)
class DirichletSeries:
    values: np.ndarray
    degenerate: np.ndarray  # True where the embedding was identically zero


def dirichlet_series(g: Graph, xs) -> DirichletSeries:
    vals, degen = [], []
    for x in xs:
        x = _as_2d(x)
        degen.append(not np.any(x))
        vals.append(dirichlet_edges(g, x))
    return DirichletSeries(np.array(vals), np.array(degen, dtype=bool))


def r_squared(pred, target) -> float:
    pred = np.ravel(np.asarray(pred, dtype=np.float64))
    target = np.ravel(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape or pred.size < 2:
        raise ValueError("r_squared needs equal-length inputs of size >= 2")
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("target has zero variance")
    return 1.0 - float(np.sum((target - pred) ** 2)) / ss_tot


def mae(pred, target) -> float:
    pred = np.ravel(np.asarray(pred, dtype=np.float64))
    target = np.ravel(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ValueError("mae needs equal-length inputs")
    if pred.size == 0:
        raise ValueError("mae of empty input")
    return float(np.mean(np.abs(pred - target)))


def front_arrival(activation, threshold_fraction: float = 0.01) -> np.ndarray:
    """First step each node's activation exceeds ``threshold_fraction * max``.

    ``activation`` is a ``(steps, nodes)`` array or a Trajectory. Nodes that
    never cross the threshold get ``NOT_REACHED``.
    """
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError(f"threshold_fraction must be in (0, 1), got {threshold_fraction}")
    act = np.asarray(getattr(activation, "activation", activation), dtype=np.float64)
    peak = act.max(initial=0.0)
    out = np.full(act.shape[1], NOT_REACHED, dtype=np.int64)
    if peak <= 0.0:
        return out
    above = act > threshold_fraction * peak
    hit = above.any(axis=0)
    out[hit] = np.argmax(above[:, hit], axis=0)
    return out


def arrival_slope(arrival, distance, min_distance: int = 1) -> float:
    """Least-squares slope of log(arrival step) against log(distance).

    Only reached nodes with ``distance >= min_distance`` and a positive
    arrival step enter the fit; NaN when fewer than three remain or they
    share a single distance.
    """
    arrival = np.asarray(arrival)
    distance = np.asarray(distance)
    keep = (arrival > 0) & (distance >= max(min_distance, 1))
    if keep.sum() < 3 or np.unique(distance[keep]).size < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(distance[keep]), np.log(arrival[keep]), 1)
    return float(slope)
