"""Graph topology, deterministic generators and incidence/Laplacian matrices.

Edges are stored once in canonical orientation ``(i, j)`` with ``i < j``.
The directed-edge index holds both orientations: canonical edge ``k`` owns
directed ids ``2k`` (``i -> j``) and ``2k + 1`` (``j -> i``), so the reverse
of directed edge ``e`` is ``e ^ 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Invalid graph construction or size."""


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    undirected_edges: tuple[tuple[int, int], ...]
    grid_shape: tuple[int, int] | None = field(default=None, compare=False)
    directed_edges: tuple[tuple[int, int], ...] = field(init=False, repr=False)
    neighbor_index: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise GraphError(f"num_nodes must be >= 1, got {self.num_nodes}")
        seen = set()
        canon = []
        for i, j in self.undirected_edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise GraphError(f"edge ({i}, {j}) out of range for {self.num_nodes} nodes")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        directed = []
        for i, j in canon:
            directed.append((i, j))
            directed.append((j, i))
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for eid, (i, _) in enumerate(directed):
            nbrs[i].append(eid)
        object.__setattr__(self, "undirected_edges", tuple(canon))
        object.__setattr__(self, "directed_edges", tuple(directed))
        object.__setattr__(self, "neighbor_index", tuple(tuple(n) for n in nbrs))

    @property
    def num_edges(self) -> int:
        return len(self.undirected_edges)

    @property
    def num_directed(self) -> int:
        return len(self.directed_edges)

    @cached_property
    def src(self) -> np.ndarray:
        return np.array([i for i, _ in self.directed_edges], dtype=np.int64)

    @cached_property
    def dst(self) -> np.ndarray:
        return np.array([j for _, j in self.directed_edges], dtype=np.int64)

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Canonical undirected edges as an ``(num_edges, 2)`` int array."""
        return np.array(self.undirected_edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbor_index], dtype=np.int64)

    @cached_property
    def gather_matrix(self) -> sp.csr_matrix:
        """Sparse (directed edges x nodes) map ``x -> x[src] - x[dst]``."""
        m = self.num_directed
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([self.src, self.dst])
        vals = np.concatenate([np.ones(m), -np.ones(m)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.num_nodes))

    @cached_property
    def scatter_matrix(self) -> sp.csr_matrix:
        """Sparse (nodes x directed edges) map summing each node's outgoing edge rows."""
        m = self.num_directed
        return sp.csr_matrix(
            (np.ones(m), (self.src, np.arange(m))), shape=(self.num_nodes, m)
        )

    def relabel(self, perm) -> Graph:
        """Graph with node ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(self.num_nodes)):
            raise GraphError("perm must be a permutation of the node ids")
        return Graph(self.num_nodes, tuple((int(perm[i]), int(perm[j])) for i, j in self.undirected_edges))

    def distances_from(self, source: int) -> np.ndarray:
        """Hop distances by BFS; unreachable nodes get -1."""
        dist = np.full(self.num_nodes, -1, dtype=np.int64)
        dist[source] = 0
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for eid in self.neighbor_index[u]:
                    v = self.directed_edges[eid][1]
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.distances_from(0) >= 0))


def make_path(n: int) -> Graph:
    if n < 2:
        raise GraphError(f"path needs n >= 2, got {n}")
    return Graph(n, tuple((k, k + 1) for k in range(n - 1)))


def make_grid(rows: int, cols: int) -> Graph:
    """Rectangular 4-neighbour lattice, node id ``r * cols + c``."""
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    if rows * cols < 2:
        raise GraphError("grid needs at least two nodes")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph(rows * cols, tuple(edges), grid_shape=(rows, cols))


def make_ladder(rungs: int) -> Graph:
    if rungs < 2:
        raise GraphError(f"ladder needs rungs >= 2, got {rungs}")
    return make_grid(2, rungs)


def make_random_connected(n: int, extra_edge_prob: float, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus independent extra edges."""
    if n < 2:
        raise GraphError(f"random graph needs n >= 2, got {n}")
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        child = order[k]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return Graph(n, tuple(sorted((int(i), int(j)) for i, j in edges)))


def disjoint_union(graphs) -> tuple[Graph, np.ndarray]:
    """Block-diagonal union and the per-node graph index."""
    edges = []
    index = []
    offset = 0
    for k, g in enumerate(graphs):
        edges.extend((i + offset, j + offset) for i, j in g.undirected_edges)
        index.append(np.full(g.num_nodes, k, dtype=np.int64))
        offset += g.num_nodes
    return Graph(offset, tuple(edges)), np.concatenate(index)


def incidence(g: Graph) -> sp.csc_matrix:
    """Node x undirected-edge incidence: +1 at the smaller endpoint, -1 at the larger."""
    m = g.num_edges
    i = np.array([e[0] for e in g.undirected_edges], dtype=np.int64)
    j = np.array([e[1] for e in g.undirected_edges], dtype=np.int64)
    rows = np.concatenate([i, j])
    cols = np.concatenate([np.arange(m), np.arange(m)])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csc_matrix((vals, (rows, cols)), shape=(g.num_nodes, m))


def adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.num_nodes, g.num_nodes))
    for i, j in g.undirected_edges:
        a[i, j] = a[j, i] = 1.0
    return a


def laplacian(g: Graph) -> np.ndarray:
    # built as D - A, independently of the incidence matrix
    a = adjacency(g)
    return np.diag(a.sum(axis=1)) - a


def one_down_laplacian(g: Graph) -> np.ndarray:
    b = incidence(g)
    return (b.T @ b).toarray()


def parse_graph(text: str) -> Graph:
    """Parse ``nodes <N>`` followed by ``edge <i> <j>`` lines."""
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "nodes" and len(parts) == 2 and n is None:
            n = int(parts[1])
        elif parts[0] == "edge" and len(parts) == 3 and n is not None:
            edges.append((int(parts[1]), int(parts[2])))
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    if n is None:
        raise GraphError("missing 'nodes <N>' header")
    return Graph(n, tuple(edges))


def format_graph(g: Graph) -> str:
    lines = [f"nodes {g.num_nodes}"]
    lines += [f"edge {i} {j}" for i, j in g.undirected_edges]
    return "\n".join(lines) + "\n"


def load_graph(path) -> Graph:
    return parse_graph(Path(path).read_text())
