"""Static road-network graph and its row-normalized adjacency."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class GraphValidationError(ValueError):
    pass


class GraphParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class StaticGraph:
    n_nodes: int
    adjacency: np.ndarray
    normalized: np.ndarray
    costs: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_adjacency(cls, adjacency, costs=None):
        a = np.asarray(adjacency, dtype=np.float64)
        return cls(a.shape[0], a, normalize_adjacency(a), dict(costs or {}))


def normalize_adjacency(A):
    """Return D^-1 A with D the out-degree diagonal. Isolated nodes keep a zero row."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphValidationError(f"adjacency must be square, got shape {A.shape}")
    bad = np.argwhere((A != 0) & (A != 1))
    if bad.size:
        raise GraphValidationError(f"adjacency not binary at {[tuple(map(int, b)) for b in bad[:10]]}")
    asym = np.argwhere(A != A.T)
    if asym.size:
        raise GraphValidationError(f"adjacency not symmetric at {[tuple(map(int, b)) for b in asym[:10]]}")
    diag = np.flatnonzero(np.diag(A))
    if diag.size:
        raise GraphValidationError(f"adjacency has self-loops at nodes {diag[:10].tolist()}")
    deg = A.sum(axis=1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


def load_graph(path, n_nodes):
    """Read a ``from,to[,cost]`` edge list (one header line) into an undirected graph."""
    A = np.zeros((n_nodes, n_nodes))
    costs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (2, 3):
                raise GraphParseError(path, line, f"expected 2 or 3 columns, got {len(row)}")
            try:
                i, j = int(float(row[0])), int(float(row[1]))
                cost = float(row[2]) if len(row) == 3 and row[2].strip() else None
            except ValueError:
                raise GraphParseError(path, line, f"malformed record {row!r}") from None
            for v in (i, j):
                if not 0 <= v < n_nodes:
                    raise GraphParseError(path, line, f"node id {v} outside [0, {n_nodes})")
            if i == j:
                continue
            A[i, j] = A[j, i] = 1.0
            if cost is not None:
                costs[(min(i, j), max(i, j))] = cost
    return StaticGraph.from_adjacency(A, costs)


def path_graph(n_nodes):
    A = np.zeros((n_nodes, n_nodes))
    idx = np.arange(n_nodes - 1)
    A[idx, idx + 1] = A[idx + 1, idx] = 1.0
    return StaticGraph.from_adjacency(A)


def ring_graph(n_nodes):
    A = path_graph(n_nodes).adjacency.copy()
    if n_nodes > 2:
        A[0, -1] = A[-1, 0] = 1.0
    return StaticGraph.from_adjacency(A)


def write_edge_list(graph, path):
    rows = np.argwhere(np.triu(graph.adjacency) > 0)
    with open(path, "w", newline="") as fh:
        fh.write("from,to,cost\n")
        for i, j in rows:
            cost = graph.costs.get((int(i), int(j)), 1.0)
            fh.write(f"{i},{j},{cost!r}\n")
