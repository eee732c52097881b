"""Multi-level neighborhood weight matrices.

A location's level-``l`` neighbors are the locations at exactly ``l`` hops in
the adjacency graph. Level 0 is the location itself, so ``W^(0) = I``. Each
level matrix is the binary indicator of that relation, row-normalized; a
location with no level-``l`` neighbor gets an all-zero row.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AdjacencyGraph",
    "NeighborhoodWeights",
    "graph_distances",
    "build_weights",
    "grid_graph",
    "read_adjacency",
    "write_adjacency",
]


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected graph over named locations.

    ``locations`` fixes the row/column order of every matrix built from the
    graph. ``edges`` holds unordered pairs stored as sorted 2-tuples.
    """

    locations: tuple[str, ...]
    edges: frozenset[tuple[str, str]]

    def __post_init__(self):
        if len(set(self.locations)) != len(self.locations):
            raise ValueError("location ids must be unique")
        known = set(self.locations)
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on {a!r}")
            if a not in known or b not in known:
                raise ValueError(f"edge ({a!r}, {b!r}) references an undeclared location")
            if a > b:
                raise ValueError("edges must be stored as sorted pairs; use from_edges")

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[str, str]],
        locations: Sequence[str] | None = None,
    ) -> "AdjacencyGraph":
        """Build a graph from (possibly unordered, duplicated) edge pairs.

        When ``locations`` is omitted the location order is the order of
        first appearance among the edge endpoints.
        """
        pairs = set()
        order = list(locations) if locations is not None else []
        seen = set(order)
        for a, b in edges:
            a, b = str(a), str(b)
            if locations is None:
                for x in (a, b):
                    if x not in seen:
                        seen.add(x)
                        order.append(x)
            pairs.add((a, b) if a <= b else (b, a))
        return cls(tuple(str(x) for x in order), frozenset(pairs))

    @property
    def k(self) -> int:
        return len(self.locations)

    def index(self) -> dict[str, int]:
        return {loc: i for i, loc in enumerate(self.locations)}

    def neighbors(self) -> list[list[int]]:
        idx = self.index()
        adj: list[list[int]] = [[] for _ in self.locations]
        for a, b in sorted(self.edges):
            adj[idx[a]].append(idx[b])
            adj[idx[b]].append(idx[a])
        for row in adj:
            row.sort()
        return adj

    def fingerprint(self) -> str:
        """SHA-256 over the location order and the sorted edge list."""
        h = hashlib.sha256()
        h.update("\n".join(self.locations).encode())
        h.update(b"\x00")
        h.update("\n".join(f"{a},{b}" for a, b in sorted(self.edges)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class NeighborhoodWeights:
    """Stack of row-normalized level matrices ``W^(0) ... W^(eta-1)``.

    ``mats`` has shape ``(eta, k, k)`` and is read-only.
    """

    mats: np.ndarray
    locations: tuple[str, ...]

    def __post_init__(self):
        mats = np.array(self.mats, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError("mats must have shape (eta, k, k)")
        if mats.shape[1] != len(self.locations):
            raise ValueError("mats and locations disagree on k")
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @property
    def eta(self) -> int:
        return self.mats.shape[0]

    @property
    def k(self) -> int:
        return self.mats.shape[1]

    def truncate(self, eta: int) -> "NeighborhoodWeights":
        if not 1 <= eta <= self.eta:
            raise ValueError(f"cannot truncate {self.eta} levels to {eta}")
        return NeighborhoodWeights(self.mats[:eta], self.locations)


def graph_distances(graph: AdjacencyGraph, max_level: int) -> np.ndarray:
    """All-pairs hop distances by breadth-first search.

    Distances larger than ``max_level`` (including disconnected pairs) are
    reported as ``max_level + 1``.
    """
    if max_level < 0:
        raise ValueError("max_level must be nonnegative")
    k = graph.k
    far = max_level + 1
    dist = np.full((k, k), far, dtype=np.int64)
    adj = graph.neighbors()
    for src in range(k):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            d = dist[src, u]
            if d >= max_level:
                continue
            for v in adj[u]:
                if dist[src, v] == far:
                    dist[src, v] = d + 1
                    queue.append(v)
    return dist


def build_weights(
    graph: AdjacencyGraph,
    eta: int,
    keep: Sequence[str] | None = None,
) -> NeighborhoodWeights:
    """Row-normalized level indicator matrices for levels ``0 .. eta-1``.

    Parameters
    ----------
    graph : AdjacencyGraph
        Location adjacency.
    eta : int
        Number of levels, level 0 included.
    keep : sequence of str, optional
        Restrict the matrices to these locations (in this order). Hop
        distances are still measured on the full graph, so two retained
        locations separated by a dropped one remain level-2 neighbors.
    """
    if eta < 1:
        raise ValueError("eta must be >= 1")
    dist = graph_distances(graph, max(eta - 1, 0))
    locations = graph.locations
    if keep is not None:
        idx = graph.index()
        missing = [loc for loc in keep if loc not in idx]
        if missing:
            raise ValueError(f"locations not in graph: {missing}")
        sel = np.array([idx[loc] for loc in keep], dtype=np.int64)
        dist = dist[np.ix_(sel, sel)]
        locations = tuple(keep)
    k = len(locations)
    mats = np.zeros((eta, k, k))
    for level in range(eta):
        ind = (dist == level).astype(float)
        counts = ind.sum(axis=1, keepdims=True)
        mats[level] = np.divide(ind, counts, out=np.zeros_like(ind), where=counts > 0)
    return NeighborhoodWeights(mats, tuple(locations))


def grid_graph(rows: int, cols: int, prefix: str = "L") -> AdjacencyGraph:
    """Rook-adjacency lattice, handy as a synthetic zone map."""
    width = len(str(rows * cols - 1))
    name = [[f"{prefix}{r * cols + c:0{width}d}" for c in range(cols)] for r in range(rows)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((name[r][c], name[r][c + 1]))
            if r + 1 < rows:
                edges.append((name[r][c], name[r + 1][c]))
    return AdjacencyGraph.from_edges(edges, [n for row in name for n in row])


def read_adjacency(path: str | Path) -> AdjacencyGraph:
    """Parse an adjacency file.

    One ``locA,locB`` edge per line; ``#`` starts a comment line. An optional
    ``locations: a,b,c`` line declares locations (isolated ones included);
    declared locations come first in the resulting order, then any further
    edge endpoints in order of first appearance.
    """
    declared: list[str] = []
    edges: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower().startswith("locations:"):
                declared.extend(x.strip() for x in line.split(":", 1)[1].split(",") if x.strip())
                continue
            parts = [x.strip() for x in line.split(",")]
            if len(parts) != 2 or not all(parts):
                raise ValueError(f"{path}:{lineno}: expected 'locA,locB', got {line!r}")
            edges.append((parts[0], parts[1]))
    order = list(dict.fromkeys(declared))
    seen = set(order)
    for a, b in edges:
        for x in (a, b):
            if x not in seen:
                seen.add(x)
                order.append(x)
    return AdjacencyGraph.from_edges(edges, order)


def write_adjacency(graph: AdjacencyGraph, path: str | Path) -> None:
    lines = ["locations: " + ",".join(graph.locations)]
    lines += [f"{a},{b}" for a, b in sorted(graph.edges)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
