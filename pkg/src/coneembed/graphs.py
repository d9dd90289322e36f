"""Graphs with optional gold edge directions, synthetic generators and I/O."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

__all__ = [
    "Graph",
    "SplitGraph",
    "gen_barabasi_albert",
    "gen_complete_kary_tree",
    "gen_concatenated_kary_tree",
    "load_edge_list",
    "save_edge_list",
    "split_link_prediction",
]


def _freeze(a):
    a = np.array(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    ``edges`` is an ``(E, 2)`` int array kept in insertion order. When the
    graph carries gold directions, a labelled edge is stored as
    ``(hypo, hype)`` (lower node first) and ``directed`` flags which rows carry
    a label.
    """

    num_nodes: int
    edges: np.ndarray
    directed: np.ndarray | None = None
    node_names: list[str] | None = None
    depths: np.ndarray | None = None
    _adj: list = field(default=None, init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise DataError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise DataError("self-loops are not allowed")
            keys = np.sort(edges, axis=1)
            if len(np.unique(keys, axis=0)) != len(keys):
                raise DataError("duplicate edges")
        object.__setattr__(self, "edges", _freeze(edges))
        if self.directed is not None:
            directed = np.array(self.directed, dtype=bool)
            if directed.shape != (len(edges),):
                raise DataError("direction flags must align with edges")
            directed.setflags(write=False)
            object.__setattr__(self, "directed", directed)
        if self.node_names is not None and len(self.node_names) != self.num_nodes:
            raise DataError("node_names length must equal num_nodes")
        if self.depths is not None:
            object.__setattr__(self, "depths", _freeze(self.depths))
        adj = [set() for _ in range(self.num_nodes)]
        for u, v in edges:
            adj[u].add(int(v))
            adj[v].add(int(u))
        object.__setattr__(self, "_adj", adj)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u) -> set:
        return self._adj[u]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def has_edge(self, u, v) -> bool:
        return v in self._adj[u]

    @property
    def has_labels(self) -> bool:
        return self.directed is not None and bool(self.directed.any())

    def labeled_edges(self) -> np.ndarray:
        """``(hypo, hype)`` rows of every labelled edge."""
        if self.directed is None:
            return np.empty((0, 2), dtype=np.int64)
        return self.edges[self.directed]

    def roots(self) -> np.ndarray:
        """Nodes that never appear as the lower end of a labelled edge."""
        if not self.has_labels:
            return np.empty(0, dtype=np.int64)
        lower = np.zeros(self.num_nodes, dtype=bool)
        lower[self.labeled_edges()[:, 0]] = True
        return np.flatnonzero(~lower)

    def edge_keys(self) -> np.ndarray:
        """Sorted int64 keys ``u * n + v`` for both orientations of every edge."""
        n = self.num_nodes
        e = self.edges
        keys = np.concatenate([e[:, 0] * n + e[:, 1], e[:, 1] * n + e[:, 0]])
        keys.sort()
        return keys

    def name(self, u) -> str:
        return self.node_names[u] if self.node_names is not None else str(u)

    def index(self) -> dict:
        return {self.name(i): i for i in range(self.num_nodes)}

    def with_edges(self, rows) -> "Graph":
        """Subgraph on the same node set keeping only edge rows ``rows``."""
        rows = np.asarray(rows, dtype=np.int64)
        return Graph(
            self.num_nodes,
            self.edges[rows],
            None if self.directed is None else self.directed[rows],
            self.node_names,
            self.depths,
        )


@dataclass(frozen=True)
class SplitGraph:
    """Disjoint train/test partition of a graph's edges (row indices)."""

    graph: Graph
    train_rows: np.ndarray
    test_rows: np.ndarray

    @property
    def train_edges(self) -> np.ndarray:
        return self.graph.edges[self.train_rows]

    @property
    def test_edges(self) -> np.ndarray:
        return self.graph.edges[self.test_rows]

    def train_graph(self) -> Graph:
        return self.graph.with_edges(self.train_rows)


def gen_barabasi_albert(n: int, m: int, seed=None) -> Graph:
    """Barabasi-Albert preferential attachment graph.

    Nodes ``0..m-1`` start isolated, node ``m`` links to all of them, and every
    later node links to ``m`` distinct existing nodes chosen with probability
    proportional to degree. Each edge is labelled ``(new, existing)``.
    """
    if m < 1 or n <= m:
        raise ValueError(f"need n > m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    edges = [(m, t) for t in range(m)]
    # each node appears here once per incident edge
    endpoints = [t for e in edges for t in e]
    for new in range(m + 1, n):
        targets: list[int] = []
        while len(targets) < m:
            t = endpoints[rng.integers(len(endpoints))]
            if t not in targets:
                targets.append(t)
        for t in targets:
            edges.append((new, t))
            endpoints.extend((new, t))
    return Graph(n, edges, np.ones(len(edges), dtype=bool), [str(i) for i in range(n)])


def _bfs_tree(child_count) -> tuple[list, list]:
    """Breadth-first indexed tree; ``child_count(node, depth)`` gives fan-out."""
    edges, depths = [], [0]
    frontier, next_id, depth = [0], 1, 0
    while frontier:
        nxt = []
        for parent in frontier:
            for _ in range(child_count(parent, depth)):
                edges.append((next_id, parent))
                depths.append(depth + 1)
                nxt.append(next_id)
                next_id += 1
        frontier, depth = nxt, depth + 1
    return edges, depths


def gen_complete_kary_tree(k: int, depth: int) -> Graph:
    """Complete k-ary tree, root 0, edges labelled ``(child, parent)``."""
    if k < 2 or depth < 1:
        raise ValueError("need k >= 2 and depth >= 1")
    edges, depths = _bfs_tree(lambda _node, d: k if d < depth else 0)
    n = len(depths)
    return Graph(n, edges, np.ones(len(edges), dtype=bool), [str(i) for i in range(n)], depths)


def gen_concatenated_kary_tree(k: int, depth: int) -> Graph:
    """Two complete k-ary trees of the given depth joined under a new root."""
    if k < 2 or depth < 1:
        raise ValueError("need k >= 2 and depth >= 1")

    def fan_out(node, d):
        if d == 0:
            return 2
        return k if d <= depth else 0

    edges, depths = _bfs_tree(fan_out)
    n = len(depths)
    return Graph(n, edges, np.ones(len(edges), dtype=bool), [str(i) for i in range(n)], depths)


def load_edge_list(path) -> Graph:
    """Read a ``hypo<TAB>hype`` edge list.

    Lines starting with ``#`` and blank lines are skipped. A JSON sidecar
    ``<path>.json`` written by :func:`save_edge_list`, if present, fixes the
    node order, isolated nodes and depths.
    """
    path = Path(path)
    meta = None
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    names: list[str] = list(meta["names"]) if meta else []
    index = {nm: i for i, nm in enumerate(names)}
    seen: set = set()
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected 'hypo<TAB>hype', got {line!r}")
            if parts[0] == parts[1]:
                raise DataError(f"{path}:{lineno}: self-loop on {parts[0]!r}")
            ids = []
            for nm in parts:
                if nm not in index:
                    if meta:
                        raise DataError(f"{path}:{lineno}: node {nm!r} missing from sidecar")
                    index[nm] = len(names)
                    names.append(nm)
                ids.append(index[nm])
            key = (min(ids), max(ids))
            if key in seen:
                warnings.warn(f"{path}:{lineno}: duplicate edge {parts[0]!r}-{parts[1]!r} ignored")
                continue
            seen.add(key)
            edges.append(ids)
    depths = meta.get("depths") if meta else None
    n = len(names)
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.ones(len(edges), dtype=bool), names, depths)


def save_edge_list(graph: Graph, path) -> None:
    """Write the edge list plus a ``<path>.json`` metadata sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in graph.edges:
            fh.write(f"{graph.name(u)}\t{graph.name(v)}\n")
    meta = {
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "names": [graph.name(i) for i in range(graph.num_nodes)],
        "depths": None if graph.depths is None else graph.depths.tolist(),
    }
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=1), encoding="utf-8")


def split_link_prediction(g: Graph, test_fraction: float, seed=None) -> SplitGraph:
    """Hold out edges for link prediction.

    Only edges whose endpoints are both non-leaf (degree >= 2) and non-root
    are eligible. Eligible edges are visited in random order and moved to the
    test set while both endpoints keep at least one training edge, until
    ``round(test_fraction * |E|)`` edges are held out.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    deg = g.degrees()
    is_root = np.zeros(g.num_nodes, dtype=bool)
    is_root[g.roots()] = True
    u, v = g.edges[:, 0], g.edges[:, 1]
    eligible = np.flatnonzero((deg[u] >= 2) & (deg[v] >= 2) & ~is_root[u] & ~is_root[v])
    if len(eligible) == 0:
        raise DataError("no edge is eligible for the test split")
    target = int(round(test_fraction * g.num_edges))
    rng = np.random.default_rng(seed)
    train_deg = deg.copy()
    test = []
    for row in rng.permutation(eligible):
        if len(test) >= target:
            break
        a, b = g.edges[row]
        if train_deg[a] > 1 and train_deg[b] > 1:
            train_deg[a] -= 1
            train_deg[b] -= 1
            test.append(row)
    test_rows = np.sort(np.array(test, dtype=np.int64))
    train_rows = np.setdiff1d(np.arange(g.num_edges), test_rows)
    return SplitGraph(g, train_rows, test_rows)
