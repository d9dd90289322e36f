"""Hierarchy scores, edge-direction accuracy and ranking metrics."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import DataError
from .geometry import MetricCone, PoincareBall
from .graphs import Graph, SplitGraph

logger = logging.getLogger(__name__)

__all__ = [
    "ScoreConfig",
    "EvalReport",
    "hierarchy_levels",
    "hierarchy_score",
    "hierarchy_scores",
    "edge_direction_accuracy",
    "reconstruction_metrics",
    "link_prediction_metrics",
    "rank_correlation",
    "cpu_timer",
    "write_level_csv",
]


@dataclass(frozen=True)
class ScoreConfig:
    alpha: float = 10.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass
class EvalReport:
    mean_rank: float | None = None
    map: float | None = None
    edge_direction_accuracy: float | None = None
    correlation: float | None = None
    wall_time_seconds: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def hierarchy_levels(emb) -> np.ndarray:
    """Per-node hierarchy coordinate; smaller means higher in the hierarchy.

    Cone: the height. Poincare: the norm. Euclidean: distance from the mean
    of all embedded points.
    """
    if isinstance(emb.space, MetricCone):
        return emb.heights.copy()
    X = emb.coords
    if isinstance(emb.space, PoincareBall):
        return np.linalg.norm(X, axis=1)
    return np.linalg.norm(X - X.mean(axis=0), axis=1)


def _base_pair_distance(emb, us, vs):
    if isinstance(emb.space, MetricCone):
        return emb.space.base.distance(emb.base[us], emb.base[vs])
    return emb.space.distance(emb.coords[us], emb.coords[vs])


def hierarchy_scores(emb, us, vs, config: ScoreConfig = ScoreConfig()) -> np.ndarray:
    """``-alpha * (level(v) - level(u)) * d(u, v)`` for each pair.

    Positive when ``v`` sits higher than ``u``. For cones ``d`` is the base
    space distance.
    """
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if np.any(us == vs):
        raise ValueError("hierarchy score needs two distinct nodes")
    level = hierarchy_levels(emb)
    d = _base_pair_distance(emb, us, vs)
    return -config.alpha * (level[vs] - level[us]) * d


def hierarchy_score(emb, u, v, config: ScoreConfig = ScoreConfig()) -> float:
    return float(hierarchy_scores(emb, [u], [v], config)[0])


def edge_direction_accuracy(emb, g: Graph, config: ScoreConfig = ScoreConfig()) -> float:
    """Fraction of labelled ``(hypo, hype)`` edges with a strictly positive score."""
    labeled = g.labeled_edges()
    if len(labeled) == 0:
        raise DataError("graph has no direction labels")
    scores = hierarchy_scores(emb, labeled[:, 0], labeled[:, 1], config)
    return float(np.mean(scores > 0))


def _rank_row(dist_row, u, positives, excluded):
    """Ranks and average precision of ``positives`` for anchor ``u``.

    Candidates are all nodes except ``u`` and ``excluded``, ordered by
    distance with ties broken by node index. A positive's rank is one plus
    the number of non-positive candidates ahead of it.
    """
    n = len(dist_row)
    keep = np.ones(n, dtype=bool)
    keep[u] = False
    keep[list(excluded)] = False
    cand = np.flatnonzero(keep)
    order = cand[np.lexsort((cand, dist_row[cand]))]
    is_pos = np.zeros(n, dtype=bool)
    is_pos[list(positives)] = True
    hits = is_pos[order]
    position = np.flatnonzero(hits) + 1
    k = np.arange(1, len(position) + 1)
    ranks = position - k + 1
    ap = float(np.mean(k / position))
    return ranks, ap


def reconstruction_metrics(emb, g: Graph, dist=None) -> tuple[float, float]:
    """Mean rank and MAP of every node's neighbours among all other nodes."""
    if g.num_nodes < 2:
        raise DataError("need at least two nodes")
    D = emb.distance_matrix() if dist is None else dist
    ranks, aps = [], []
    for u in range(g.num_nodes):
        nb = g.neighbors(u)
        if not nb:
            continue
        r, ap = _rank_row(D[u], u, nb, ())
        ranks.append(r)
        aps.append(ap)
    return float(np.mean(np.concatenate(ranks))), float(np.mean(aps))


def link_prediction_metrics(emb, split: SplitGraph, dist=None) -> tuple[float, float]:
    """Mean rank and MAP of held-out edges; training neighbours are not candidates."""
    test = split.test_edges
    if len(test) == 0:
        raise DataError("empty test set")
    train_g = split.train_graph()
    test_nb: dict = {}
    for a, b in test:
        test_nb.setdefault(int(a), set()).add(int(b))
        test_nb.setdefault(int(b), set()).add(int(a))
    D = emb.distance_matrix() if dist is None else dist
    ranks, aps = [], []
    for u in sorted(test_nb):
        r, ap = _rank_row(D[u], u, test_nb[u], train_g.neighbors(u))
        ranks.append(r)
        aps.append(ap)
    return float(np.mean(np.concatenate(ranks))), float(np.mean(aps))


def rank_correlation(scores: dict, gold: dict) -> float:
    """Spearman correlation over the pairs present in both mappings."""
    shared = [p for p in gold if p in scores]
    ignored = len(set(scores) ^ set(gold))
    if len(shared) < 3:
        raise DataError(f"need at least 3 shared pairs for a correlation, got {len(shared)}")
    if ignored:
        logger.info("rank correlation: %d shared pairs, %d ignored", len(shared), ignored)
    rho = stats.spearmanr([scores[p] for p in shared], [gold[p] for p in shared]).statistic
    return float(rho)


@contextlib.contextmanager
def cpu_timer():
    """Yield a one-item list that receives the block's process CPU seconds."""
    out = [0.0]
    t0 = time.process_time()
    try:
        yield out
    finally:
        out[0] = time.process_time() - t0


def write_level_csv(path, emb, g: Graph) -> None:
    """Plot data: one row per node with degree, depth and hierarchy level."""
    level = hierarchy_levels(emb)
    deg = g.degrees()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "name", "degree", "depth", "level"])
        for i in range(g.num_nodes):
            depth = "" if g.depths is None else int(g.depths[i])
            w.writerow([i, g.name(i), int(deg[i]), depth, repr(float(level[i]))])
