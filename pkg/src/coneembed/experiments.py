"""Desk-scale experiment recipes shared by the CLI, tests and benchmarks.

The recipes fix the hyperparameters that the method description leaves
open. They are calibration choices, chosen once on small graphs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .evaluation import edge_direction_accuracy, reconstruction_metrics
from .geometry import EuclideanSpace, PoincareBall
from .graphs import gen_barabasi_albert, gen_complete_kary_tree, gen_concatenated_kary_tree
from .training import Embedding, TrainConfig, lift_train, train

__all__ = [
    "GRAPH_FAMILIES",
    "MODELS",
    "EUCLIDEAN_PRETRAIN",
    "POINCARE_TRAIN",
    "LIFT_DIRECTION",
    "LIFT_RECONSTRUCTION",
    "make_graph",
    "pretrain_euclidean",
    "lift_relative",
    "best_reconstruction_lift",
    "edge_direction_run",
    "TableRow",
    "edge_direction_table",
    "write_table_csv",
]

# Table-1 graph families; BA is the only randomised one.
GRAPH_FAMILIES = {
    "ba100": lambda seed: gen_barabasi_albert(100, 2, seed),
    "kary3": lambda seed: gen_complete_kary_tree(3, 4),
    "kary5": lambda seed: gen_complete_kary_tree(5, 4),
    "concat3": lambda seed: gen_concatenated_kary_tree(3, 3),
    "concat5": lambda seed: gen_concatenated_kary_tree(5, 3),
}

MODELS = ("cone", "euclidean", "poincare")

# Large-step full-batch-ish schedule; converges the 121-node tree in ~1 s.
EUCLIDEAN_PRETRAIN = TrainConfig(lr=3.0, epochs=1000, batch_size=128, lr_decay=True)
POINCARE_TRAIN = TrainConfig(lr=0.3, epochs=300)
# beta for lifts is given relative to the largest pretrained base distance.
LIFT_DIRECTION = TrainConfig(lr=0.1, epochs=100)
LIFT_RECONSTRUCTION = TrainConfig(lr=0.05, epochs=200)
DIRECTION_BETA_FACTOR = 0.1
RECONSTRUCTION_BETA_FACTORS = (0.5, 0.75, 1.0, 1.5, 2.0)


def make_graph(kind: str, seed: int = 0):
    try:
        return GRAPH_FAMILIES[kind](seed)
    except KeyError:
        raise ValueError(f"unknown graph family {kind!r}; choose from {sorted(GRAPH_FAMILIES)}") from None


def pretrain_euclidean(g, dim: int = 10, seed: int = 0, config: TrainConfig | None = None) -> Embedding:
    cfg = replace(config or EUCLIDEAN_PRETRAIN, seed=seed)
    return train(g, EuclideanSpace(dim), cfg)


def lift_relative(g, base: Embedding, beta_factor: float, seed: int = 0,
                  config: TrainConfig | None = None) -> Embedding:
    """Lift ``base`` with ``beta = beta_factor * max pairwise base distance``."""
    dmax = float(base.distance_matrix().max())
    cfg = replace(config or LIFT_DIRECTION, seed=seed, beta=beta_factor * dmax)
    return lift_train(g, base, cfg)


def best_reconstruction_lift(g, base: Embedding, seed: int = 0,
                             factors=RECONSTRUCTION_BETA_FACTORS):
    """Grid-search relative beta by reconstruction MAP.

    Returns ``(embedding, (mean_rank, map), factor)`` for the best factor.
    """
    best = None
    for f in factors:
        emb = lift_relative(g, base, f, seed, LIFT_RECONSTRUCTION)
        mr, mp = reconstruction_metrics(emb, g)
        if best is None or mp > best[1][1]:
            best = (emb, (mr, mp), f)
    return best


def edge_direction_run(kind: str, model: str, seed: int, dim: int = 10) -> float:
    """Edge-direction accuracy of one (graph family, model, seed) cell."""
    g = make_graph(kind, seed)
    if model == "poincare":
        emb = train(g, PoincareBall(dim), replace(POINCARE_TRAIN, seed=seed))
        return edge_direction_accuracy(emb, g)
    base = pretrain_euclidean(g, dim, seed)
    if model == "euclidean":
        return edge_direction_accuracy(base, g)
    if model == "cone":
        return edge_direction_accuracy(lift_relative(g, base, DIRECTION_BETA_FACTOR, seed), g)
    raise ValueError(f"unknown model {model!r}")


@dataclass
class TableRow:
    model: str
    graph: str
    values: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def se(self) -> float:
        n = len(self.values)
        return float(np.std(self.values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def edge_direction_table(graphs=tuple(GRAPH_FAMILIES), models=MODELS, seeds=range(5)):
    return [TableRow(m, k, [edge_direction_run(k, m, s) for s in seeds])
            for m in models for k in graphs]


def write_table_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "graph", "n_seeds", "mean", "se"])
        for r in rows:
            w.writerow([r.model, r.graph, len(r.values), repr(r.mean), repr(r.se)])
