"""Negative-sampling objective, Riemannian SGD and height-only lift training."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .geometry import EuclideanSpace, MetricCone, PoincareBall, parse_space
from .graphs import Graph

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "Embedding",
    "TrainLog",
    "DistanceMatrix",
    "NegativeSampler",
    "nce_loss",
    "nce_loss_and_grad",
    "sgd_step",
    "train",
    "lift_train",
    "save_checkpoint",
    "load_checkpoint",
    "load_embedding_csv",
    "load_pretrained",
]


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 300
    neg_samples: int = 10
    burn_in_epochs: int = 10
    burn_in_lr_factor: float = 0.1
    batch_size: int = 32
    seed: int = 0
    beta: float = 1.0
    eps: float = 1e-3
    freeze_base: bool = False
    lr_decay: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.neg_samples < 1:
            raise ValueError("neg_samples must be >= 1")
        if not 0 < self.burn_in_lr_factor <= 1:
            raise ValueError("burn_in_lr_factor must lie in (0, 1]")
        if self.epochs < 0 or self.burn_in_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    epoch_cpu_seconds: list = field(default_factory=list)
    preprocess_cpu_seconds: float = 0.0


@dataclass
class Embedding:
    """Per-node points of ``space``; cone points carry their height last."""

    space: object
    coords: np.ndarray
    node_names: list | None = None
    config: TrainConfig | None = None
    log: TrainLog = field(default_factory=TrainLog)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != self.space.point_dim:
            raise DataError(
                f"coords shape {self.coords.shape} does not match {self.space!r}"
            )

    @property
    def num_nodes(self) -> int:
        return len(self.coords)

    @property
    def is_cone(self) -> bool:
        return isinstance(self.space, MetricCone)

    @property
    def base(self) -> np.ndarray:
        return self.coords[:, :-1] if self.is_cone else self.coords

    @property
    def heights(self) -> np.ndarray | None:
        return self.coords[:, -1] if self.is_cone else None

    def copy(self) -> "Embedding":
        return Embedding(self.space, self.coords.copy(), self.node_names, self.config, self.log)

    def distance_matrix(self) -> np.ndarray:
        """Full pairwise distance matrix in the embedding's own space."""
        if self.is_cone:
            dz = base_distance_matrix(self.space.base, self.base)
            h = self.heights
            return self.space.distance_from_base(dz, h[:, None], h[None, :])
        return base_distance_matrix(self.space, self.coords)


def base_distance_matrix(space, X) -> np.ndarray:
    if isinstance(space, PoincareBall):
        return kernels.pairwise_poincare(X)
    if isinstance(space, EuclideanSpace):
        return kernels.pairwise_euclidean(X)
    raise TypeError(f"no base distance matrix for {space!r}")


class DistanceMatrix:
    """Cached symmetric base-space distances ``d_Z(x_i, x_j)``."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DataError("distance matrix must be square")
        self.values = values

    @classmethod
    def from_embedding(cls, emb: Embedding) -> "DistanceMatrix":
        space = emb.space.base if emb.is_cone else emb.space
        return cls(base_distance_matrix(space, emb.base))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, idx):
        return self.values[idx]


class NegativeSampler:
    """Uniform sampler over ``N^c(u)``: non-neighbours of ``u``, ``u`` included."""

    def __init__(self, graph: Graph):
        self.n = graph.num_nodes
        self.keys = graph.edge_keys()

    def _is_edge(self, u, v):
        k = u * self.n + v
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        return (self.keys[pos] == k) if len(self.keys) else np.zeros(k.shape, dtype=bool)

    def sample(self, anchors, k, rng) -> np.ndarray:
        anchors = np.asarray(anchors, dtype=np.int64)
        out = rng.integers(self.n, size=(len(anchors), k))
        bad = self._is_edge(anchors[:, None], out)
        while bad.any():
            rows, cols = np.nonzero(bad)
            out[rows, cols] = rng.integers(self.n, size=len(rows))
            bad[rows, cols] = self._is_edge(anchors[rows], out[rows, cols])
        return out


def _softmax_terms(d):
    """Per-row ``-log softmax(-d)[0]`` and its derivative w.r.t. ``d``."""
    m = np.min(d, axis=-1, keepdims=True)
    w = np.exp(m - d)
    z = np.sum(w, axis=-1, keepdims=True)
    loss = d[..., 0] - m[..., 0] + np.log(z[..., 0])
    coef = -w / z
    coef[..., 0] += 1.0
    return loss, coef


def nce_loss(emb: Embedding, edge, negatives) -> float:
    """Log-probability of ``edge = (u, v)`` against the sampled negatives.

    The softmax denominator runs over the positive term plus ``negatives``;
    the value is at most 0.
    """
    negatives = np.atleast_1d(np.asarray(negatives, dtype=np.int64))
    if negatives.size == 0:
        raise ValueError("need at least one negative sample")
    u, v = edge
    targets = np.concatenate([[v], negatives])
    d = emb.space.distance(emb.coords[u][None, :], emb.coords[targets])
    loss, _ = _softmax_terms(d[None, :])
    return -float(loss[0])


def nce_loss_and_grad(space, X, us, vs, negs):
    """Summed ``-L`` over a batch and its Euclidean gradient w.r.t. ``X``."""
    us = np.asarray(us, dtype=np.int64)
    targets = np.concatenate([np.asarray(vs, dtype=np.int64)[:, None], negs], axis=1)
    P = np.broadcast_to(X[us][:, None, :], targets.shape + (X.shape[1],))
    d, gp, gq = space.distance_grad(P, X[targets])
    loss, coef = _softmax_terms(d)
    grad = np.zeros_like(X)
    np.add.at(grad, us, np.sum(coef[..., None] * gp, axis=1))
    np.add.at(grad, targets.ravel(), (coef[..., None] * gq).reshape(-1, X.shape[1]))
    return float(np.sum(loss)), grad, targets


def sgd_step(emb: Embedding, edges, negatives, lr: float, *, freeze_base: bool = False) -> float:
    """One Riemannian SGD step on a batch, applied to ``emb`` in place.

    The Euclidean gradient is rescaled by the inverse metric, scaled by
    ``lr``, subtracted and projected back into the space. Only nodes in the
    batch move; with ``freeze_base`` only cone heights move. Returns the batch
    loss ``-L`` evaluated before the update.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(edges), -1)
    loss, grad, targets = nce_loss_and_grad(emb.space, emb.coords, edges[:, 0], edges[:, 1], negatives)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite loss or gradient in SGD step")
    if freeze_base:
        if not emb.is_cone:
            raise ValueError("freeze_base requires a cone embedding")
        grad[:, :-1] = 0.0
    touched = np.unique(np.concatenate([edges[:, 0], targets.ravel()]))
    X = emb.coords
    if freeze_base:
        h = X[touched, -1] - lr * grad[touched, -1] / emb.space.beta**2
        X[touched, -1] = np.clip(h, emb.space.eps, 1.0 - emb.space.eps)
    else:
        step = emb.space.rescale(X[touched], grad[touched])
        X[touched] = emb.space.project(X[touched] - lr * step)
    return loss


def _epoch_schedule(config: TrainConfig):
    """Yield ``(epoch, lr)``; with ``lr_decay`` the main phase decays linearly."""
    for epoch in range(config.burn_in_epochs + config.epochs):
        main = epoch - config.burn_in_epochs
        if main < 0:
            yield epoch, config.lr * config.burn_in_lr_factor
        elif config.lr_decay:
            yield epoch, config.lr * (1.0 - main / config.epochs)
        else:
            yield epoch, config.lr


def _check_nonempty(g: Graph):
    if g.num_nodes == 0 or g.num_edges == 0:
        raise DataError("graph has no edges to train on")


def train(g: Graph, space, config: TrainConfig) -> Embedding:
    """Train an embedding of ``g`` in ``space`` by Riemannian SGD.

    Runs ``burn_in_epochs`` at the reduced learning rate and then ``epochs``
    at the full rate, resampling negatives every epoch.
    """
    _check_nonempty(g)
    rng = np.random.default_rng(config.seed)
    emb = Embedding(space, space.random_init(g.num_nodes, rng), g.node_names, config)
    sampler = NegativeSampler(g)
    bs = config.batch_size
    for epoch, lr in _epoch_schedule(config):
        t0 = time.process_time()
        order = rng.permutation(g.num_edges)
        edges = g.edges[order]
        negs = sampler.sample(edges[:, 0], config.neg_samples, rng)
        total = 0.0
        for start in range(0, len(edges), bs):
            try:
                total += sgd_step(emb, edges[start:start + bs], negs[start:start + bs], lr,
                                  freeze_base=config.freeze_base)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch at edge {start}: {exc}") from None
        emb.log.losses.append(total / len(edges))
        emb.log.epoch_cpu_seconds.append(time.process_time() - t0)
        logger.debug("epoch %d loss %.6f", epoch, emb.log.losses[-1])
    return emb


def _as_base_embedding(pretrained: Embedding) -> Embedding:
    if pretrained.is_cone:
        return Embedding(pretrained.space.base, pretrained.base.copy(), pretrained.node_names)
    return pretrained


def lift_train(g: Graph, pretrained: Embedding, config: TrainConfig, *, cache: bool = True,
               backend: str | None = None) -> Embedding:
    """Learn cone heights over a fixed pretrained embedding.

    The base-space distance matrix is computed once; every epoch then only
    touches heights, so its cost does not depend on the base dimension.
    ``cache=False`` runs the same optimisation through :func:`sgd_step`
    instead, recomputing base distances from coordinates (reference path).
    """
    _check_nonempty(g)
    base_emb = _as_base_embedding(pretrained)
    if base_emb.num_nodes != g.num_nodes:
        raise DataError(
            f"pretrained embedding has {base_emb.num_nodes} nodes, graph has {g.num_nodes}"
        )
    cone = MetricCone(base_emb.space, beta=config.beta, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    heights = rng.uniform(0.4, 0.6, size=g.num_nodes)
    np.clip(heights, config.eps, 1.0 - config.eps, out=heights)
    coords = np.concatenate([base_emb.coords, heights[:, None]], axis=1)
    emb = Embedding(cone, coords, g.node_names if g.node_names else base_emb.node_names,
                    TrainConfig.from_dict({**config.to_dict(), "freeze_base": True}))
    sampler = NegativeSampler(g)
    kern = kernels.get_backend(backend)

    t0 = time.process_time()
    dist = DistanceMatrix.from_embedding(base_emb).values if cache else None
    emb.log.preprocess_cpu_seconds = time.process_time() - t0

    h = np.ascontiguousarray(heights)
    for epoch, lr in _epoch_schedule(config):
        t0 = time.process_time()
        order = rng.permutation(g.num_edges)
        edges = np.ascontiguousarray(g.edges[order])
        negs = sampler.sample(edges[:, 0], config.neg_samples, rng)
        if cache:
            total = kern.lift_epoch(h, dist, np.ascontiguousarray(edges[:, 0]),
                                    np.ascontiguousarray(edges[:, 1]), negs,
                                    config.beta, lr, config.eps, config.batch_size)
        else:
            total = 0.0
            for start in range(0, len(edges), config.batch_size):
                sl = slice(start, start + config.batch_size)
                total += sgd_step(emb, edges[sl], negs[sl], lr, freeze_base=True)
        if not np.isfinite(total):
            raise NumericalError(f"non-finite loss in lift epoch {epoch}")
        emb.log.losses.append(total / len(edges))
        emb.log.epoch_cpu_seconds.append(time.process_time() - t0)
    if cache:
        emb.coords[:, -1] = h
    return emb


# -- persistence -------------------------------------------------------------


def _space_to_dict(space) -> dict:
    d = {"descriptor": space.descriptor()}
    if isinstance(space, MetricCone):
        d.update(beta=space.beta, eps=space.eps)
        base = space.base
    else:
        base = space
    if isinstance(base, PoincareBall):
        d["boundary_eps"] = base.boundary_eps
    return d


def _space_from_dict(d: dict):
    return parse_space(d["descriptor"], beta=d.get("beta", 1.0), eps=d.get("eps", 1e-3),
                       boundary_eps=d.get("boundary_eps", 1e-5))


def save_checkpoint(emb: Embedding, path, epoch: int | None = None) -> None:
    """Write an embedding as JSON (coordinates are stored at full precision)."""
    cone = emb.is_cone
    doc = {
        "space": _space_to_dict(emb.space),
        "beta": emb.space.beta if cone else None,
        "eps": emb.space.eps if cone else None,
        "node_names": emb.node_names,
        "coords": emb.base.tolist(),
        "heights": emb.heights.tolist() if cone else None,
        "config": emb.config.to_dict() if emb.config else None,
        "epoch": epoch if epoch is not None else len(emb.log.losses),
        "loss_history": list(emb.log.losses),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> Embedding:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        space = _space_from_dict(doc["space"])
        coords = np.asarray(doc["coords"], dtype=np.float64)
        if doc.get("heights") is not None:
            coords = np.concatenate([coords, np.asarray(doc["heights"])[:, None]], axis=1)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: not a valid checkpoint ({exc})") from None
    config = TrainConfig.from_dict(doc["config"]) if doc.get("config") else None
    emb = Embedding(space, coords, doc.get("node_names"), config)
    emb.log.losses = list(doc.get("loss_history") or [])
    return emb


def load_embedding_csv(path, space=None) -> Embedding:
    """Read ``node_name, c1, ..., cd`` rows into a Euclidean (default) embedding."""
    names, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                if lineno == 1:  # header
                    continue
                raise DataError(f"{path}:{lineno}: non-numeric coordinate") from None
            names.append(row[0].strip())
    if not rows or len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: empty file or ragged rows")
    X = np.array(rows)
    space = space or EuclideanSpace(X.shape[1])
    return Embedding(space, X, names)


def load_pretrained(path) -> Embedding:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return load_checkpoint(path)
    return load_embedding_csv(path)


def align_to_graph(emb: Embedding, g: Graph) -> Embedding:
    """Reorder an embedding's rows to the graph's node order by name."""
    if emb.node_names is None:
        if emb.num_nodes != g.num_nodes:
            raise DataError("embedding and graph sizes differ and no names to align by")
        return emb
    pos = {nm: i for i, nm in enumerate(emb.node_names)}
    missing = [g.name(i) for i in range(g.num_nodes) if g.name(i) not in pos]
    if missing:
        raise DataError(f"{len(missing)} graph nodes missing from embedding: {', '.join(missing[:20])}")
    rows = [pos[g.name(i)] for i in range(g.num_nodes)]
    return Embedding(emb.space, emb.coords[rows], [g.name(i) for i in range(g.num_nodes)],
                     emb.config, emb.log)
