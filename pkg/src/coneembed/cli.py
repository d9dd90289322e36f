"""Command-line entry point: ``cone-embed <command> ...``.

Every command writes a run manifest next to its main output. Passing
``--manifest PATH`` instead of a command replays a recorded run.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, NumericalError
from .evaluation import (
    EvalReport,
    ScoreConfig,
    edge_direction_accuracy,
    hierarchy_scores,
    link_prediction_metrics,
    rank_correlation,
    reconstruction_metrics,
    write_level_csv,
)
from .experiments import GRAPH_FAMILIES, MODELS, edge_direction_table, write_table_csv
from .geometry import parse_space
from .graphs import (
    SplitGraph,
    gen_barabasi_albert,
    gen_complete_kary_tree,
    gen_concatenated_kary_tree,
    load_edge_list,
    save_edge_list,
    split_link_prediction,
)
from .identifiability import HeightRecoveryProblem, recover_heights, report
from .training import (
    TrainConfig,
    align_to_graph,
    base_distance_matrix,
    lift_train,
    load_checkpoint,
    load_pretrained,
    save_checkpoint,
    train,
)

logger = logging.getLogger("coneembed")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_BETA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)

# Flags that name input files; their contents are hashed into the manifest.
_INPUT_FLAGS = ("graph", "pretrained", "checkpoint", "link_pred", "gold_scores", "config",
                "base_dists", "base_coords", "cone_dists", "heights")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- manifest ----------------------------------------------------------------


def git_blob_hash(path) -> str:
    """SHA-1 of a file as ``git hash-object`` computes it."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _input_hashes(args) -> dict:
    out = {}
    for name in _INPUT_FLAGS:
        p = getattr(args, name, None)
        if p and Path(p).is_file():
            out[str(p)] = git_blob_hash(p)
    return out


def write_manifest(path, argv, args, outputs, wall, cpu) -> None:
    snapshot = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "argv": list(argv),
        "config": snapshot,
        "seed": snapshot.get("seed"),
        "inputs": _input_hashes(args),
        "outputs": [str(o) for o in outputs],
        "wall_time_seconds": wall,
        "cpu_seconds": cpu,
        "version": __version__,
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=str), encoding="utf-8")


def replay_manifest(path) -> int:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    for p, h in doc.get("inputs", {}).items():
        if not Path(p).is_file():
            raise DataError(f"manifest input {p} is missing")
        if git_blob_hash(p) != h:
            logger.warning("input %s changed since the manifest was written", p)
    return main(doc["argv"])


# -- helpers -----------------------------------------------------------------


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CONE_EMBED_THREADS", "1")))
    except ValueError:
        raise UsageError("CONE_EMBED_THREADS must be an integer") from None


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _train_config(args, **overrides) -> TrainConfig:
    kw = dict(
        lr=args.lr, epochs=args.epochs, neg_samples=args.neg_samples,
        burn_in_epochs=args.burn_in_epochs, burn_in_lr_factor=args.burn_in_lr_factor,
        batch_size=args.batch_size, seed=args.seed, beta=getattr(args, "beta", None) or 1.0,
        eps=args.eps, lr_decay=args.lr_decay,
    )
    kw.update(overrides)
    try:
        return TrainConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_loss_csv(path, emb) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(emb.log.losses):
            w.writerow([i, repr(float(loss))])


def _loss_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".loss.csv")


def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            return np.load(path)
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: cannot read matrix ({exc})") from None


# -- commands ----------------------------------------------------------------


def cmd_gen(args):
    try:
        if args.kind == "ba":
            g = gen_barabasi_albert(args.n, args.m, args.seed)
        elif args.kind == "kary":
            g = gen_complete_kary_tree(args.k, args.depth)
        else:
            g = gen_concatenated_kary_tree(args.k, args.depth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_edge_list(g, args.out)
    print(f"wrote {g.num_nodes} nodes, {g.num_edges} edges to {args.out}")
    return [args.out, args.out + ".json"]


def cmd_split(args):
    g = load_edge_list(args.graph)
    try:
        sp = split_link_prediction(g, args.fraction, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_edge_list(sp.train_graph(), args.train_out)
    save_edge_list(g.with_edges(sp.test_rows), args.test_out)
    print(f"{len(sp.train_rows)} train / {len(sp.test_rows)} test edges")
    return [args.train_out, args.test_out]


def cmd_train(args):
    g = load_edge_list(args.graph)
    try:
        space = parse_space(args.space, beta=args.beta or 1.0, eps=args.eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    emb = train(g, space, _train_config(args))
    save_checkpoint(emb, args.out)
    loss_csv = _loss_path(args.out)
    _write_loss_csv(loss_csv, emb)
    print(f"final loss {emb.log.losses[-1]:.6f}; checkpoint {args.out}")
    return [args.out, str(loss_csv)]


def _lift_one(g, val_g, pretrained, config, out):
    emb = lift_train(g, pretrained, config)
    save_checkpoint(emb, out)
    _write_loss_csv(_loss_path(out), emb)
    val_acc = edge_direction_accuracy(emb, val_g) if val_g is not None else float("nan")
    epoch_cpu = float(np.mean(emb.log.epoch_cpu_seconds)) if emb.log.epoch_cpu_seconds else 0.0
    return val_acc, epoch_cpu, emb.log.preprocess_cpu_seconds


def cmd_lift(args):
    g = load_edge_list(args.graph)
    pretrained = align_to_graph(load_pretrained(args.pretrained), g)
    if args.beta is not None:
        betas = [args.beta]
    else:
        betas = list(args.beta_grid or DEFAULT_BETA_GRID)
    scale = 1.0
    if args.relative_beta:
        scale = float(base_distance_matrix(pretrained.space, pretrained.base).max())

    # hold out a seeded fraction of labelled edges to rank betas by
    train_g, val_g = g, None
    labeled = np.flatnonzero(g.directed) if g.directed is not None else np.empty(0, np.int64)
    if len(betas) > 1 and args.val_fraction > 0 and len(labeled):
        n_val = max(1, int(round(args.val_fraction * len(labeled))))
        val_rows = np.sort(np.random.default_rng(args.seed).choice(labeled, n_val, replace=False))
        train_rows = np.setdiff1d(np.arange(g.num_edges), val_rows)
        train_g, val_g = g.with_edges(train_rows), g.with_edges(val_rows)
    elif g.has_labels:
        val_g = g

    out = Path(args.out)
    if len(betas) == 1:
        paths = [out]
    else:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"beta_{b:g}.json" for b in betas]
    configs = [_train_config(args, beta=b * scale) for b in betas]

    jobs = [(train_g, val_g, pretrained, c, p) for c, p in zip(configs, paths)]
    if _workers() > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=_workers()) as pool:
            results = list(pool.map(_lift_one, *zip(*jobs)))
    else:
        results = [_lift_one(*j) for j in jobs]

    outputs = [str(p) for p in paths] + [str(_loss_path(p)) for p in paths]
    if len(betas) > 1:
        ranked = sorted(zip(betas, configs, paths, results), key=lambda r: (-r[3][0], r[0]))
        summary = out / "summary.csv"
        with open(summary, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "beta", "beta_absolute", "val_edge_direction_accuracy", "checkpoint"])
            for i, (b, c, p, (acc, _, _)) in enumerate(ranked, 1):
                w.writerow([i, repr(b), repr(c.beta), repr(acc), p.name])
        outputs.append(str(summary))
        print(f"best beta {ranked[0][0]:g} (validation accuracy {ranked[0][3][0]:.4f})")
    else:
        acc, epoch_cpu, pre = results[0]
        print(f"lifted with beta {configs[0].beta:g}; accuracy {acc:.4f}; "
              f"preprocess {pre:.4f}s CPU, {epoch_cpu:.6f}s CPU per epoch")
    return outputs


def _read_gold(path, g) -> dict:
    index = g.index()
    gold = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, skipinitialspace=True), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected word1,word2,score")
            try:
                score = float(row[2])
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"{path}:{lineno}: score is not a number") from None
            a, b = row[0].strip(), row[1].strip()
            if a in index and b in index and a != b:
                gold[(index[a], index[b])] = score
    return gold


def cmd_eval(args):
    t0 = time.perf_counter()
    g = load_edge_list(args.graph)
    emb = align_to_graph(load_checkpoint(args.checkpoint), g)
    score_cfg = ScoreConfig(args.alpha)
    rep = EvalReport()
    outputs = [args.out]
    if not (args.reconstruction or args.link_pred or args.edge_direction or args.gold_scores):
        raise UsageError("choose at least one of --reconstruction, --link-pred, "
                         "--edge-direction, --gold-scores")
    dist = emb.distance_matrix() if (args.reconstruction or args.link_pred) else None
    if args.reconstruction:
        rep.mean_rank, rep.map = reconstruction_metrics(emb, g, dist)
    if args.link_pred:
        test = load_edge_list(args.link_pred)
        index = g.index()
        try:
            pairs = {(index[test.name(a)], index[test.name(b)]) for a, b in test.edges}
        except KeyError as exc:
            raise DataError(f"test edge node {exc} is not in the graph") from None
        rows = [i for i, (a, b) in enumerate(g.edges) if (a, b) in pairs or (b, a) in pairs]
        if len(rows) != len(pairs):
            raise DataError("some test edges are not edges of the full graph")
        test_rows = np.array(rows, dtype=np.int64)
        split = SplitGraph(g, np.setdiff1d(np.arange(g.num_edges), test_rows), test_rows)
        rep.mean_rank, rep.map = link_prediction_metrics(emb, split, dist)
    if args.edge_direction:
        rep.edge_direction_accuracy = edge_direction_accuracy(emb, g, score_cfg)
    if args.gold_scores:
        if not Path(args.gold_scores).is_file():
            raise DataError(f"gold score file {args.gold_scores} not found")
        gold = _read_gold(args.gold_scores, g)
        pairs = list(gold)
        if pairs:
            us, vs = np.array(pairs).T
            vals = hierarchy_scores(emb, us, vs, score_cfg)
            scores = dict(zip(pairs, vals.tolist()))
        else:
            scores = {}
        rep.correlation = rank_correlation(scores, gold)
    if args.level_csv:
        write_level_csv(args.level_csv, emb, g)
        outputs.append(args.level_csv)
    rep.wall_time_seconds = time.perf_counter() - t0
    Path(args.out).write_text(rep.to_json(), encoding="utf-8")
    print(rep.to_json())
    return outputs


def cmd_identify(args):
    if (args.base_dists is None) == (args.base_coords is None):
        raise UsageError("give exactly one of --base-dists or --base-coords")
    if (args.cone_dists is None) == (args.heights is None):
        raise UsageError("give exactly one of --cone-dists or --heights")
    if args.base_dists is not None:
        dz = _load_matrix(args.base_dists)
    else:
        z = _load_matrix(args.base_coords)
        try:
            dz = base_distance_matrix(parse_space(f"{args.base_space}:{z.shape[1]}"), z)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        if args.heights is not None:
            t = _load_matrix(args.heights).ravel()
            if len(t) != len(dz):
                raise DataError(f"{len(t)} heights for {len(dz)} points")
            problem = HeightRecoveryProblem.from_base_dists(dz, t, args.beta)
        else:
            problem = HeightRecoveryProblem(dz, args.beta, _load_matrix(args.cone_dists))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    sols = recover_heights(problem, grid_resolution=args.grid_resolution)
    text = json.dumps(report(problem, sols), indent=2)
    Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return [args.out]


def cmd_table1(args):
    if _workers() > 1:
        from .experiments import TableRow, edge_direction_run

        cells = [(k, m, s) for m in args.models for k in args.graphs for s in range(args.seeds)]
        with ProcessPoolExecutor(max_workers=_workers()) as pool:
            vals = list(pool.map(edge_direction_run, *zip(*cells)))
        rows = [TableRow(m, k, vals[i * args.seeds:(i + 1) * args.seeds])
                for i, (m, k) in enumerate((m, k) for m in args.models for k in args.graphs)]
    else:
        rows = edge_direction_table(args.graphs, args.models, range(args.seeds))
    write_table_csv(args.out, rows)
    for r in rows:
        print(f"{r.model:10s} {r.graph:8s} {r.mean:.3f} (se {r.se:.3f})")
    return [args.out]


# -- parser ------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--neg-samples", type=int, default=10)
    p.add_argument("--burn-in-epochs", type=int, default=10)
    p.add_argument("--burn-in-lr-factor", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--eps", type=float, default=1e-3, help="height clamp margin")
    p.add_argument("--lr-decay", action="store_true", help="decay lr linearly to zero")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cone-embed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--manifest", help="replay a recorded run manifest")
    parser.add_argument("--manifest-out", help="where to write this run's manifest")
    parser.add_argument("--config", help="JSON file of flag defaults (flags win)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic graph")
    p.add_argument("kind", choices=["ba", "kary", "concat-kary"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="hold out edges for link prediction")
    p.add_argument("--graph", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train an embedding from scratch")
    p.add_argument("--graph", required=True)
    p.add_argument("--space", required=True, help="euclidean:D, poincare:D or cone:<base>:D")
    p.add_argument("--beta", type=float, default=None, help="cone generatrix length")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lift", help="learn cone heights over a pretrained embedding")
    p.add_argument("--graph", required=True)
    p.add_argument("--pretrained", required=True, help="checkpoint JSON or name,c1,...,cd CSV")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--beta", type=float)
    g.add_argument("--beta-grid", type=_float_list)
    p.add_argument("--relative-beta", action="store_true",
                   help="read beta values as multiples of the largest base distance")
    p.add_argument("--val-fraction", type=float, default=0.1)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path, or directory for a grid")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--reconstruction", action="store_true")
    p.add_argument("--link-pred", metavar="TEST_EDGES")
    p.add_argument("--edge-direction", action="store_true")
    p.add_argument("--gold-scores", metavar="CSV")
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--level-csv", help="write per-node degree, depth and level")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("identify", help="recover heights from cone distances")
    p.add_argument("--base-dists")
    p.add_argument("--base-coords")
    p.add_argument("--base-space", default="euclidean", choices=["euclidean", "poincare"])
    p.add_argument("--cone-dists")
    p.add_argument("--heights")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--grid-resolution", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("table1", help="edge-direction table over graph families and models")
    p.add_argument("--graphs", nargs="+", choices=sorted(GRAPH_FAMILIES), default=list(GRAPH_FAMILIES))
    p.add_argument("--models", nargs="+", choices=MODELS, default=list(MODELS))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_table1)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults from ``--config`` so explicit flags still win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices.get(args.command)
    if sub is not None:
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.manifest:
            if args.command is not None:
                raise UsageError("--manifest replays a run and takes no command")
            return replay_manifest(args.manifest)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        t_wall, t_cpu = time.perf_counter(), time.process_time()
        outputs = args.func(args)
        primary = getattr(args, "out", None) or args.train_out
        manifest = args.manifest_out or f"{primary}.manifest.json"
        if Path(primary).is_dir():
            manifest = args.manifest_out or str(Path(primary) / "manifest.json")
        write_manifest(manifest, argv, args, outputs,
                       time.perf_counter() - t_wall, time.process_time() - t_cpu)
        return EXIT_OK
    except UsageError as exc:
        print(f"cone-embed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"cone-embed: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"cone-embed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
