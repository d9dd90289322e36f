import csv
import json

import numpy as np
import pytest

from coneembed.cli import git_blob_hash, main
from coneembed.graphs import load_edge_list


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CONE_EMBED_THREADS", raising=False)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def tree(work):
    assert run("gen", "kary", "--k", 3, "--depth", 3, "--out", "tree.tsv") == 0
    return work / "tree.tsv"


@pytest.fixture
def base_ckpt(tree):
    assert run("train", "--graph", tree, "--space", "euclidean:4", "--epochs", 30,
               "--out", "base.json") == 0
    return tree.parent / "base.json"


class TestGen:
    def test_kary(self, work):
        assert run("gen", "kary", "--k", 3, "--depth", 4, "--out", "t.tsv") == 0
        assert load_edge_list(work / "t.tsv").num_nodes == 121

    def test_concat(self, work):
        assert run("gen", "concat-kary", "--k", 5, "--depth", 3, "--out", "c.tsv") == 0
        assert load_edge_list(work / "c.tsv").num_nodes == 313

    def test_ba_deterministic(self, work):
        for name in ("a.tsv", "b.tsv"):
            assert run("gen", "ba", "--n", 100, "--m", 2, "--seed", 7, "--out", name) == 0
        assert (work / "a.tsv").read_bytes() == (work / "b.tsv").read_bytes()
        assert load_edge_list(work / "a.tsv").num_edges == 196

    @pytest.mark.parametrize("argv", [["gen", "ba", "--n", "2", "--m", "2", "--out", "x"],
                                      ["gen", "kary", "--k", "1", "--out", "x"],
                                      []])
    def test_usage_errors(self, work, argv):
        assert main(argv) == 1

    @pytest.mark.parametrize("argv", [["gen", "star", "--out", "x"], ["gen", "kary"],
                                      ["train", "--graph", "g"]])
    def test_argparse_errors(self, work, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1

    def test_manifest(self, work):
        assert run("gen", "kary", "--k", 2, "--depth", 2, "--out", "t.tsv") == 0
        m = json.loads((work / "t.tsv.manifest.json").read_text())
        assert m["command"] == "gen" and m["config"]["k"] == 2
        assert "t.tsv" in m["outputs"] and "wall_time_seconds" in m


class TestTrain:
    @pytest.mark.parametrize("space, extra", [("cone:euclidean:4", ["--beta", "1.0"]),
                                              ("poincare:4", []), ("euclidean:4", [])])
    def test_spaces(self, tree, space, extra):
        assert run("train", "--graph", tree, "--space", space, *extra, "--epochs", 5,
                   "--out", "m.json") == 0
        doc = json.loads((tree.parent / "m.json").read_text())
        assert doc["space"]["descriptor"] == space
        rows = list(csv.reader(open(tree.parent / "m.loss.csv")))
        assert rows[0] == ["epoch", "loss"] and len(rows) == 1 + 5 + 10

    def test_bad_space(self, tree):
        assert run("train", "--graph", tree, "--space", "torus:3", "--out", "m.json") == 1

    def test_bad_lr(self, tree):
        assert run("train", "--graph", tree, "--space", "euclidean:2", "--lr", -1, "--out", "m.json") == 1

    def test_missing_graph(self, work):
        assert run("train", "--graph", "nope.tsv", "--space", "euclidean:2", "--out", "m.json") == 2

    def test_config_file_and_flag_precedence(self, tree):
        (tree.parent / "cfg.json").write_text(json.dumps({"epochs": 3, "lr": 0.2}))
        assert run("--config", "cfg.json", "train", "--graph", tree, "--space", "euclidean:2",
                   "--lr", 0.1, "--out", "m.json") == 0
        cfg = json.loads((tree.parent / "m.json").read_text())["config"]
        assert cfg["epochs"] == 3 and cfg["lr"] == 0.1

    def test_config_unknown_key(self, tree):
        (tree.parent / "cfg.json").write_text(json.dumps({"learning_rate": 3}))
        assert run("--config", "cfg.json", "train", "--graph", tree, "--space", "euclidean:2",
                   "--out", "m.json") == 1

    def test_replay_is_bit_identical(self, tree):
        assert run("train", "--graph", tree, "--space", "poincare:3", "--epochs", 10,
                   "--seed", 3, "--out", "m.json") == 0
        first = (tree.parent / "m.json").read_bytes()
        (tree.parent / "m.json").unlink()
        assert run("--manifest", "m.json.manifest.json") == 0
        assert (tree.parent / "m.json").read_bytes() == first

    def test_manifest_hashes_inputs(self, tree):
        assert run("train", "--graph", tree, "--space", "euclidean:2", "--epochs", 1,
                   "--out", "m.json") == 0
        m = json.loads((tree.parent / "m.json.manifest.json").read_text())
        assert m["inputs"][str(tree)] == git_blob_hash(tree)
        assert m["seed"] == 0


class TestLift:
    def test_beta_grid(self, tree, base_ckpt):
        assert run("lift", "--graph", tree, "--pretrained", base_ckpt, "--beta-grid", "0.5,1,2",
                   "--epochs", 10, "--out", "grid") == 0
        grid = tree.parent / "grid"
        assert sorted(p.name for p in grid.glob("beta_*.json")) == \
            ["beta_0.5.json", "beta_1.json", "beta_2.json"]
        rows = list(csv.DictReader(open(grid / "summary.csv")))
        assert [r["rank"] for r in rows] == ["1", "2", "3"]
        accs = [float(r["val_edge_direction_accuracy"]) for r in rows]
        assert accs == sorted(accs, reverse=True)

    def test_default_grid(self, tree, base_ckpt):
        assert run("lift", "--graph", tree, "--pretrained", base_ckpt, "--epochs", 2,
                   "--out", "grid") == 0
        assert len(list((tree.parent / "grid").glob("beta_*.json"))) == 5

    def test_single_beta_keeps_base(self, tree, base_ckpt):
        assert run("lift", "--graph", tree, "--pretrained", base_ckpt, "--beta", 1.5,
                   "--epochs", 5, "--out", "cone.json") == 0
        cone = json.loads((tree.parent / "cone.json").read_text())
        base = json.loads(base_ckpt.read_text())
        assert cone["coords"] == base["coords"] and cone["beta"] == 1.5

    def test_csv_pretrained(self, tree):
        g = load_edge_list(tree)
        with open(tree.parent / "emb.csv", "w") as fh:
            for i in range(g.num_nodes):
                fh.write(f"{g.name(i)},{i * 0.1},{-i * 0.05}\n")
        assert run("lift", "--graph", tree, "--pretrained", "emb.csv", "--beta", 1,
                   "--epochs", 2, "--out", "c.json") == 0

    def test_missing_nodes(self, tree, capsys):
        with open(tree.parent / "emb.csv", "w") as fh:
            fh.write("0,0.1,0.2\n1,0.3,0.4\n")
        assert run("lift", "--graph", tree, "--pretrained", "emb.csv", "--beta", 1,
                   "--out", "c.json") == 2
        err = capsys.readouterr().err
        assert "38 graph nodes missing" in err and "2, 3, 4" in err

    def test_parallel_grid_matches_serial(self, tree, base_ckpt, monkeypatch):
        args = ("lift", "--graph", tree, "--pretrained", base_ckpt, "--beta-grid", "1,2",
                "--epochs", 5)
        assert run(*args, "--out", "serial") == 0
        monkeypatch.setenv("CONE_EMBED_THREADS", "2")
        assert run(*args, "--out", "parallel") == 0
        for name in ("beta_1.json", "beta_2.json", "summary.csv"):
            assert (tree.parent / "serial" / name).read_bytes() == \
                (tree.parent / "parallel" / name).read_bytes()


class TestEval:
    @pytest.fixture
    def cone(self, tree, base_ckpt):
        assert run("lift", "--graph", tree, "--pretrained", base_ckpt, "--beta", 1,
                   "--epochs", 20, "--out", "cone.json") == 0
        return tree.parent / "cone.json"

    def test_edge_direction_and_reconstruction(self, tree, cone):
        assert run("eval", "--checkpoint", cone, "--graph", tree, "--edge-direction",
                   "--reconstruction", "--level-csv", "lv.csv", "--out", "r.json") == 0
        rep = json.loads((tree.parent / "r.json").read_text())
        assert 0 <= rep["edge_direction_accuracy"] <= 1
        assert 0 <= rep["map"] <= 1 and rep["mean_rank"] >= 1
        rows = list(csv.DictReader(open(tree.parent / "lv.csv")))
        assert len(rows) == 40 and rows[0]["depth"] == "0"

    def test_gold_scores(self, tree, cone):
        (tree.parent / "gold.csv").write_text("word1,word2,score\n1,0,5\n4,1,4\n13,4,3\n2,0,1\n")
        assert run("eval", "--checkpoint", cone, "--graph", tree, "--gold-scores", "gold.csv",
                   "--out", "r.json") == 0
        rep = json.loads((tree.parent / "r.json").read_text())
        assert -1 <= rep["correlation"] <= 1

    def test_gold_two_pairs(self, tree, cone, capsys):
        (tree.parent / "gold.csv").write_text("1,0,5\n4,1,4\nfoo,bar,1\n")
        assert run("eval", "--checkpoint", cone, "--graph", tree, "--gold-scores", "gold.csv",
                   "--out", "r.json") == 2
        assert "3 shared pairs" in capsys.readouterr().err

    def test_gold_missing(self, tree, cone):
        assert run("eval", "--checkpoint", cone, "--graph", tree, "--gold-scores", "none.csv",
                   "--out", "r.json") == 2

    def test_link_prediction(self, work):
        assert run("gen", "ba", "--n", 60, "--m", 2, "--out", "ba.tsv") == 0
        assert run("split", "--graph", "ba.tsv", "--fraction", 0.1, "--train-out", "tr.tsv",
                   "--test-out", "te.tsv") == 0
        assert run("train", "--graph", "tr.tsv", "--space", "euclidean:4", "--epochs", 10,
                   "--out", "m.json") == 0
        assert run("eval", "--checkpoint", "m.json", "--graph", "ba.tsv", "--link-pred", "te.tsv",
                   "--out", "r.json") == 0
        rep = json.loads((work / "r.json").read_text())
        assert 0 < rep["map"] <= 1


class TestIdentify:
    def _write(self, path, m):
        np.savetxt(path, np.atleast_2d(m), delimiter=",")

    def test_generic(self, work):
        rng = np.random.default_rng(0)
        self._write("z.csv", rng.uniform(0, 0.3, (3, 2)))
        self._write("t.csv", rng.uniform(0, 1, 3))
        assert run("identify", "--base-coords", "z.csv", "--heights", "t.csv", "--out", "r.json") == 0
        rep = json.loads((work / "r.json").read_text())
        assert 1 <= rep["solution_count"] <= 4 and rep["degeneracy"] == "generic"

    def test_far_apart(self, work):
        self._write("z.csv", [[0, 0], [0.6, 0], [0.3, 0.6]])
        self._write("t.csv", [0.2, 0.5, 0.8])
        assert run("identify", "--base-coords", "z.csv", "--heights", "t.csv", "--out", "r.json") == 0
        assert json.loads((work / "r.json").read_text())["solution_count"] == 1

    def test_collinear(self, work):
        self._write("z.csv", [[0, 0], [0.2, 0], [0.5, 0]])
        self._write("t.csv", [0.3, 0.5, 0.7])
        assert run("identify", "--base-coords", "z.csv", "--heights", "t.csv", "--out", "r.json") == 0
        assert json.loads((work / "r.json").read_text())["degeneracy"] == "collinear"

    def test_distance_matrices(self, work):
        dz = np.array([[0, 0.3, 0.4], [0.3, 0, 0.5], [0.4, 0.5, 0]])
        self._write("dz.csv", dz)
        self._write("dc.csv", [[0, 1.9, 0.01], [1.9, 0, 0.01], [0.01, 0.01, 0]])
        assert run("identify", "--base-dists", "dz.csv", "--cone-dists", "dc.csv",
                   "--out", "r.json") == 3

    def test_needs_one_source(self, work):
        assert run("identify", "--heights", "t.csv", "--out", "r.json") == 1


def test_table1_small(work):
    assert run("table1", "--graphs", "concat3", "--models", "euclidean", "cone", "--seeds", 2,
               "--out", "t1.csv") == 0
    rows = list(csv.DictReader(open(work / "t1.csv")))
    assert [(r["model"], r["graph"], r["n_seeds"]) for r in rows] == \
        [("euclidean", "concat3", "2"), ("cone", "concat3", "2")]
