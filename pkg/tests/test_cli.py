import json
from pathlib import Path

import pytest

from protgraph import cli
from protgraph.io.serialize import read_graph
from protgraph.multiscale import validate
from protgraph.synthetic import write_toy_dataset

TINY = ["--set", "hidden_surface=4", "--set", "hidden_structure=4", "--set", "hidden_ligand=4",
        "--set", "steps_surface=1", "--set", "steps_structure=1", "--set", "steps_ligand=1",
        "--set", "mlp_hidden=8"]


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """preprocess + segment once; tests reuse the outputs read-only."""
    root = tmp_path_factory.mktemp("cli")
    index = write_toy_dataset(root / "data", n=6, subdivisions=1, splits=["train"] * 4 + ["val", "test"])
    assert cli.main(["preprocess", "--index", str(index), "--out", str(root / "graphs")]) == 0
    assert cli.main(["segment", "--manifest", str(root / "graphs" / "manifest.csv"), "--out-dir",
                     str(root / "seg"), "--k", "6"]) == 0
    return root


def test_preprocess_outputs(pipeline):
    g = pipeline / "graphs"
    rows = (g / "manifest.csv").read_text().splitlines()
    assert rows[0] == "id,graph,target,split" and len(rows) == 7
    assert json.loads((g / "rejected.json").read_text()) == []
    graph = read_graph((g / "toy000.json").read_bytes())
    assert graph.mode == "full" and validate(graph) == []


def test_segment_outputs(pipeline):
    s = pipeline / "seg"
    graph = read_graph((s / "toy003.json").read_bytes())
    assert graph.superpixels.k == 6 and validate(graph, 6) == []
    labels = [int(line.split("\t")[1]) for line in (s / "toy003.labels.tsv").read_text().splitlines()]
    assert labels == graph.superpixels.labels.tolist()


def test_segment_is_idempotent(pipeline, tmp_path, capsys):
    code, _, _ = run(["segment", "--manifest", pipeline / "graphs" / "manifest.csv", "--out-dir", tmp_path,
                      "--k", "6"], capsys)
    assert code == 0
    for f in (pipeline / "seg").iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_parallel_preprocess_matches_serial(pipeline, tmp_path, capsys):
    code, _, _ = run(["preprocess", "--index", pipeline / "data" / "index.csv", "--out", tmp_path, "--jobs", 2],
                     capsys)
    assert code == 0
    for f in (pipeline / "graphs").iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_train_predict_evaluate_inspect(pipeline, tmp_path, capsys):
    manifest = pipeline / "seg" / "manifest.csv"
    ck, hist = tmp_path / "m.npz", tmp_path / "h.csv"
    code, out, _ = run(["train", "--manifest", manifest, "--checkpoint", ck, "--history", hist,
                        "--epochs", 2, *TINY], capsys)
    assert code == 0 and ck.exists()
    assert hist.read_text().splitlines()[0] == "epoch,lr,train_loss,val_rmse,val_pearson,val_spearman,lr_decayed"
    assert len(hist.read_text().splitlines()) == 3

    preds = tmp_path / "p.csv"
    code, _, _ = run(["predict", "--checkpoint", ck, "--manifest", manifest, "--out", preds], capsys)
    assert code == 0
    lines = preds.read_text().splitlines()
    assert lines[0] == "id,prediction" and len(lines) == 7

    report = tmp_path / "r.json"
    code, out, _ = run(["evaluate", "--predictions", preds, "--targets", manifest, "--task", "affinity",
                        "--out-json", report, "--out-csv", tmp_path / "r.csv"], capsys)
    assert code == 0
    assert set(json.loads(report.read_text())) == {"rmse", "pearson", "spearman", "n"}
    assert (tmp_path / "r.csv").read_text().startswith("n,pearson,rmse,spearman\n")

    code, out, _ = run(["inspect", "--checkpoint", ck, "--graph", pipeline / "seg" / "toy000.json"], capsys)
    assert code == 0
    first, second = (json.loads(line) for line in out.splitlines())
    assert first["config"]["hidden_surface"] == 4
    assert second["superpixels"]["k"] == 6 and second["violations"] == []


def test_training_history_is_byte_identical(pipeline, tmp_path, capsys):
    manifest = pipeline / "seg" / "manifest.csv"
    for name in ("a", "b"):
        code, _, _ = run(["train", "--manifest", manifest, "--checkpoint", tmp_path / f"{name}.npz", "--history",
                          tmp_path / f"{name}.csv", "--epochs", 3, "--seed", 7, *TINY], capsys)
        assert code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_reaction_task_end_to_end(tmp_path, capsys):
    index = write_toy_dataset(tmp_path / "data", n=4, subdivisions=0, splits=["train", "train", "val", "test"])
    rows = (tmp_path / "data" / "index.csv").read_text().splitlines()
    # integer class labels in place of affinities
    relabelled = [rows[0]] + [",".join(r.split(",")[:4] + [str(i % 2)] + r.split(",")[5:])
                              for i, r in enumerate(rows[1:])]
    index.write_text("\n".join(relabelled) + "\n")
    assert run(["preprocess", "--index", index, "--out", tmp_path / "g"], capsys)[0] == 0
    ck = tmp_path / "m.npz"
    code, _, _ = run(["train", "--manifest", tmp_path / "g" / "manifest.csv", "--checkpoint", ck, "--history",
                      tmp_path / "h.csv", "--epochs", 1, "--task", "reaction", "--set", "n_classes=2", *TINY], capsys)
    assert code == 0
    preds = tmp_path / "p.csv"
    assert run(["predict", "--checkpoint", ck, "--manifest", tmp_path / "g" / "manifest.csv", "--out", preds],
               capsys)[0] == 0
    assert preds.read_text().splitlines()[0] == "id,prediction,logits"
    code, out, _ = run(["evaluate", "--predictions", preds, "--targets", tmp_path / "g" / "manifest.csv",
                        "--task", "reaction"], capsys)
    assert code == 0 and 0 <= json.loads(out)["accuracy"] <= 1


# ----- configuration -----

def test_config_precedence(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("# defaults for a run\nepochs = 5\nlr = 0.5\nhidden_surface = 3\n")
    args = cli.build_parser().parse_args(["train", "--manifest", "m", "--checkpoint", "c", "--history", "h",
                                          "--config", str(conf), "--set", "lr=0.25", "--set", "epochs=6",
                                          "--epochs", "9"])
    cfg = cli.resolve_config(args)
    assert cfg.hidden_surface == 3  # file
    assert cfg.lr == 0.25  # --set beats file
    assert cfg.epochs == 9  # dedicated flag beats --set


def test_config_file_syntax_error(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("epochs 5\n")
    code, _, err = run(["train", "--manifest", "m", "--checkpoint", "c", "--history", "h", "--config", conf],
                       capsys)
    assert code == 1 and json.loads(err)["error"] == "UsageError"


# ----- exit codes -----

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["train", "--manifest", "m.csv"],
    ["segment", "--out-dir", "x"],
    ["train", "--manifest", "m", "--checkpoint", "c", "--history", "h", "--set", "bogus_key=1"],
    ["preprocess", "--index", "i.csv", "--out", "o", "--jobs", "0"],
    ["inspect"],
])
def test_usage_errors_exit_1(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, err = run(argv, capsys)
    assert code == 1
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit_code"] == 1 and payload["error"] == "UsageError"


def test_missing_and_malformed_inputs_exit_2(tmp_path, capsys):
    code, _, err = run(["inspect", "--graph", tmp_path / "nope.json"], capsys)
    assert code == 2 and json.loads(err)["exit_code"] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(["inspect", "--graph", bad], capsys)
    assert code == 2
    bad.write_text('{"protein_id": "x"}')
    assert run(["inspect", "--graph", bad], capsys)[0] == 2


def test_empty_val_split_exits_2(pipeline, tmp_path, capsys):
    rows = (pipeline / "seg" / "manifest.csv").read_text().splitlines()
    only_train = tmp_path / "seg"
    only_train.mkdir()
    fixed = [rows[0]] + [r.rsplit(",", 1)[0] + ",train" for r in rows[1:]]
    for r in rows[1:]:
        name = r.split(",")[1]
        (only_train / name).write_bytes((pipeline / "seg" / name).read_bytes())
    (only_train / "manifest.csv").write_text("\n".join(fixed) + "\n")
    argv = ["train", "--manifest", only_train / "manifest.csv", "--checkpoint", tmp_path / "m.npz",
            "--history", tmp_path / "h.csv", "--epochs", 1, *TINY]
    code, _, err = run(argv, capsys)
    assert code == 2 and json.loads(err)["error"] == "EmptySplit"
    assert run(argv + ["--val-from-train"], capsys)[0] == 0


def test_unexpected_errors_exit_3(monkeypatch, capsys, tmp_path):
    def boom(args):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "cmd_inspect", boom)
    code, _, err = run(["inspect", "--graph", tmp_path / "x.json"], capsys)
    assert code == 3
    assert json.loads(err) == {"error": "RuntimeError", "message": "kaboom", "exit_code": 3}


def test_bad_preprocess_inputs_are_rejected_not_fatal(tmp_path, capsys):
    index = write_toy_dataset(tmp_path / "data", n=3, subdivisions=0)
    (tmp_path / "data" / "toy001.pdb").write_text("HEADER    nothing here\nEND\n")
    code, out, _ = run(["preprocess", "--index", index, "--out", tmp_path / "g"], capsys)
    assert code == 0 and json.loads(out) == {"graphs": 2, "rejected": 1}
    rejected = json.loads((tmp_path / "g" / "rejected.json").read_text())
    assert rejected[0]["id"] == "toy001"
    assert Path(tmp_path / "g" / "toy001.json").exists() is False
