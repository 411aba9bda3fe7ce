"""Command-line front end: preprocess, segment, train, predict, evaluate, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error. Errors
are written to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import count_parameters, load_checkpoint, save_checkpoint
from .errors import EmptySplit, ProtGraphError
from .io.dataset import load_dataset_index
from .io.serialize import read_graph, write_graph
from .multiscale import fan_in, validate
from .pipeline import PipelineConfig, attach_superpixels, build_complex
from .train import (
    Dataset,
    Sample,
    TrainConfig,
    evaluate_classification,
    evaluate_regression,
    predict,
    train,
    write_history,
)

log = logging.getLogger("protgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
MANIFEST_COLUMNS = ["id", "graph", "target", "split"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


# ----- configuration -----

def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(args) -> TrainConfig:
    """Defaults < --config file < --set pairs < dedicated flags."""
    values: dict[str, object] = {}
    if args.config:
        values.update(read_config_file(args.config))
    for pair in getattr(args, "set", None) or []:
        if "=" not in pair:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        values[key.strip()] = value.strip()
    flag_map = {"epochs": "epochs", "lr": "lr", "task": "task", "mode": "mode", "k": "k_superpixels",
                "lam": "lambda_balance", "cutoff": "cutoff", "batch_size": "batch_size"}
    for flag, key in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            values[key] = val
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# ----- manifests -----

def read_manifest(path) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["graph"] = str((path.parent / r["graph"]).resolve()) if not Path(r["graph"]).is_absolute() else r["graph"]
    return rows


def write_manifest(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, MANIFEST_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ----- preprocess -----

def _preprocess_one(job):
    rec, out_dir, pcfg = job
    try:
        g = build_complex(rec["pdb"], rec["mesh"], rec["mol"], pcfg, protein_id=rec["id"])
        (Path(out_dir) / f"{rec['id']}.json").write_bytes(write_graph(g))
        return None
    except (ProtGraphError, OSError) as exc:
        return {"id": rec["id"], "reasons": [f"{type(exc).__name__}: {exc}"]}


def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = load_dataset_index(args.index)
    pcfg = PipelineConfig(cutoff=cfg.cutoff, mode=cfg.mode, k=cfg.k_superpixels, lam=cfg.lambda_balance,
                          fanout=args.fanout, target_faces=args.target_faces)
    jobs = [({"id": r.complex_id, "pdb": str(r.pdb), "mesh": str(r.mesh) if r.mesh else None,
              "mol": str(r.mol) if r.mol else None}, str(out), pcfg) for r in index.records]
    results = _map(_preprocess_one, jobs, args.jobs)
    rejected = list(index.rejected)
    rows = []
    for rec, res in zip(index.records, results):
        if res is None:
            rows.append({"id": rec.complex_id, "graph": f"{rec.complex_id}.json",
                         "target": repr(float(rec.target)), "split": rec.split})
        else:
            rejected.append(res)
    write_manifest(out / "manifest.csv", rows)
    (out / "rejected.json").write_text(json.dumps(rejected, indent=1, sort_keys=True) + "\n")
    print(json.dumps({"graphs": len(rows), "rejected": len(rejected)}))
    return EXIT_OK


# ----- segment -----

def _segment_one(job):
    src, out_dir, mode, k, lam, similarity, fanout = job
    g = read_graph(Path(src).read_bytes())
    g = attach_superpixels(g, mode, k, lam, similarity, fanout)
    stem = g.protein_id
    labels = "".join(f"{i}\t{int(lab)}\n" for i, lab in enumerate(g.superpixels.labels))
    (Path(out_dir) / f"{stem}.labels.tsv").write_text(labels)
    (Path(out_dir) / f"{stem}.json").write_bytes(write_graph(g))
    return stem, g.superpixels.k


def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    mode = cfg.mode if cfg.mode != "full" else "superpixel"
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_manifest(args.manifest) if args.manifest else []
    graphs = [r["graph"] for r in rows] + list(args.graph or [])
    if not graphs:
        raise UsageError("segment needs --graph or --manifest")
    jobs = [(g, str(out), mode, cfg.k_superpixels, cfg.lambda_balance, args.similarity, args.fanout)
            for g in graphs]
    results = _map(_segment_one, jobs, args.jobs)
    if rows:
        write_manifest(out / "manifest.csv", [dict(r, graph=f"{stem}.json") for r, (stem, _) in zip(rows, results)])
    for stem, k in results:
        print(json.dumps({"id": stem, "superpixels": k}))
    return EXIT_OK


# ----- train / predict / evaluate -----

def _load_samples(rows: list[dict], task: str) -> list[Sample]:
    out = []
    for r in rows:
        target = float(r["target"])
        out.append(Sample(read_graph(Path(r["graph"]).read_bytes()), int(target) if task == "reaction" else target,
                          r["id"]))
    return out


def _read_split_file(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            cid, split = line.split("\t")
            out[cid.strip()] = split.strip()
    return out


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    rows = read_manifest(args.manifest)
    if args.split_file:
        splits = _read_split_file(args.split_file)
        for r in rows:
            r["split"] = splits.get(r["id"], "none")
    by = {s: [r for r in rows if r["split"] == s] for s in ("train", "val", "test")}
    if not by["val"] and args.val_from_train:
        by["val"] = by["train"]
    if not by["train"] or not by["val"]:
        raise EmptySplit("manifest needs non-empty train and val splits (or --val-from-train)")
    dataset = Dataset(_load_samples(by["train"], cfg.task), _load_samples(by["val"], cfg.task),
                      _load_samples(by["test"], cfg.task))
    modes = {s.graph.mode for s in dataset.train + dataset.val}
    if len(modes) != 1:
        raise ProtGraphError(f"graphs mix modes {sorted(modes)}")
    cfg.mode = modes.pop()
    params, history = train(cfg, dataset)
    save_checkpoint(args.checkpoint, params)
    write_history(args.history, history, cfg.task)
    print(json.dumps({"epochs": len(history), "parameters": count_parameters(params),
                      "final": {k: v for k, v in history[-1].items()}}, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    params = load_checkpoint(args.checkpoint)
    rows = read_manifest(args.manifest) if args.manifest else []
    rows += [{"id": Path(g).stem, "graph": g, "target": "nan"} for g in args.graph or []]
    if not rows:
        raise UsageError("predict needs --graph or --manifest")
    samples = [Sample(read_graph(Path(r["graph"]).read_bytes()), 0.0, r["id"]) for r in rows]
    out = predict(params, samples)
    lines = ["id,prediction"] if params.config.task == "affinity" else ["id,prediction,logits"]
    for s, o in zip(samples, out):
        if params.config.task == "affinity":
            lines.append(f"{s.id},{float(o)!r}")
        else:
            lines.append(f"{s.id},{int(np.argmax(o))}," + " ".join(repr(float(x)) for x in o))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _read_column(path, column: str) -> dict[str, str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames or column not in reader.fieldnames:
            raise ProtGraphError(f"{path} needs columns id and {column}")
        return {r["id"]: r[column] for r in reader}


def cmd_evaluate(args) -> int:
    preds = _read_column(args.predictions, "prediction")
    targets = _read_column(args.targets, "target")
    ids = sorted(set(preds) & set(targets))
    missing = sorted(set(targets) ^ set(preds))
    if missing:
        log.warning("%d ids present in only one file are ignored", len(missing))
    if args.task == "affinity":
        rmse, pr, sp = evaluate_regression([float(preds[i]) for i in ids], [float(targets[i]) for i in ids])
        report = {"rmse": rmse, "pearson": pr, "spearman": sp}
    else:
        with open(args.predictions, newline="") as fh:
            logits = {r["id"]: [float(x) for x in r["logits"].split()] for r in csv.DictReader(fh)}
        acc = evaluate_classification(np.array([logits[i] for i in ids]), [int(float(targets[i])) for i in ids])
        report = {"accuracy": acc}
    report["n"] = len(ids)
    text = json.dumps(report, sort_keys=True)
    print(text)
    if args.out_json:
        Path(args.out_json).write_text(text + "\n")
    if args.out_csv:
        keys = sorted(report)
        Path(args.out_csv).write_text(",".join(keys) + "\n" + ",".join(repr(report[k]) for k in keys) + "\n")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if not args.checkpoint and not args.graph:
        raise UsageError("inspect needs --checkpoint or --graph")
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
        print(json.dumps({"parameters": count_parameters(params), "config": asdict(params.config)}, sort_keys=True))
    if args.graph:
        g = read_graph(Path(args.graph).read_bytes())
        stats = {
            "protein_id": g.protein_id, "mode": g.mode,
            "structure": {"nodes": g.structure.n_nodes, "edges": g.structure.n_edges},
            "surface": {"nodes": g.surface.n_nodes, "edges": g.surface.n_edges},
            "cross_edges": int(len(g.cross_edges)),
            "fan_in_median": float(np.median(fan_in(g))),
            "violations": validate(g),
        }
        if g.superpixels is not None:
            stats["superpixels"] = {"k": g.superpixels.k, "edges": int(len(g.superpixels.edges))}
        if g.ligand is not None:
            stats["ligand"] = {"atoms": g.ligand.n_nodes, "bonds": g.ligand.n_edges}
        print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-file commands")
    common.add_argument("--config", help="flat key=value file with training/pipeline settings")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="protgraph", description="Multi-scale protein graph toolkit.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="dataset index -> graph files")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("full", "superpixel", "summary"))
    p.add_argument("--k", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--fanout", action="store_true")
    p.add_argument("--target-faces", type=int, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", parents=[common], help="graph -> superpixel labels and graph")
    p.add_argument("--graph", action="append")
    p.add_argument("--manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--mode", choices=("superpixel", "summary"))
    p.add_argument("--similarity", choices=("product", "gaussian"), default="product")
    p.add_argument("--fanout", action="store_true")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", parents=[common], help="manifest -> checkpoint and history CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--split-file")
    p.add_argument("--val-from-train", action="store_true", help="validate on the training split when val is empty")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--task", choices=("affinity", "reaction"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="checkpoint + graphs -> predictions CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", action="append")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="predictions + targets -> metrics")
    p.add_argument("--predictions", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--task", choices=("affinity", "reaction"), default="affinity")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", parents=[common], help="checkpoint or graph statistics")
    p.add_argument("--checkpoint")
    p.add_argument("--graph")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        return _emit_error("UsageError", str(exc), EXIT_USAGE)
    except (ProtGraphError, OSError, KeyError, json.JSONDecodeError) as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_DATA)
    except Exception as exc:  # noqa: BLE001 - last-resort handler, reported as internal
        return _emit_error(type(exc).__name__, str(exc), EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
