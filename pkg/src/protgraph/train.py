"""Training loop with plateau learning-rate decay, evaluation metrics and dataset splits."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .encoder import (
    AdamState,
    ModelConfig,
    ModelParams,
    adam_step,
    clip_gradients,
    dropout_rng,
    forward,
    init_params,
)
from .errors import EmptySplit, LengthMismatch, NonFiniteError
from .graphs import MultiScaleGraph

log = logging.getLogger(__name__)

TASKS = ("affinity", "reaction")


@dataclass
class TrainConfig:
    hidden_surface: int = 150
    hidden_structure: int = 200
    hidden_ligand: int = 300
    steps_surface: int = 6
    steps_structure: int = 5
    steps_ligand: int = 4
    mlp_hidden: int = 512
    lr: float = 0.001
    lr_decay: float = 0.9
    plateau_threshold: float = 0.01
    patience: int = 5
    clip_norm: float = 10.0
    dropout: float = 0.0
    epochs: int = 100
    seed: int = 0
    k_superpixels: int = 20
    lambda_balance: float = 0.5
    cutoff: float = 10.0
    task: str = "affinity"
    batch_size: int = 1
    n_classes: int = 384
    mode: str = "full"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        positive = ("hidden_surface", "hidden_structure", "hidden_ligand", "steps_surface", "steps_structure",
                    "steps_ligand", "mlp_hidden", "lr", "lr_decay", "patience", "clip_norm", "epochs",
                    "k_superpixels", "cutoff", "batch_size", "n_classes")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.plateau_threshold < 0 or self.lambda_balance < 0:
            raise ValueError("plateau_threshold and lambda_balance must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_surface=self.hidden_surface, steps_surface=self.steps_surface,
            hidden_structure=self.hidden_structure, steps_structure=self.steps_structure,
            hidden_ligand=self.hidden_ligand, steps_ligand=self.steps_ligand,
            mlp_hidden=self.mlp_hidden, task=self.task, n_classes=self.n_classes,
            mode=self.mode, dropout=self.dropout,
        )

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string or typed values; unknown keys raise ValueError."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = {"int": int, "float": float, "str": str}[types[key]]
            kwargs[key] = kind(raw)
        return cls(**kwargs)


@dataclass(eq=False)
class Sample:
    graph: MultiScaleGraph
    target: float  # affinity value, or class index for reaction
    id: str = ""


@dataclass(eq=False)
class Dataset:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample] = field(default_factory=list)


@dataclass
class EvalReport:
    rmse: float | None = None
    pearson: float | None = None
    spearman: float | None = None
    accuracy: float | None = None
    history: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: v for k, v in (("rmse", self.rmse), ("pearson", self.pearson),
                                   ("spearman", self.spearman), ("accuracy", self.accuracy)) if v is not None}


def _check_lengths(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} predictions for {len(b)} targets")
    if len(a) == 0:
        raise LengthMismatch("empty prediction vector")


def pearson(x, y) -> float:
    """Pearson correlation; NaN when either side has zero variance."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_lengths(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        return float("nan")
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_lengths(x, y)
    return pearson(rankdata(x), rankdata(y))


def evaluate_regression(preds, targets) -> tuple[float, float, float]:
    preds, targets = np.asarray(preds, dtype=np.float64).ravel(), np.asarray(targets, dtype=np.float64).ravel()
    _check_lengths(preds, targets)
    rmse = float(np.sqrt(np.mean((preds - targets) ** 2)))
    return rmse, pearson(preds, targets), spearman(preds, targets)


def evaluate_classification(logits, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    _check_lengths(logits, labels)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("labels out of range for the logit width")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def predict(params: ModelParams, samples: list[Sample]) -> np.ndarray:
    """Eval-mode outputs: (n,) affinities or (n, C) logits."""
    outs = [forward(s.graph, params).value for s in samples]
    if params.config.task == "affinity":
        return np.array([o.item() for o in outs])
    return np.concatenate(outs, axis=0)


def evaluate(params: ModelParams, samples: list[Sample]) -> EvalReport:
    out = predict(params, samples)
    targets = np.array([s.target for s in samples])
    if params.config.task == "affinity":
        return EvalReport(*evaluate_regression(out, targets))
    return EvalReport(accuracy=evaluate_classification(out, targets.astype(np.int64)))


class PlateauScheduler:
    """Multiply the learning rate by ``decay`` after ``patience`` epochs without
    relative improvement greater than ``threshold``."""

    def __init__(self, lr: float, decay: float, threshold: float, patience: int, maximize: bool = False):
        self.lr, self.decay, self.threshold, self.patience = lr, decay, threshold, patience
        self.maximize = maximize
        self.best: float | None = None
        self.bad_epochs = 0

    def _improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        if self.maximize:
            return metric > self.best * (1 + self.threshold) if self.best > 0 else metric > self.best
        return metric < self.best * (1 - self.threshold)

    def step(self, metric: float) -> bool:
        """Record one epoch's metric; return True when the rate was decayed."""
        if np.isnan(metric):
            metric = -np.inf if self.maximize else np.inf
        if self._improved(metric):
            self.best, self.bad_epochs = metric, 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr *= self.decay
            self.bad_epochs = 0
            return True
        return False


HISTORY_FIELDS = {
    "affinity": ["epoch", "lr", "train_loss", "val_rmse", "val_pearson", "val_spearman", "lr_decayed"],
    "reaction": ["epoch", "lr", "train_loss", "val_accuracy", "lr_decayed"],
}


def _sample_loss(params: ModelParams, sample: Sample, rng) -> ad.Tensor:
    out = forward(sample.graph, params, rng)
    if params.config.task == "affinity":
        return ad.mse_loss(out, np.array([[float(sample.target)]]))
    return ad.cross_entropy_loss(out, [int(sample.target)])


def train(cfg: TrainConfig, dataset: Dataset, params: ModelParams | None = None) -> tuple[ModelParams, list[dict]]:
    """Per-sample Adam with gradient accumulation over ``batch_size`` samples.

    Sample order per epoch comes from a generator seeded by (seed, epoch), and
    dropout masks from a counter-based stream, so equal seeds give identical
    histories.
    """
    if not dataset.train:
        raise EmptySplit("training split is empty")
    if not dataset.val:
        raise EmptySplit("validation split is empty")
    if params is None:
        params = init_params(cfg.model_config(), cfg.seed)
    values = params.values()
    state = AdamState()
    regression = cfg.task == "affinity"
    sched = PlateauScheduler(cfg.lr, cfg.lr_decay, cfg.plateau_threshold, cfg.patience, maximize=not regression)
    history = []
    counter = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset.train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            params.zero_grad()
            for idx in batch:
                rng = dropout_rng(cfg.seed, counter) if cfg.dropout > 0 else None
                counter += 1
                loss = _sample_loss(params, dataset.train[idx], rng)
                loss.backward(np.full_like(loss.value, 1.0 / len(batch)))
                losses.append(loss.value.item())
            grads, _ = clip_gradients(params.grads(), cfg.clip_norm)
            adam_step(values, grads, state, sched.lr)
            for name, v in values.items():
                if not np.all(np.isfinite(v)):
                    raise NonFiniteError(f"parameter {name} became non-finite at epoch {epoch}")
        report = evaluate(params, dataset.val)
        row = {"epoch": epoch, "lr": sched.lr, "train_loss": float(np.mean(losses))}
        if regression:
            row.update(val_rmse=report.rmse, val_pearson=report.pearson, val_spearman=report.spearman)
            decayed = sched.step(report.rmse)
        else:
            row.update(val_accuracy=report.accuracy)
            decayed = sched.step(report.accuracy)
        row["lr_decayed"] = int(decayed)
        history.append(row)
        log.info("epoch %d %s", epoch, row)
    return params, history


def history_csv(history: list[dict], task: str = "affinity") -> str:
    """CSV text with floats written via repr so equal runs give equal bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = HISTORY_FIELDS[task]
    writer.writerow(cols)
    for row in history:
        writer.writerow([repr(float(row[c])) if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()


def write_history(path, history: list[dict], task: str = "affinity") -> None:
    Path(path).write_text(history_csv(history, task))


# ----- splits -----

def _nw_key_row_scan(a: np.ndarray, b: np.ndarray, base: int) -> int:
    """Best alignment key ``score*B^2 + matches*B - length`` via row-wise DP.

    Each row's horizontal gap chain is a running maximum, so rows vectorize.
    """
    sq = base * base
    gap = -sq - 1  # score -1, no match, one more column
    diag_match = sq + base - 1
    diag_mismatch = -1  # score 0, no match, one more column
    m = len(b)
    cols = np.arange(m + 1, dtype=np.int64)
    prev = gap * cols
    for i in range(1, len(a) + 1):
        step = np.where(b == a[i - 1], diag_match, diag_mismatch)
        t = np.empty(m + 1, dtype=np.int64)
        t[0] = gap * i
        t[1:] = np.maximum(prev[:-1] + step, prev[1:] + gap)
        prev = np.maximum.accumulate(t - gap * cols) + gap * cols
    return int(prev[-1])


def alignment_identity(s1: str, s2: str) -> float:
    """Global-alignment identity: matches / alignment length.

    Scoring is match 1, mismatch 0, gap -1. Among equal-score alignments the
    one with more matches wins, then the shorter one.
    """
    if not s1 and not s2:
        return 1.0
    if not s1 or not s2:
        return 0.0
    a = np.frombuffer(s1.encode(), dtype=np.uint8)
    b = np.frombuffer(s2.encode(), dtype=np.uint8)
    base = len(a) + len(b) + 1
    key = _nw_key_row_scan(a, b, base)
    length = (-key) % base
    rest = (key + length) // base
    matches = rest % base
    return matches / length


def identity_matrix(sequences: list[str]) -> np.ndarray:
    n = len(sequences)
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = alignment_identity(sequences[i], sequences[j])
    return out


def identity_clusters(sequences: list[str], threshold: float) -> np.ndarray:
    """Single-linkage cluster ids (numbered by first member) at identity >= threshold %."""
    if not 0 < threshold <= 100:
        raise ValueError("threshold must lie in (0, 100]")
    ident = identity_matrix(sequences) * 100.0
    n = len(sequences)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if ident[i, j] >= threshold - 1e-9:
                parent[find(j)] = find(i)
    roots = [find(i) for i in range(n)]
    first = {}
    return np.array([first.setdefault(r, len(first)) for r in roots], dtype=np.int64)


SPLITS = ("train", "val", "test")


def _balance(cluster_sizes: list[int], ratios, rng: np.random.Generator) -> list[str]:
    total = sum(cluster_sizes)
    targets = np.asarray(ratios, dtype=np.float64) * total
    filled = np.zeros(3)
    order = rng.permutation(len(cluster_sizes))
    order = sorted(order, key=lambda c: -cluster_sizes[c])  # stable: seeded order among equal sizes
    out = [""] * len(cluster_sizes)
    for c in order:
        deficit = targets - filled
        s = int(np.argmax(deficit))
        out[c] = SPLITS[s]
        filled[s] += cluster_sizes[c]
    return out


def split_by_identity(sequences: list[str], threshold: float = 30.0, seed: int = 0,
                      ratios=(0.8, 0.1, 0.1)) -> list[str]:
    """Assign whole identity clusters to train/val/test by greedy size balancing."""
    clusters = identity_clusters(sequences, threshold)
    sizes = np.bincount(clusters).tolist() if len(clusters) else []
    assign = _balance(sizes, ratios, np.random.default_rng(seed))
    return [assign[c] for c in clusters]


def split_random(ids: list, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> dict:
    """Seeded shuffle, then consecutive blocks of rounded sizes; returns id -> split."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if len(ratios) != 3 or np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    n = len(ids)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = min(int(round(ratios[1] * n)), n - n_train)
    labels = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val))
    return {ids[p]: str(labels[k]) for k, p in enumerate(perm)}
