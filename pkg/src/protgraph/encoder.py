"""Multi-scale protein encoder: WLN message passing, surface-to-residue fusion, heads."""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch
from .graphs import LigandGraph, MultiScaleGraph
from .io.mol import LigandRaw
from .tables import LIGAND_SYMBOL_INDEX, LIGAND_SYMBOLS, STANDARD_VALENCE

CHECKPOINT_VERSION = 1

# ligand feature layout
N_DEGREE = 10
N_IMPLICIT = 6
N_EXPLICIT = 6
LIGAND_NODE_DIM = len(LIGAND_SYMBOLS) + N_DEGREE + N_IMPLICIT + N_EXPLICIT + 1  # 88
LIGAND_EDGE_DIM = 6
SUMMARY_DIM = 16

# fixed unit scaling of structure-layer inputs: SASA in 100 A^2, distances in 10 A
SASA_UNIT = 100.0
DISTANCE_UNIT = 10.0


def _standard_valence(element: str, charge: int) -> int | None:
    base = STANDARD_VALENCE.get(element)
    if base is None:
        return None
    if element in ("N", "O", "P", "S"):
        return base + charge  # e.g. ammonium N+ takes four bonds
    if element == "C":
        return base - abs(charge)
    return base


def featurize_ligand(raw: LigandRaw) -> LigandGraph:
    """88-dim atom features and 6-dim bond features.

    Atom: symbol one-hot (65) | heavy-neighbour degree (10) | implicit valence
    (6) | explicit valence, slot ``v - 1`` (6) | aromatic. Bond: single /
    double / triple / aromatic one-hot | conjugated | in ring. Aromatic bonds
    add 1.5 to the explicit valence, rounded half-up. Atoms whose explicit
    valence exceeds the standard valence get implicit valence 0 and are listed
    under ``flags["valence_overflow"]``.
    """
    n = raw.n_atoms
    bonds = np.asarray(raw.bonds, dtype=np.int64).reshape(-1, 3)
    heavy = np.array([e != "H" for e in raw.elements], dtype=bool)
    degree = np.zeros(n, dtype=np.int64)
    valence2 = np.zeros(n, dtype=np.int64)  # twice the bond-order sum, keeps 1.5 exact
    aromatic = np.zeros(n, dtype=bool)
    has_double = np.zeros(n, dtype=bool)
    for i, j, order in bonds:
        degree[i] += heavy[j]
        degree[j] += heavy[i]
        valence2[[i, j]] += 3 if order == 4 else 2 * order
        if order == 4:
            aromatic[[i, j]] = True
        if order == 2:
            has_double[[i, j]] = True
    explicit = (valence2 + 1) // 2

    feats = np.zeros((n, LIGAND_NODE_DIM))
    overflow = []
    off_deg = len(LIGAND_SYMBOLS)
    off_imp = off_deg + N_DEGREE
    off_exp = off_imp + N_IMPLICIT
    for a, elem in enumerate(raw.elements):
        feats[a, LIGAND_SYMBOL_INDEX.get(elem, LIGAND_SYMBOL_INDEX["unknown"])] = 1.0
        feats[a, off_deg + min(degree[a], N_DEGREE - 1)] = 1.0
        std = _standard_valence(elem, int(raw.charges[a]))
        implicit = 0
        if std is not None:
            implicit = std - explicit[a]
            if implicit < 0:
                overflow.append(a)
                implicit = 0
        feats[a, off_imp + min(implicit, N_IMPLICIT - 1)] = 1.0
        feats[a, off_exp + int(np.clip(explicit[a] - 1, 0, N_EXPLICIT - 1))] = 1.0
        feats[a, -1] = float(aromatic[a])

    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from((int(i), int(j)) for i, j, _ in bonds)
    bridges = {tuple(sorted(e)) for e in nx.bridges(g)}

    edges = np.sort(bonds[:, :2], axis=1) if len(bonds) else np.zeros((0, 2), dtype=np.int64)
    efeats = np.zeros((len(bonds), LIGAND_EDGE_DIM))
    for k, ((i, j), order) in enumerate(zip(edges, bonds[:, 2])):
        efeats[k, order - 1] = 1.0
        conj = (aromatic[i] or has_double[i]) and (aromatic[j] or has_double[j])
        efeats[k, 4] = float(conj)
        efeats[k, 5] = float((int(i), int(j)) not in bridges)
    order = np.lexsort((edges[:, 1], edges[:, 0])) if len(edges) else np.zeros(0, dtype=np.int64)
    return LigandGraph(feats, edges[order].astype(np.int64), efeats[order],
                       {"valence_overflow": overflow} if overflow else {})


@dataclass
class ModelConfig:
    surface_in: int = 4
    surface_edge: int = 9
    hidden_surface: int = 150
    steps_surface: int = 6
    structure_in: int = 33
    structure_edge: int = 2
    hidden_structure: int = 200
    steps_structure: int = 5
    ligand_in: int = LIGAND_NODE_DIM
    ligand_edge: int = LIGAND_EDGE_DIM
    hidden_ligand: int = 300
    steps_ligand: int = 4
    mlp_hidden: int = 512
    task: str = "affinity"
    n_classes: int = 384
    mode: str = "full"
    activation: str | None = None  # default: relu for affinity, leaky_relu for reaction
    dropout: float = 0.0
    # typical node degree per layer; U2 starts at Glorot / degree so summed messages stay O(1)
    degree_surface: float = 6.0
    degree_structure: float = 12.0
    degree_ligand: float = 3.0

    def __post_init__(self):
        if self.task not in ("affinity", "reaction"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.mode not in ("full", "superpixel", "summary"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.activation is None:
            self.activation = "relu" if self.task == "affinity" else "leaky_relu"
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        for name in ("hidden_surface", "hidden_structure", "hidden_ligand", "mlp_hidden",
                     "steps_surface", "steps_structure", "steps_ligand", "n_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def surface_input_dim(self) -> int:
        return self.surface_in if self.mode == "full" else SUMMARY_DIM

    @property
    def act(self):
        return ad.relu if self.activation == "relu" else ad.leaky_relu


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def scope(self, prefix: str) -> dict[str, Tensor]:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def values(self) -> dict[str, np.ndarray]:
        return {k: t.value for k, t in self.tensors.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in self.tensors.items()}


def _wln_shapes(d_in: int, d_edge: int, h: int) -> dict[str, tuple]:
    return {
        "W_in": (d_in, h),
        "U1": (h, h), "U2": (h, h), "b": (h,),
        "V": (h + d_edge, h), "bV": (h,),
        "W0": (h, h), "W1": (d_edge, h), "W2": (h, h),
    }


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    if cfg.mode != "summary":
        shapes.update({f"surface.{k}": s for k, s in
                       _wln_shapes(cfg.surface_input_dim, cfg.surface_edge, cfg.hidden_surface).items()})
    fused = SUMMARY_DIM if cfg.mode == "summary" else cfg.hidden_surface
    shapes["fusion.W"] = (cfg.structure_in + fused, cfg.hidden_structure)
    shapes["fusion.b"] = (cfg.hidden_structure,)
    shapes.update({f"structure.{k}": s for k, s in
                   _wln_shapes(cfg.hidden_structure, cfg.structure_edge, cfg.hidden_structure).items()})
    if cfg.task == "affinity":
        shapes.update({f"ligand.{k}": s for k, s in
                       _wln_shapes(cfg.ligand_in, cfg.ligand_edge, cfg.hidden_ligand).items()})
        head_in, head_out = cfg.hidden_structure + cfg.hidden_ligand, 1
    else:
        head_in, head_out = cfg.hidden_structure, cfg.n_classes
    shapes["head.W1"] = (head_in, cfg.mlp_hidden)
    shapes["head.b1"] = (cfg.mlp_hidden,)
    shapes["head.W2"] = (cfg.mlp_hidden, head_out)
    shapes["head.b2"] = (head_out,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform matrices, zero biases, drawn in a fixed name order.

    The neighbour-sum matrix U2 of each WLN is shrunk by the layer's typical
    degree so activations do not grow geometrically with the step count.
    """
    rng = np.random.default_rng(seed)
    degree = {"surface": cfg.degree_surface, "structure": cfg.degree_structure, "ligand": cfg.degree_ligand}
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        if len(shape) == 1:
            value = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-limit, limit, size=shape)
            layer, _, kind = name.partition(".")
            if kind == "U2":
                value /= max(degree[layer], 1.0)
        tensors[name] = ad.parameter(value)
    return ModelParams(cfg, tensors)


def count_parameters(params) -> int:
    """Total scalar count; accepts ModelParams or any mapping of arrays/tensors."""
    items = params.tensors.values() if isinstance(params, ModelParams) else params.values()
    return int(sum(np.asarray(t.value if isinstance(t, Tensor) else t).size for t in items))


def wln_forward(graph, weights: dict[str, Tensor], steps: int, act=ad.relu, node_feats=None,
                edge_feats=None) -> Tensor:
    """WLN encoder: ``steps`` shared-weight rounds, then the set-comparison readout.

    m0 = f W_in
    m  = act(m U1 + (sum_u act([m_u, f_uv] V + bV)) U2 + b)
    h_v = sum_u (m_u W0) * (f_uv W1) * (m_v W2)
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = graph.n_nodes
    src, dst, efeat = graph.directed()
    if edge_feats is not None:
        efeat = np.concatenate([edge_feats, edge_feats])
    x = ad.as_tensor(graph.node_features if node_feats is None else node_feats)
    if x.shape[0] != n:
        raise ShapeMismatch(f"{x.shape[0]} node feature rows for {n} nodes")
    efeat = np.asarray(efeat, dtype=np.float64)
    e = ad.as_tensor(efeat if efeat.ndim == 2 else efeat.reshape(len(src), -1))
    m = x @ weights["W_in"]
    for _ in range(steps):
        msg = act(ad.concat([ad.gather(m, src), e], axis=1) @ weights["V"] + weights["bV"])
        agg = ad.segment_sum(msg, dst, n)
        m = act(m @ weights["U1"] + agg @ weights["U2"] + weights["b"])
    left = ad.gather(m @ weights["W0"], src)
    right = ad.gather(m @ weights["W2"], dst)
    return ad.segment_sum(left * (e @ weights["W1"]) * right, dst, n)


def fuse_surface_to_structure(h_s, cross_edges: np.ndarray, f_b, weights: dict[str, Tensor], act=ad.relu) -> Tensor:
    """x_B = act([f_B, mean of mapped surface vectors] W + b); no mapped vectors -> zero mean."""
    f_b = ad.as_tensor(f_b)
    n_b = f_b.shape[0]
    cross = np.asarray(cross_edges, dtype=np.int64).reshape(-1, 2)
    counts = np.bincount(cross[:, 1], minlength=n_b).astype(np.float64)
    pooled = ad.segment_sum(ad.gather(h_s, cross[:, 0]), cross[:, 1], n_b)
    avg = pooled * (1.0 / np.maximum(counts, 1.0))[:, None]
    return act(ad.concat([f_b, avg], axis=1) @ weights["W"] + weights["b"])


def structure_inputs(g: MultiScaleGraph) -> tuple[np.ndarray, np.ndarray]:
    """Structure node/edge features with SASA and distance moved to O(1) units."""
    f_b = np.array(g.structure.node_features, dtype=np.float64)
    e_b = np.array(g.structure.edge_features, dtype=np.float64).reshape(g.structure.n_edges, -1)
    f_b[:, -2] /= SASA_UNIT
    if e_b.shape[1]:
        e_b[:, 0] /= DISTANCE_UNIT
    return f_b, e_b


def encode_protein(g: MultiScaleGraph, params: ModelParams) -> Tensor:
    """c_P (1, hidden_structure): surface WLN, fusion, structure WLN, sum over residues."""
    cfg = params.config
    if cfg.mode != g.mode:
        raise ShapeMismatch(f"model built for mode {cfg.mode!r}, graph is {g.mode!r}")
    act = cfg.act
    layer = g.surface_layer()
    if cfg.mode == "summary":
        h_s = ad.as_tensor(layer.node_features)
    else:
        h_s = wln_forward(layer, params.scope("surface"), cfg.steps_surface, act)
    f_b, e_b = structure_inputs(g)
    x_b = fuse_surface_to_structure(h_s, g.cross_edges, f_b, params.scope("fusion"), act)
    h_b = wln_forward(g.structure, params.scope("structure"), cfg.steps_structure, act, node_feats=x_b,
                      edge_feats=e_b)
    return ad.tsum(h_b, axis=0, keepdims=True)


def encode_ligand(lg: LigandGraph, params: ModelParams) -> Tensor:
    cfg = params.config
    h = wln_forward(lg, params.scope("ligand"), cfg.steps_ligand, cfg.act)
    return ad.tsum(h, axis=0, keepdims=True)


def _head(x: Tensor, params: ModelParams, rng) -> Tensor:
    cfg = params.config
    w = params.scope("head")
    if x.shape[1] != w["W1"].shape[0]:
        raise ShapeMismatch(f"head expects width {w['W1'].shape[0]}, got {x.shape[1]}")
    hidden = ad.dropout(cfg.act(x @ w["W1"] + w["b1"]), cfg.dropout, rng)
    return hidden @ w["W2"] + w["b2"]


def predict_affinity(c_p, c_l, params: ModelParams, rng=None) -> Tensor:
    """Scalar affinity (1, 1) from the concatenated protein and ligand embeddings."""
    return _head(ad.concat([ad.as_tensor(c_p), ad.as_tensor(c_l)], axis=1), params, rng)


def predict_class(c_p, params: ModelParams, rng=None) -> Tensor:
    """Class logits (1, n_classes)."""
    return _head(ad.as_tensor(c_p), params, rng)


def forward(g: MultiScaleGraph, params: ModelParams, rng=None) -> Tensor:
    c_p = encode_protein(g, params)
    if params.config.task == "affinity":
        if g.ligand is None:
            raise ShapeMismatch("affinity prediction needs a ligand graph")
        return predict_affinity(c_p, encode_ligand(g.ligand, params), params, rng)
    return predict_class(c_p, params, rng)


def dropout_rng(seed: int, counter: int) -> np.random.Generator:
    """Counter-based stream: the same (seed, counter) always yields the same mask."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, counter]))


def mse_loss(pred, target) -> Tensor:
    return ad.mse_loss(pred, target)


def cross_entropy_loss(logits, labels) -> Tensor:
    return ad.cross_entropy_loss(logits, labels)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale every gradient by one factor so the global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum((g * g).sum() for g in grads.values())))
    if norm <= max_norm or norm == 0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adam_step(values: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam, updating ``values`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for k, g in grads.items():
        m = state.m.get(k, np.zeros_like(g))
        v = state.v.get(k, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        values[k] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_checkpoint(path, params: ModelParams) -> None:
    """npz archive of named tensors plus the model config as JSON."""
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(params.config)}, sort_keys=True)
    buf = io.BytesIO()
    arrays = {f"param/{k}": t.value for k, t in params.tensors.items()}
    np.savez(buf, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> ModelParams:
    with np.load(io.BytesIO(Path(path).read_bytes())) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        cfg = ModelConfig(**meta["config"])
        tensors = {}
        for name, shape in parameter_shapes(cfg).items():
            value = z[f"param/{name}"]
            if value.shape != shape:
                raise ShapeMismatch(f"checkpoint tensor {name} has shape {value.shape}, expected {shape}")
            tensors[name] = ad.parameter(value)
    return ModelParams(cfg, tensors)
