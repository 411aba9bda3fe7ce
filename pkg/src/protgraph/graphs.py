"""Graph containers shared by the builders, the encoder and serialization."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

MODES = ("full", "superpixel", "summary")


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        return a.shape == b.shape and a.dtype.kind == b.dtype.kind and np.array_equal(a, b)
    return a == b


class _ArrayEq:
    """Field-wise equality that compares numpy arrays exactly."""

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return all(_same(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


@dataclass(eq=False)
class LayerGraph(_ArrayEq):
    """Undirected graph with node/edge features; edges stored once with a < b."""

    node_features: np.ndarray  # (n, d)
    edges: np.ndarray  # (m, 2) int64
    edge_features: np.ndarray  # (m, e)
    residue_ids: np.ndarray  # (n,) int64

    @property
    def n_nodes(self) -> int:
        return len(self.node_features)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def directed(self):
        """Both edge directions: (src, dst, edge_features)."""
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        return src, dst, np.concatenate([self.edge_features, self.edge_features])


@dataclass(eq=False)
class StructureGraph(LayerGraph):
    cutoff: float = 10.0


@dataclass(eq=False)
class SurfaceGraph(LayerGraph):
    pass


@dataclass(eq=False)
class SuperpixelGraph(_ArrayEq):
    labels: np.ndarray  # (n_surface,) superpixel id per surface vertex
    node_features: np.ndarray  # (k, 16) mean | std | max | min blocks
    edges: np.ndarray  # (p, 2) int64, a < b
    weights: np.ndarray  # (p,) summed 1-D Wasserstein distances
    residue_ids: np.ndarray  # (k,) majority residue id
    member_residues: list = field(default_factory=list)  # per superpixel, sorted residue ids

    @property
    def k(self) -> int:
        return len(self.node_features)

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == m) for m in range(self.k)]

    def as_layer(self, edge_width: int) -> LayerGraph:
        """Superpixel layer for message passing; W1 in column 0, zeros elsewhere."""
        ef = np.zeros((len(self.edges), edge_width))
        if len(self.edges):
            ef[:, 0] = self.weights
        return LayerGraph(self.node_features, self.edges, ef, self.residue_ids)


@dataclass(eq=False)
class LigandGraph(_ArrayEq):
    node_features: np.ndarray  # (n, 88)
    edges: np.ndarray  # (m, 2)
    edge_features: np.ndarray  # (m, 6)
    flags: dict = field(default_factory=dict)

    n_nodes = LayerGraph.n_nodes
    n_edges = LayerGraph.n_edges
    directed = LayerGraph.directed


@dataclass(eq=False)
class MultiScaleGraph(_ArrayEq):
    protein_id: str
    structure: StructureGraph
    surface: SurfaceGraph
    cross_edges: np.ndarray  # (c, 2): (surface-layer node, structure node)
    mode: str = "full"
    superpixels: SuperpixelGraph | None = None
    ligand: LigandGraph | None = None
    fanout: bool = False

    def surface_layer(self) -> LayerGraph:
        """The layer the cross edges start from: full surface or superpixels."""
        if self.mode == "full":
            return self.surface
        return self.superpixels.as_layer(self.surface.edge_features.shape[1])
